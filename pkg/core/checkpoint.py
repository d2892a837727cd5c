"""Training checkpoints.

A checkpoint is one ``.npz`` archive holding parameter arrays
(``param/<name>``), anchor-queue arrays (``queue/...``), optimizer moments
(``optim/...``) and a JSON metadata string (``__meta__``) with the format
version, the run configuration, tunable flags and the trainer position.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from .exceptions import CheckpointError
from .parameters import ParameterStore

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
_META_KEY = "__meta__"
_SECTIONS = ("param", "queue", "optim")


@dataclass
class CheckpointData:
    params: Dict[str, np.ndarray]
    queues: Dict[str, np.ndarray] = field(default_factory=dict)
    optim: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)

    def restore_params(self, store: ParameterStore) -> None:
        store.load_state(self.params, strict=True)
        for name, tunable in self.meta.get("tunable", {}).items():
            if name in store:
                store.set_tunable(name, bool(tunable))


def checkpoint_save(
    path: Union[str, Path],
    store: ParameterStore,
    queues: Optional[Dict[str, np.ndarray]] = None,
    optim: Optional[Dict[str, np.ndarray]] = None,
    meta: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload: Dict[str, np.ndarray] = {}
    for name, value in store.state().items():
        payload[f"param/{name}"] = value
    for key, value in (queues or {}).items():
        payload[f"queue/{key}"] = np.asarray(value)
    for key, value in (optim or {}).items():
        payload[f"optim/{key}"] = np.asarray(value)
    full_meta = dict(meta or {})
    full_meta["version"] = CHECKPOINT_VERSION
    full_meta["dtype"] = str(store.dtype)
    full_meta["order"] = list(store)
    full_meta["tunable"] = {name: store.is_tunable(name) for name in store}
    payload[_META_KEY] = np.array(json.dumps(full_meta, sort_keys=True))
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as handle:
        np.savez(handle, **payload)
    tmp.replace(path)
    logger.debug("Saved checkpoint %s (%d arrays)", path, len(payload))
    return path


def checkpoint_load(path: Union[str, Path]) -> CheckpointData:
    path = Path(path)
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    with archive:
        if _META_KEY not in archive.files:
            raise CheckpointError(f"{path}: missing metadata")
        meta = json.loads(str(archive[_META_KEY]))
        version = meta.get("version")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: checkpoint version {version}, this build reads {CHECKPOINT_VERSION}")
        sections: Dict[str, Dict[str, np.ndarray]] = {name: {} for name in _SECTIONS}
        for key in archive.files:
            if key == _META_KEY:
                continue
            section, _, name = key.partition("/")
            if section not in sections:
                raise CheckpointError(f"{path}: unexpected entry '{key}'")
            sections[section][name] = archive[key]
    order = meta.get("order") or list(sections["param"])
    params = {name: sections["param"][name] for name in order if name in sections["param"]}
    return CheckpointData(params=params, queues=sections["queue"], optim=sections["optim"], meta=meta)


__all__ = ["CHECKPOINT_VERSION", "CheckpointData", "checkpoint_load", "checkpoint_save"]
