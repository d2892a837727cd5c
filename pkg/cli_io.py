"""CLI IO helpers: config files, `--set` overrides and report writers."""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from core.config import RunConfig
from core.exceptions import ConfigurationError

logger = logging.getLogger('s2d.cli_io')


def parse_override(item: str) -> Tuple[str, Any]:
    """`section.key=value`; the value is read as JSON when it parses, else kept as text."""
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigurationError(f"Override '{item}' is not of the form section.key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def parse_overrides(items: Optional[Sequence[str]]) -> Dict[str, Any]:
    return dict(parse_override(item) for item in items or [])


def read_json(path: Path) -> Any:
    try:
        with Path(path).open("r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"Cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path} is not valid JSON: {exc}") from exc


def load_run_config(
    path: Optional[str],
    overrides: Optional[Sequence[str]] = None,
    fallback: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """RunConfig from a JSON file (or `fallback`, or defaults) plus dotted overrides."""
    if path:
        config = RunConfig.from_dict(read_json(Path(path)))
        logger.debug("Loaded config %s", path)
    elif fallback is not None:
        config = RunConfig.from_dict(fallback)
    else:
        config = RunConfig()
    parsed = parse_overrides(overrides)
    if parsed:
        logger.debug("Applying overrides %s", parsed)
        config = config.with_overrides(parsed)
    return config.validate()


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    logger.debug("Wrote %s", path)
    return path


def write_csv(path: Path, rows: Iterable[Mapping[str, Any]], fields: Optional[List[str]] = None) -> Path:
    rows = list(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fields is None:
        fields = list(rows[0]) if rows else []
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row.get(key) for key in fields})
    logger.debug("Wrote %d rows to %s", len(rows), path)
    return path


__all__ = ["load_run_config", "parse_override", "parse_overrides", "read_json", "write_csv", "write_json"]
