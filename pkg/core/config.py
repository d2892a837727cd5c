"""Run configuration records.

`RunConfig` is the single hyperparameter record every command runs from. It
round-trips through plain JSON (`from_dict` / `to_dict`) and is validated as a
whole before any run; `validate` reports every violated constraint at once.
"""
from __future__ import annotations

import copy
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional

import numpy as np

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

FUSIONS = ("none", "mcp", "cap")
ADAPTERS = ("none", "vanilla", "temporal", "tma")
SUPERVISIONS = ("one_hot", "label_smoothing", "sdl")
MODES = ("sfer", "dfer")
CLIP_MODES = ("uniform-1", "uniform-2")
DTYPES = ("float64", "float32")


@dataclass
class BackboneConfig:
    image_size: int = 32
    patch_size: int = 8
    channels: int = 3
    embed_dim: int = 32
    layers: int = 2
    heads: int = 4
    mlp_ratio: int = 4
    ln_eps: float = 1e-5

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size ** 2

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    def errors(self) -> List[str]:
        problems = []
        if self.image_size <= 0 or self.patch_size <= 0 or self.image_size % self.patch_size:
            problems.append(f"backbone: image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.heads <= 0 or self.embed_dim % self.heads:
            problems.append(f"backbone: embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.layers < 1 or self.mlp_ratio < 1 or self.channels < 1:
            problems.append("backbone: layers, mlp_ratio and channels must be positive")
        return problems


@dataclass
class McpConfig:
    fusion: str = "mcp"
    bottleneck_dim: Optional[int] = None
    lambda_init: float = 1.0

    def resolved_bottleneck(self, embed_dim: int) -> int:
        return self.bottleneck_dim if self.bottleneck_dim is not None else max(1, embed_dim // 4)


@dataclass
class TmaConfig:
    adapter: str = "tma"
    gamma: float = 0.25
    heads: Optional[int] = None

    def hidden_dim(self, embed_dim: int) -> float:
        return self.gamma * embed_dim

    def resolved_heads(self, backbone_heads: int) -> int:
        return self.heads if self.heads is not None else backbone_heads


@dataclass
class SdlConfig:
    supervision: str = "sdl"
    queue_size: int = 16
    top_k: int = 2
    eta_max: float = 1.0
    label_smoothing: float = 0.1


@dataclass
class OptimConfig:
    lr_base: float = 1e-3
    batch_size: int = 8
    epochs: int = 50
    sfer_epochs: int = 0
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.05
    oversample: bool = False

    @property
    def lr(self) -> float:
        """Base rate scaled linearly by batch size: lr_base * N_bs / 8."""
        return self.lr_base * self.batch_size / 8.0


@dataclass
class DataConfig:
    num_train: int = 600
    num_test: int = 120
    sequence_length: int = 16
    frames: int = 8
    image_size: int = 32
    channels: int = 3
    keypoints: int = 5
    landmark_size: int = 32
    heatmap_sigma: float = 1.5
    speed: int = 1
    appearance_classes: int = 2
    motion_classes: int = 4
    noise_std: float = 0.05
    occlusion: bool = False
    occlusion_noise_std: float = 0.25
    clip_mode: str = "uniform-1"
    manifest: Optional[str] = None

    @property
    def num_classes(self) -> int:
        return self.appearance_classes + self.motion_classes

    @property
    def landmark_channels(self) -> int:
        return self.keypoints + 1


@dataclass
class AblationSettings:
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    table: str = "adapter"
    cells: Dict[str, Dict[str, Any]] = field(default_factory=dict)


@dataclass
class RunConfig:
    """Full run configuration.

    ``tune_landmark_embed`` stays False for the adaptation stage. The desk
    model then tunes 4680 of 49224 parameters (9.5%), inside the 10% budget;
    tuning the landmark patch embedding adds 12320 more (34.5% in total).
    """

    seed: int = 0
    dtype: str = "float64"
    mode: str = "dfer"
    tune_landmark_embed: bool = False
    output_dir: str = "runs/desk"
    checkpoint_every: int = 1
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    mcp: McpConfig = field(default_factory=McpConfig)
    tma: TmaConfig = field(default_factory=TmaConfig)
    sdl: SdlConfig = field(default_factory=SdlConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    ablation: AblationSettings = field(default_factory=AblationSettings)

    # ------------------------------------------------------------ accessors
    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    @property
    def num_classes(self) -> int:
        return self.data.num_classes

    # ----------------------------------------------------------- validation
    def errors(self) -> List[str]:
        problems = list(self.backbone.errors())
        bb = self.backbone
        grid = math.isqrt(bb.num_patches) if bb.num_patches > 0 else 0
        if grid * grid != bb.num_patches:
            problems.append(f"backbone: patch count {bb.num_patches} is not a perfect square")
        if self.dtype not in DTYPES:
            problems.append(f"dtype must be one of {DTYPES}, got {self.dtype!r}")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mcp.fusion not in FUSIONS:
            problems.append(f"mcp.fusion must be one of {FUSIONS}, got {self.mcp.fusion!r}")
        bottleneck = self.mcp.resolved_bottleneck(bb.embed_dim)
        if not 0 < bottleneck < bb.embed_dim:
            problems.append(f"mcp: bottleneck {bottleneck} must satisfy 0 < D' < D = {bb.embed_dim}")
        if self.tma.adapter not in ADAPTERS:
            problems.append(f"tma.adapter must be one of {ADAPTERS}, got {self.tma.adapter!r}")
        hidden = self.tma.hidden_dim(bb.embed_dim)
        heads = self.tma.resolved_heads(bb.heads)
        if hidden < 1 or abs(hidden - round(hidden)) > 1e-9:
            problems.append(f"tma: gamma*D = {hidden} must be a positive integer")
        elif heads < 1 or int(round(hidden)) % heads:
            problems.append(f"tma: gamma*D = {int(round(hidden))} not divisible by {heads} heads")
        if self.sdl.supervision not in SUPERVISIONS:
            problems.append(f"sdl.supervision must be one of {SUPERVISIONS}, got {self.sdl.supervision!r}")
        if self.sdl.queue_size < 1 or self.sdl.top_k < 1:
            problems.append("sdl: queue_size and top_k must be >= 1")
        if self.sdl.eta_max < 0:
            problems.append("sdl: eta_max must be >= 0")
        if not 0.0 <= self.sdl.label_smoothing < 1.0:
            problems.append("sdl: label_smoothing must lie in [0, 1)")
        opt = self.optim
        if opt.epochs < 1 or opt.batch_size < 1 or opt.sfer_epochs < 0:
            problems.append("optim: epochs and batch_size must be >= 1, sfer_epochs >= 0")
        if opt.lr_base <= 0 or opt.weight_decay < 0:
            problems.append("optim: lr_base must be > 0 and weight_decay >= 0")
        if not (0.0 <= opt.beta1 < 1.0 and 0.0 <= opt.beta2 < 1.0):
            problems.append("optim: betas must lie in [0, 1)")
        data = self.data
        if data.image_size != bb.image_size or data.channels != bb.channels:
            problems.append(
                f"data: frames {data.channels}x{data.image_size}^2 do not match backbone "
                f"{bb.channels}x{bb.image_size}^2"
            )
        if data.landmark_size % max(grid, 1):
            problems.append(f"data: landmark_size {data.landmark_size} not divisible by grid {grid}")
        if data.keypoints < 1:
            problems.append("data: keypoints must be >= 1")
        if data.frames < 1 or data.sequence_length < data.frames:
            problems.append("data: need 1 <= frames <= sequence_length")
        if data.clip_mode not in CLIP_MODES:
            problems.append(f"data.clip_mode must be one of {CLIP_MODES}, got {data.clip_mode!r}")
        if data.num_classes < 2:
            problems.append("data: need at least two classes")
        if self.mode == "sfer" and self.tma.adapter != "none":
            logger.debug("sfer mode ignores adapter %r", self.tma.adapter)
        return problems

    def validate(self) -> "RunConfig":
        problems = self.errors()
        if problems:
            raise ConfigurationError("Invalid run configuration:\n  - " + "\n  - ".join(problems))
        return self

    # ------------------------------------------------------------ (de)serial
    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "RunConfig":
        return _build(cls, raw, "config")

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Copy with dotted-path overrides, e.g. {"tma.adapter": "none"}."""
        raw = self.to_dict()
        for path, value in overrides.items():
            node = raw
            keys = path.split(".")
            for key in keys[:-1]:
                if not isinstance(node.get(key), dict):
                    raise ConfigurationError(f"Unknown config section '{path}'")
                node = node[key]
            if keys[-1] not in node:
                raise ConfigurationError(f"Unknown config key '{path}'")
            node[keys[-1]] = copy.deepcopy(value)
        return RunConfig.from_dict(raw)

    def diff(self, other: "RunConfig") -> Dict[str, Any]:
        """Dotted keys whose values differ, mapped to (self, other)."""
        left, right = _flatten(self.to_dict()), _flatten(other.to_dict())
        return {key: (left.get(key), right.get(key)) for key in sorted(left) if left.get(key) != right.get(key)}


def _build(cls, raw: Mapping[str, Any], where: str):
    if not isinstance(raw, Mapping):
        raise ConfigurationError(f"{where}: expected an object, got {type(raw).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in raw.items():
        default = known[name].default_factory if known[name].default_factory is not dataclasses.MISSING else None
        nested = default() if default is not None else None
        if dataclasses.is_dataclass(nested):
            kwargs[name] = _build(type(nested), value, f"{where}.{name}")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _flatten(tree: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, path + "."))
        else:
            flat[path] = value
    return flat


def gradcheck_config() -> RunConfig:
    """Tiny float64 configuration used by `s2d gradcheck`."""
    return RunConfig(
        dtype="float64",
        backbone=BackboneConfig(image_size=8, patch_size=4, channels=1, embed_dim=8, layers=2, heads=2),
        data=DataConfig(
            num_train=8, num_test=4, sequence_length=2, frames=2, image_size=8, channels=1,
            keypoints=2, landmark_size=8, heatmap_sigma=1.0,
        ),
        sdl=SdlConfig(queue_size=4, top_k=2, eta_max=1.0),
        optim=OptimConfig(epochs=1, batch_size=2),
    )


__all__ = [
    "ADAPTERS",
    "AblationSettings",
    "BackboneConfig",
    "CLIP_MODES",
    "DataConfig",
    "FUSIONS",
    "McpConfig",
    "OptimConfig",
    "RunConfig",
    "SUPERVISIONS",
    "SdlConfig",
    "TmaConfig",
    "gradcheck_config",
]
