"""Full model: frozen image encoder, per-layer prompt fusion and adapters.

For every encoder layer l:

    H' = H + P(H, A) [+ T(H) in dfer mode]
    class, H = E_l(class, H')

P comes from the layer's fusion block, T from its adapter. Both read the
layer input H, and the fusion blocks of all layers share the embedded
landmark tokens A. Video logits are the mean of per-frame classifier outputs
on the final (normalized) class tokens; the video feature is the mean of
those class tokens.
"""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from modules.adapters.base import BaseAdapter
from modules.backbone.vit import (
    BACKBONE,
    EncoderLayerState,
    add_position_embedding,
    encoder_layer_forward,
    init_backbone,
    init_patch_embed,
    patch_embed,
)
from modules.prompts.base import BaseFusion

from . import functional as F
from .config import RunConfig
from .exceptions import ContractError, DimensionError
from .parameters import CountFilter, ParameterStore, scaled_uniform
from .registry import ComponentRegistry, ensure_builtin_components_registered
from .tensor import DiffTensor

logger = logging.getLogger(__name__)

LANDMARK_EMBED = "landmark_embed"
CLASSIFIER = "classifier"
Array = Union[np.ndarray, DiffTensor]


def part_rng(seed: int, part: str) -> np.random.Generator:
    """Generator keyed by (seed, part name) so parts initialize independently."""
    return np.random.default_rng([int(seed), zlib.crc32(part.encode("utf-8"))])


@dataclass
class ModelOutput:
    logits: DiffTensor  # (B, K)
    features: DiffTensor  # (B, D)
    frame_logits: DiffTensor  # (B, T, K)
    attention: Optional[np.ndarray] = None  # (B, heads, N+1, N+1), last layer, frame mean


class S2DModel:
    """Parameter store plus the components selected by a RunConfig."""

    def __init__(self, config: RunConfig, store: Optional[ParameterStore] = None):
        ensure_builtin_components_registered()
        self.config = config.validate()
        layers = config.backbone.layers
        self.fusions: List[BaseFusion] = [
            ComponentRegistry.create("fusion", config.mcp.fusion, index=i, config=config) for i in range(layers)
        ]
        self.adapters: List[BaseAdapter] = [
            ComponentRegistry.create("adapter", config.tma.adapter, index=i, config=config) for i in range(layers)
        ]
        if store is None:
            store = ParameterStore(config.np_dtype)
            self._init_params(store)
        self.store = store
        self._layers = [EncoderLayerState.from_store(store, i) for i in range(layers)]

    # -------------------------------------------------------------- building
    @property
    def uses_landmarks(self) -> bool:
        return any(f.uses_landmarks for f in self.fusions)

    @property
    def landmark_patch_size(self) -> int:
        return self.config.data.landmark_size // self.config.backbone.grid_size

    def _init_params(self, store: ParameterStore) -> None:
        cfg, seed = self.config, self.config.seed
        init_backbone(store, cfg.backbone, part_rng(seed, BACKBONE))
        if self.uses_landmarks:
            init_patch_embed(
                store, LANDMARK_EMBED, cfg.data.landmark_channels, self.landmark_patch_size,
                cfg.backbone.embed_dim, part_rng(seed, LANDMARK_EMBED),
            )
        for block in list(self.fusions) + list(self.adapters):
            block.init_params(store, part_rng(seed, block.prefix))
        d, k = cfg.backbone.embed_dim, cfg.num_classes
        store.add(f"{CLASSIFIER}.weight", scaled_uniform(part_rng(seed, CLASSIFIER), d, (d, k)))
        store.add(f"{CLASSIFIER}.bias", np.zeros(k))
        logger.debug("Initialized %d parameter tensors (%d scalars)", len(store), store.count())

    # --------------------------------------------------------------- freezing
    def adaptation_prefixes(self) -> Tuple[str, ...]:
        prefixes = [f"{block.prefix}." for block in list(self.fusions) + list(self.adapters)]
        prefixes.append(f"{CLASSIFIER}.")
        if self.config.tune_landmark_embed:
            prefixes.append(f"{LANDMARK_EMBED}.")
        return tuple(prefixes)

    def freeze_for_adaptation(self) -> ParameterStore:
        """Only fusion blocks, adapters and the classifier stay tunable."""
        prefixes = self.adaptation_prefixes()
        self.store.set_tunable_where(lambda name: name.startswith(prefixes))
        logger.info(
            "Adaptation split: %d tunable / %d frozen (%.2f%% tunable)",
            self.store.count("tunable"), self.store.count("frozen"), 100.0 * self.store.tunable_fraction(),
        )
        return self.store

    def unfreeze_image_model(self) -> ParameterStore:
        """Image-model training: everything except the adapters is tunable."""
        adapter_prefixes = tuple(f"{a.prefix}." for a in self.adapters)
        self.store.set_tunable_where(lambda name: not name.startswith(adapter_prefixes))
        return self.store

    def count_parameters(self, which: CountFilter = "all") -> int:
        return self.store.count(which)

    # ---------------------------------------------------------------- forward
    def _as_input(self, value: Array) -> DiffTensor:
        if isinstance(value, DiffTensor):
            return value
        return DiffTensor(np.asarray(value, dtype=self.store.dtype))

    def forward(
        self,
        frames: Array,
        landmarks: Optional[Array] = None,
        mode: Optional[str] = None,
        return_attention: bool = False,
    ) -> ModelOutput:
        """Batched forward.

        Args:
            frames: (B, T, C, H, W)
            landmarks: (B, T, C', H', W'); required when a fusion block uses them
            mode: "sfer" (T must be 1, adapters skipped) or "dfer"
        """
        mode = mode or self.config.mode
        cfg = self.config.backbone
        s = self.store
        x = self._as_input(frames)
        if x.ndim != 5:
            raise DimensionError(f"frames must be (B, T, C, H, W), got {x.shape}")
        if mode == "sfer" and x.shape[1] != 1:
            raise ContractError(f"sfer mode takes single frames (T = 1), got T = {x.shape[1]}")
        if mode not in ("sfer", "dfer"):
            raise ContractError(f"unknown mode '{mode}'")

        tokens = patch_embed(x, s[f"{BACKBONE}.patch_embed.weight"], s[f"{BACKBONE}.patch_embed.bias"], cfg.patch_size)
        lead = tokens.shape[:-2]
        d, n = cfg.embed_dim, tokens.shape[-2]
        cls = F.broadcast_to(s[f"{BACKBONE}.cls_token"], lead + (d,)).reshape(lead + (1, d))
        full = add_position_embedding(F.concat([cls, tokens], axis=-2), s[f"{BACKBONE}.pos_embed"])
        x_class = F.narrow(full, -2, 0, 1).reshape(lead + (d,))
        hidden = F.narrow(full, -2, 1, n + 1)

        landmark_tokens = None
        if self.uses_landmarks:
            if landmarks is None:
                raise ContractError("landmark features are required by the configured fusion")
            a = self._as_input(landmarks)
            if a.shape[:2] != x.shape[:2]:
                raise DimensionError(f"landmarks {a.shape} do not match frames {x.shape}")
            landmark_tokens = patch_embed(
                a, s[f"{LANDMARK_EMBED}.weight"], s[f"{LANDMARK_EMBED}.bias"], self.landmark_patch_size
            )

        weights = None
        for fusion, adapter, state in zip(self.fusions, self.adapters, self._layers):
            prompted = hidden
            prompt = fusion.prompts(s, hidden, landmark_tokens)
            if prompt is not None:
                prompted = F.add(prompted, prompt)
            if mode == "dfer":
                temporal = adapter.residual(s, hidden)
                if temporal is not None:
                    prompted = F.add(prompted, temporal)
            x_class, hidden, weights = encoder_layer_forward(x_class, prompted, state, cfg.heads, cfg.ln_eps)

        feats = F.layer_norm(x_class, s[f"{BACKBONE}.norm.gain"], s[f"{BACKBONE}.norm.bias"], eps=cfg.ln_eps)
        frame_logits = F.linear(feats, s[f"{CLASSIFIER}.weight"], s[f"{CLASSIFIER}.bias"])
        attention = weights.data.mean(axis=1) if return_attention and weights is not None else None
        return ModelOutput(
            logits=F.mean(frame_logits, axis=-2),
            features=F.mean(feats, axis=-2),
            frame_logits=frame_logits,
            attention=attention,
        )

    def forward_video(
        self, frames: Array, landmarks: Optional[Array] = None, mode: Optional[str] = None,
        return_attention: bool = False,
    ) -> ModelOutput:
        """Single video (T, C, H, W); outputs drop the batch axis."""
        frames = frames.data if isinstance(frames, DiffTensor) else np.asarray(frames)
        landmarks = None if landmarks is None else (
            landmarks.data if isinstance(landmarks, DiffTensor) else np.asarray(landmarks)
        )
        out = self.forward(
            frames[None], None if landmarks is None else landmarks[None], mode, return_attention
        )
        return ModelOutput(
            logits=out.logits.reshape(out.logits.shape[1:]),
            features=out.features.reshape(out.features.shape[1:]),
            frame_logits=out.frame_logits.reshape(out.frame_logits.shape[1:]),
            attention=None if out.attention is None else out.attention[0],
        )

    def forward_frames(self, frames: Array, landmarks: Optional[Array] = None) -> ModelOutput:
        """Image-model pass over every frame separately, logits averaged per video."""
        f = frames.data if isinstance(frames, DiffTensor) else np.asarray(frames)
        b, t = f.shape[:2]
        flat_frames = f.reshape((b * t, 1) + f.shape[2:])
        flat_landmarks = None
        if landmarks is not None:
            a = landmarks.data if isinstance(landmarks, DiffTensor) else np.asarray(landmarks)
            flat_landmarks = a.reshape((b * t, 1) + a.shape[2:])
        out = self.forward(flat_frames, flat_landmarks, mode="sfer")
        k, d = out.logits.shape[-1], out.features.shape[-1]
        frame_logits = out.logits.reshape((b, t, k))
        return ModelOutput(
            logits=F.mean(frame_logits, axis=-2),
            features=F.mean(out.features.reshape((b, t, d)), axis=-2),
            frame_logits=frame_logits,
        )


def count_parameters(store: ParameterStore, which: CountFilter = "all") -> int:
    return store.count(which)


__all__ = ["CLASSIFIER", "LANDMARK_EMBED", "ModelOutput", "S2DModel", "count_parameters", "part_rng"]
