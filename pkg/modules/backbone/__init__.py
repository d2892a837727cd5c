"""Vision-Transformer image encoder used as the frozen backbone."""

from .attention import multi_head_self_attention
from .vit import (
    EncoderLayerState,
    add_position_embedding,
    encoder_layer_forward,
    init_backbone,
    init_patch_embed,
    patch_embed,
    patchify,
)

__all__ = [
    "EncoderLayerState",
    "add_position_embedding",
    "encoder_layer_forward",
    "init_backbone",
    "init_patch_embed",
    "multi_head_self_attention",
    "patch_embed",
    "patchify",
]
