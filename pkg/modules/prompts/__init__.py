"""Prompt fusion components: landmark-guided prompts added to patch tokens."""

from .base import BaseFusion
from .cap import ConcatProjectFusion, NoFusion
from .mcp import McpState, MultiViewPrompter, fovea_attention, generate_prompts, project_views

__all__ = [
    "BaseFusion",
    "ConcatProjectFusion",
    "McpState",
    "MultiViewPrompter",
    "NoFusion",
    "fovea_attention",
    "generate_prompts",
    "project_views",
]
