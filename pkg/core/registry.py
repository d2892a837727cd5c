"""Component Registry Module

Provides a centralized registry for the swappable model pieces: prompt
fusion (`fusion`), temporal adapters (`adapter`) and supervision signals
(`supervision`). Ablations select components by name through this table.
"""
from __future__ import annotations

import logging
import re
from typing import Any, Dict, List, Optional, Type

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

FAMILIES = ("fusion", "adapter", "supervision")


class ComponentRegistry:
    """
    Registry for model components, keyed by family and normalized name.
    """
    _components: Dict[str, Dict[str, Type[Any]]] = {}
    _aliases: Dict[str, Dict[str, str]] = {}

    @staticmethod
    def _normalize_name(name: Optional[str]) -> str:
        """Normalize component names for consistent registry storage and lookup."""

        if not name:
            return "none"

        normalized = name.strip().lower()
        normalized = re.sub(r"[\s\-]+", "_", normalized)
        return normalized or "none"

    @classmethod
    def register(cls, family: str, name: str, component_class: Type[Any], aliases: Optional[List[str]] = None) -> None:
        """
        Register a component class under a family.

        Args:
            family: One of FAMILIES
            name: Canonical component name
            component_class: The class implementing the component
            aliases: Alternative names for this component
        """
        if family not in FAMILIES:
            raise ConfigurationError(f"Unknown component family '{family}'")
        normalized = cls._normalize_name(name)
        cls._components.setdefault(family, {})[normalized] = component_class
        for alias in aliases or []:
            cls._aliases.setdefault(family, {})[cls._normalize_name(alias)] = normalized
        logger.debug(
            "Registered %s component '%s' (normalized: '%s'): %s",
            family,
            name,
            normalized,
            component_class.__name__,
        )

    @classmethod
    def get(cls, family: str, name: Optional[str]) -> Type[Any]:
        """
        Get the component class registered under `family` / `name`.

        Raises:
            ConfigurationError: if nothing is registered under that name
        """
        normalized = cls._normalize_name(name)
        normalized = cls._aliases.get(family, {}).get(normalized, normalized)
        component = cls._components.get(family, {}).get(normalized)
        if component is None:
            known = ", ".join(cls.list_registered(family)) or "<none>"
            raise ConfigurationError(f"No {family} component named '{name}' (known: {known})")
        return component

    @classmethod
    def create(cls, family: str, name: Optional[str], **kwargs: Any) -> Any:
        return cls.get(family, name)(**kwargs)

    @classmethod
    def list_registered(cls, family: str) -> List[str]:
        return list(cls._components.get(family, {}).keys())

    @classmethod
    def clear(cls) -> None:
        """Clear all registered components and aliases."""

        cls._components.clear()
        cls._aliases.clear()


def register_builtin_components() -> None:
    """Register all built-in components with the registry."""
    from modules.prompts.mcp import MultiViewPrompter
    from modules.prompts.cap import ConcatProjectFusion, NoFusion
    from modules.adapters.tma import (
        NoAdapter,
        TemporalAdapter,
        TemporalModelingAdapter,
        VanillaAdapter,
    )
    from modules.losses.supervision import (
        LabelSmoothingSupervision,
        OneHotSupervision,
        SelfDistillationSupervision,
    )

    ComponentRegistry.register("fusion", "none", NoFusion)
    ComponentRegistry.register("fusion", "mcp", MultiViewPrompter, aliases=["multi-view complementary prompter"])
    ComponentRegistry.register("fusion", "cap", ConcatProjectFusion, aliases=["concat+project"])

    ComponentRegistry.register("adapter", "none", NoAdapter)
    ComponentRegistry.register("adapter", "vanilla", VanillaAdapter, aliases=["vanilla adapter"])
    ComponentRegistry.register("adapter", "temporal", TemporalAdapter, aliases=["t-adapter", "temporal adapter"])
    ComponentRegistry.register("adapter", "tma", TemporalModelingAdapter, aliases=["temporal-modeling adapter"])

    ComponentRegistry.register("supervision", "one_hot", OneHotSupervision, aliases=["one-hot"])
    ComponentRegistry.register("supervision", "label_smoothing", LabelSmoothingSupervision)
    ComponentRegistry.register("supervision", "sdl", SelfDistillationSupervision, aliases=["one-hot+sdl"])


def ensure_builtin_components_registered() -> None:
    """Register the built-in components unless every family is populated."""
    if all(ComponentRegistry.list_registered(family) for family in FAMILIES):
        return
    register_builtin_components()


__all__ = [
    "ComponentRegistry",
    "FAMILIES",
    "ensure_builtin_components_registered",
    "register_builtin_components",
]
