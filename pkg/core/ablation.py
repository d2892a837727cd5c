"""Ablation harness.

A table is a base override set plus named cells; every cell is the base
configuration with a few dotted keys changed. Each cell is trained and
evaluated once per seed with identical budgets, and the harness records
which keys each cell changed so the comparison can be audited.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional

import numpy as np

from .config import RunConfig
from .exceptions import ConfigurationError
from .trainer import Trainer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AblationTable:
    name: str
    cells: Dict[str, Dict[str, Any]]
    base: Dict[str, Any] = field(default_factory=dict)


TABLES: Dict[str, AblationTable] = {
    "fusion": AblationTable(
        "fusion",
        cells={"none": {"mcp.fusion": "none"}, "mcp": {"mcp.fusion": "mcp"}, "cap": {"mcp.fusion": "cap"}},
        base={"data.occlusion": True},
    ),
    "adapter": AblationTable(
        "adapter",
        cells={
            "none": {"tma.adapter": "none"},
            "vanilla": {"tma.adapter": "vanilla"},
            "temporal": {"tma.adapter": "temporal"},
            "tma": {"tma.adapter": "tma"},
        },
    ),
    "supervision": AblationTable(
        "supervision",
        cells={
            "one_hot": {"sdl.supervision": "one_hot"},
            "label_smoothing": {"sdl.supervision": "label_smoothing"},
            "sdl": {"sdl.supervision": "sdl"},
        },
    ),
    "oversampling": AblationTable(
        "oversampling",
        cells={"off": {"optim.oversample": False}, "on": {"optim.oversample": True}},
    ),
}

CUSTOM_TABLE = "custom"


def resolve_table(config: RunConfig) -> AblationTable:
    settings = config.ablation
    if settings.table == CUSTOM_TABLE or settings.cells:
        if not settings.cells:
            raise ConfigurationError("ablation.table is 'custom' but ablation.cells is empty")
        return AblationTable(CUSTOM_TABLE, cells={k: dict(v) for k, v in settings.cells.items()})
    try:
        return TABLES[settings.table]
    except KeyError:
        known = ", ".join(sorted(TABLES) + [CUSTOM_TABLE])
        raise ConfigurationError(f"Unknown ablation table '{settings.table}' (known: {known})") from None


@dataclass
class CellResult:
    cell: str
    seeds: List[int]
    war: List[float]
    uar: List[float]

    @property
    def mean_war(self) -> float:
        return float(np.mean(self.war))

    @property
    def mean_uar(self) -> float:
        return float(np.mean(self.uar))

    def row(self, table: str) -> Dict[str, Any]:
        return {
            "table": table,
            "cell": self.cell,
            "seeds": len(self.seeds),
            "war": self.mean_war,
            "uar": self.mean_uar,
            "war_std": float(np.std(self.war)),
            "uar_std": float(np.std(self.uar)),
        }


@dataclass
class OrderingCheck:
    description: str
    passed: bool


@dataclass
class AblationReport:
    table: str
    results: List[CellResult]
    audit: Dict[str, Dict[str, Any]]
    checks: List[OrderingCheck] = field(default_factory=list)

    @property
    def rows(self) -> List[Dict[str, Any]]:
        return [result.row(self.table) for result in self.results]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def war(self, cell: str) -> float:
        for result in self.results:
            if result.cell == cell:
                return result.mean_war
        raise KeyError(cell)


def cell_config(base: RunConfig, overrides: Mapping[str, Any], seed: int) -> RunConfig:
    return base.with_overrides({**overrides, "seed": seed}).validate()


def ordering_checks(table: str, war: Mapping[str, float]) -> List[OrderingCheck]:
    """Expected WAR orderings for the built-in tables."""
    checks: List[OrderingCheck] = []
    if table == "adapter" and {"none", "vanilla", "tma"} <= set(war):
        checks.append(OrderingCheck("none < vanilla", war["none"] < war["vanilla"]))
        if "temporal" in war:
            checks.append(OrderingCheck("vanilla < temporal", war["vanilla"] < war["temporal"]))
            checks.append(OrderingCheck("temporal <= tma", war["temporal"] <= war["tma"]))
        checks.append(OrderingCheck("vanilla < tma", war["vanilla"] < war["tma"]))
        checks.append(OrderingCheck("tma - none >= 0.15", war["tma"] - war["none"] >= 0.15))
    if table == "fusion" and {"none", "mcp", "cap"} <= set(war):
        checks.append(OrderingCheck("mcp - none >= 0.03", war["mcp"] - war["none"] >= 0.03))
        checks.append(OrderingCheck("cap <= mcp", war["cap"] <= war["mcp"]))
    return checks


RunCell = Callable[[RunConfig], Dict[str, float]]


def train_and_evaluate(config: RunConfig) -> Dict[str, float]:
    report = Trainer(config).fit()
    metrics = report.evaluation.metrics
    return {"war": metrics.war, "uar": metrics.uar}


def run_ablation(
    config: RunConfig,
    seeds: Optional[List[int]] = None,
    run_cell: RunCell = train_and_evaluate,
) -> AblationReport:
    table = resolve_table(config)
    seeds = list(seeds if seeds is not None else config.ablation.seeds)
    if not seeds:
        raise ConfigurationError("ablation needs at least one seed")
    base = config.with_overrides(table.base) if table.base else config
    base.validate()

    results: List[CellResult] = []
    audit: Dict[str, Dict[str, Any]] = {}
    for cell, overrides in table.cells.items():
        war, uar = [], []
        for seed in seeds:
            cfg = cell_config(base, overrides, seed)
            if seed == seeds[0]:
                reference = base.with_overrides({"seed": seed})
                audit[cell] = {key: list(values) for key, values in reference.diff(cfg).items()}
            logger.info("Ablation %s / %s, seed %d", table.name, cell, seed)
            metrics = run_cell(cfg)
            war.append(float(metrics["war"]))
            uar.append(float(metrics["uar"]))
        results.append(CellResult(cell, seeds, war, uar))
        logger.info("Ablation %s / %s: WAR %.4f UAR %.4f", table.name, cell, np.mean(war), np.mean(uar))

    report = AblationReport(table.name, results, audit)
    report.checks = ordering_checks(table.name, {r.cell: r.mean_war for r in results})
    for check in report.checks:
        logger.log(logging.INFO if check.passed else logging.WARNING, "ordering %s: %s",
                   check.description, "ok" if check.passed else "violated")
    return report


__all__ = [
    "AblationReport",
    "AblationTable",
    "CellResult",
    "OrderingCheck",
    "TABLES",
    "cell_config",
    "ordering_checks",
    "resolve_table",
    "run_ablation",
    "train_and_evaluate",
]
