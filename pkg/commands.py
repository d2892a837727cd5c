"""CLI commands: one run_* function per sub-command, each returning an exit code.

Exit codes: 0 success with every checked invariant holding, 1 error,
2 invalid configuration, 3 a checked invariant failed.
"""
from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING, Callable

from core.ablation import run_ablation
from core.checkpoint import checkpoint_load
from core.config import RunConfig, gradcheck_config
from core.evaluation import dump_features, evaluate
from core.exceptions import ConfigurationError, S2DError
from core.gradcheck import full_model_gradcheck
from core.model import S2DModel
from core.trainer import CURVE_FIELDS, Trainer
from utils.datagen import SyntheticLandmarkProvider, generate_dataset, load_datasets, write_manifest

if __package__ in (None, ""):
    from cli_io import load_run_config, write_csv, write_json  # type: ignore[no-redef]
else:
    from .cli_io import load_run_config, write_csv, write_json

if TYPE_CHECKING:  # avoid runtime circular import
    from .CLI import CLIContext

logger = logging.getLogger('s2d.commands')

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def _guarded(name: str, body: Callable[["CLIContext"], int], context: "CLIContext") -> int:
    logging.getLogger().setLevel(logging.DEBUG if context.debug else logging.INFO)
    try:
        return body(context)
    except ConfigurationError as exc:
        logger.error("%s: %s", name, exc)
        print(f"Configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except S2DError as exc:
        logger.error("%s failed: %s", name, exc, exc_info=context.debug)
        print(f"Error during {name}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        logger.error("Unexpected error during %s: %s", name, exc, exc_info=context.debug)
        print(f"Unexpected error during {name}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def _config(context: "CLIContext", fallback=None) -> RunConfig:
    return load_run_config(context.config_path, context.overrides, fallback=fallback)


def _output_dir(context: "CLIContext", config: RunConfig) -> Path:
    return Path(context.output_dir or config.output_dir)


def _model_from(context: "CLIContext") -> S2DModel:
    """Model restored from --checkpoint (its stored config is the default), else freshly built."""
    if not context.checkpoint:
        config = _config(context)
        return S2DModel(config)
    data = checkpoint_load(context.checkpoint)
    config = _config(context, fallback=data.meta.get("config"))
    model = S2DModel(config)
    data.restore_params(model.store)
    logger.info("Restored parameters from %s", context.checkpoint)
    return model


# ----------------------------------------------------------------- gen-data
def _gen_data(context: "CLIContext") -> int:
    config = _config(context)
    out_dir = _output_dir(context, config) / "data"
    splits = {split: generate_dataset(config.data, config.seed, split) for split in ("train", "test")}
    manifest = write_manifest(out_dir, splits, SyntheticLandmarkProvider(config.data))
    write_json(out_dir / "config.json", config.to_dict())
    print(manifest)
    return EXIT_OK


def run_gen_data(context: "CLIContext") -> int:
    return _guarded("gen-data", _gen_data, context)


# -------------------------------------------------------------------- train
def _train(context: "CLIContext") -> int:
    config = _config(context)
    out_dir = _output_dir(context, config)
    write_json(out_dir / "config.json", config.to_dict())
    trainer = Trainer(config, output_dir=out_dir)
    report = trainer.fit(resume_from=context.resume, max_steps=context.max_steps)
    write_csv(out_dir / "curves.csv", [r.to_dict() for r in report.history], list(CURVE_FIELDS))
    write_json(out_dir / "report.json", report.to_dict())
    if report.final is not None:
        print(f"WAR {report.final.war:.4f}  UAR {report.final.uar:.4f}  ({out_dir})")
    if not report.frozen_intact:
        print(f"Frozen parameters changed: {', '.join(report.frozen_changed)}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def run_train(context: "CLIContext") -> int:
    return _guarded("train", _train, context)


# --------------------------------------------------------------------- eval
def _eval(context: "CLIContext") -> int:
    model = _model_from(context)
    config = model.config
    _, test_set = load_datasets(config)
    report = evaluate(model, test_set, clip_mode=context.clip_mode, batch_size=config.optim.batch_size)
    out_dir = _output_dir(context, config)
    write_json(out_dir / "eval.json", report.to_dict())
    rows = [
        {"class": c, "recall": recall, "support": int(report.confusion.counts[c].sum())}
        for c, recall in enumerate(report.metrics.recalls)
    ]
    write_csv(out_dir / "eval_recalls.csv", rows, ["class", "recall", "support"])
    print(f"WAR {report.metrics.war:.4f}  UAR {report.metrics.uar:.4f}")
    return EXIT_OK


def run_eval(context: "CLIContext") -> int:
    return _guarded("eval", _eval, context)


# ---------------------------------------------------------------- gradcheck
def _gradcheck(context: "CLIContext") -> int:
    if context.config_path or context.overrides:
        config = load_run_config(context.config_path, context.overrides, fallback=gradcheck_config().to_dict())
    else:
        config = gradcheck_config()
    report = full_model_gradcheck(config, seed=config.seed)
    if context.output_dir:
        write_json(Path(context.output_dir) / "gradcheck.json", report.to_dict())
    for check in report.failures:
        print(f"FAIL {check.name}: relative error {check.max_error:.3e}", file=sys.stderr)
    print(f"max relative error {report.max_error:.3e} ({'pass' if report.passed else 'FAIL'})")
    return EXIT_OK if report.passed else EXIT_INVARIANT


def run_gradcheck(context: "CLIContext") -> int:
    return _guarded("gradcheck", _gradcheck, context)


# ------------------------------------------------------------------- ablate
def _ablate(context: "CLIContext") -> int:
    config = _config(context)
    report = run_ablation(config, seeds=context.seeds)
    out_dir = _output_dir(context, config)
    write_csv(out_dir / f"ablation_{report.table}.csv", report.rows,
              ["table", "cell", "seeds", "war", "uar", "war_std", "uar_std"])
    write_json(out_dir / f"ablation_{report.table}_audit.json", {
        "table": report.table,
        "cells": report.audit,
        "checks": [{"ordering": c.description, "passed": c.passed} for c in report.checks],
    })
    for row in report.rows:
        print(f"{row['cell']:<16} WAR {row['war']:.4f}  UAR {row['uar']:.4f}")
    return EXIT_OK if report.passed else EXIT_INVARIANT


def run_ablate(context: "CLIContext") -> int:
    return _guarded("ablate", _ablate, context)


# --------------------------------------------------------------------- dump
def _dump(context: "CLIContext") -> int:
    model = _model_from(context)
    config = model.config
    _, test_set = load_datasets(config)
    paths = dump_features(model, test_set, _output_dir(context, config) / "dump",
                          batch_size=config.optim.batch_size)
    for path in paths.values():
        print(path)
    return EXIT_OK


def run_dump(context: "CLIContext") -> int:
    return _guarded("dump", _dump, context)


COMMANDS = {
    "gen-data": run_gen_data,
    "train": run_train,
    "eval": run_eval,
    "gradcheck": run_gradcheck,
    "ablate": run_ablate,
    "dump": run_dump,
}

__all__ = [
    "COMMANDS",
    "run_ablate",
    "run_dump",
    "run_eval",
    "run_gen_data",
    "run_gradcheck",
    "run_train",
]
