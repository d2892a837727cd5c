"""Central-difference gradient checks.

The error of one parameter is

    max |analytic - numeric| / max(max |analytic|, max |numeric|, 1e-12)

taken over all of its elements, and a check passes iff every tunable
parameter stays at or below the tolerance.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

from modules.losses.sdl import AnchorQueues, soft_labels_for_batch, total_loss
from utils.datagen.dataset import load_datasets

from .config import RunConfig, gradcheck_config
from .exceptions import ContractError
from .model import S2DModel
from .parameters import ParameterStore
from .tensor import DiffTensor, no_grad

logger = logging.getLogger(__name__)

ScalarFn = Callable[[ParameterStore], DiffTensor]


@dataclass
class ParamCheck:
    name: str
    max_error: float
    size: int
    skipped: bool = False

    def passed(self, tol: float) -> bool:
        return self.skipped or self.max_error <= tol


@dataclass
class GradcheckReport:
    tol: float
    h: float
    checks: List[ParamCheck] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(check.passed(self.tol) for check in self.checks)

    @property
    def max_error(self) -> float:
        errors = [check.max_error for check in self.checks if not check.skipped]
        return max(errors) if errors else 0.0

    @property
    def failures(self) -> List[ParamCheck]:
        return [check for check in self.checks if not check.passed(self.tol)]

    @property
    def skipped(self) -> List[str]:
        return [check.name for check in self.checks if check.skipped]

    def to_dict(self) -> Dict[str, object]:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "h": self.h,
            "max_error": self.max_error,
            "seconds": self.seconds,
            "parameters": [
                {"name": c.name, "max_error": c.max_error, "size": c.size, "skipped": c.skipped}
                for c in self.checks
            ],
        }


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


def finite_diff_check(
    f: ScalarFn,
    params: ParameterStore,
    h: float = 1e-5,
    tol: float = 1e-4,
    names: Optional[Iterable[str]] = None,
) -> GradcheckReport:
    """Compare backward() against central differences of `f(params)`.

    Frozen parameters are reported as skipped; `f` must be deterministic.
    """
    started = time.perf_counter()
    names = list(names) if names is not None else list(params)
    report = GradcheckReport(tol=tol, h=h)

    params.zero_grad()
    loss = f(params)
    if loss.size != 1:
        raise ContractError(f"finite_diff_check: f must return a scalar, got shape {loss.shape}")
    loss.backward()
    analytic = {name: params[name].grad.copy() for name in names if params.is_tunable(name)}

    for name in names:
        tensor = params[name]
        if not params.is_tunable(name):
            report.checks.append(ParamCheck(name, 0.0, tensor.size, skipped=True))
            continue
        numeric = np.zeros_like(tensor.data)
        with no_grad():
            for idx in np.ndindex(tensor.shape):
                original = tensor.data[idx]
                tensor.data[idx] = original + h
                plus = f(params).item()
                tensor.data[idx] = original - h
                minus = f(params).item()
                tensor.data[idx] = original
                numeric[idx] = (plus - minus) / (2.0 * h)
        error = relative_error(analytic[name], numeric)
        report.checks.append(ParamCheck(name, error, tensor.size))
        logger.debug("gradcheck %s: max relative error %.3e", name, error)

    report.seconds = time.perf_counter() - started
    return report


def randomize_zero_weights(store: ParameterStore, rng: np.random.Generator, scale: float = 0.1) -> List[str]:
    """Give all-zero matrices random values so their inputs get a gradient path."""
    touched = []
    for name, tensor in store.items():
        if tensor.ndim > 1 and not np.any(tensor.data):
            tensor.data[...] = scale * rng.standard_normal(tensor.shape)
            touched.append(name)
    return touched


def full_model_gradcheck(
    config: Optional[RunConfig] = None,
    seed: int = 0,
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradcheckReport:
    """Check the full adaptation loss (fusion + adapters + distillation) on one toy batch.

    Zero-initialized projections are randomized first; anchor queues are
    filled for every class and the soft labels are taken once from the
    unperturbed model and held fixed, so the checked function is the loss
    the optimizer actually differentiates.
    """
    config = (config or gradcheck_config()).validate()
    if config.np_dtype != np.float64:
        raise ContractError("gradient checks need float64 parameters")
    rng = np.random.default_rng(seed)
    model = S2DModel(config)
    randomize_zero_weights(model.store, rng)
    model.freeze_for_adaptation()

    train_set, _ = load_datasets(config, seed=seed)
    batch = train_set.batch(np.arange(min(config.optim.batch_size, len(train_set))))
    k = config.num_classes
    d = config.backbone.embed_dim

    queues = AnchorQueues(k, config.sdl.queue_size)
    for c in range(k):
        feats = rng.standard_normal((config.sdl.top_k, d))
        probs = rng.dirichlet(np.ones(k), size=config.sdl.top_k)
        queues.enqueue(feats, probs, [c] * config.sdl.top_k)
    with no_grad():
        features = model.forward(batch.frames, batch.landmarks, mode="dfer").features.data
    soft = soft_labels_for_batch(features, queues, config.sdl.top_k)

    def objective(store: ParameterStore) -> DiffTensor:
        out = model.forward(batch.frames, batch.landmarks, mode="dfer")
        return total_loss(out.logits, batch.labels, soft, eta=1.0).total

    report = finite_diff_check(objective, model.store, h=h, tol=tol)
    logger.info(
        "Gradient check over %d tunable tensors: max relative error %.3e (%s) in %.1fs",
        len(report.checks) - len(report.skipped), report.max_error,
        "pass" if report.passed else "FAIL", report.seconds,
    )
    return report


__all__ = [
    "GradcheckReport",
    "ParamCheck",
    "finite_diff_check",
    "full_model_gradcheck",
    "randomize_zero_weights",
    "relative_error",
]
