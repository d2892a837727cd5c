"""Epoch driver for the image-model and adaptation stages.

A run is a list of stages. The optional ``sfer`` stage (``optim.sfer_epochs``
> 0) trains the image model on one random frame per video with plain
cross-entropy. The ``dfer`` stage freezes everything but the fusion blocks,
adapters and classifier and trains on full clips with the configured
supervision. Each stage has its own AdamW state and its own cosine schedule.

Every source of randomness is derived from (seed, epoch), so a run resumed
from a checkpoint, including one written in the middle of an epoch, replays
the remaining steps exactly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.special import softmax

from modules.losses.supervision import BaseSupervision, OneHotSupervision
from modules.optim.adamw import AdamW, AdamWState
from modules.optim.sampler import epoch_rng, oversample_indices, shuffled_indices
from modules.optim.schedules import cosine_lr
from utils.datagen.dataset import Batch, ClipDataset, load_datasets

from .checkpoint import CheckpointData, checkpoint_load, checkpoint_save
from .config import RunConfig
from .evaluation import EvaluationReport, evaluate
from .exceptions import CheckpointError, NumericError
from .model import S2DModel
from .registry import ComponentRegistry, ensure_builtin_components_registered

logger = logging.getLogger(__name__)

CURVE_FIELDS = ("epoch", "stage", "step", "loss_ce", "loss_bce", "eta", "lr", "war", "uar")
_FRAME_PICK_STREAM = 1


@dataclass
class EpochRecord:
    epoch: int
    stage: str
    step: int
    loss_ce: float
    loss_bce: float
    eta: float
    lr: float
    war: float
    uar: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainingReport:
    history: List[EpochRecord]
    evaluation: Optional[EvaluationReport]
    tunable: int
    frozen: int
    frozen_intact: bool
    completed: bool
    checkpoint: Optional[Path] = None
    frozen_changed: List[str] = field(default_factory=list)

    @property
    def final(self) -> Optional[EpochRecord]:
        return self.history[-1] if self.history else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "completed": self.completed,
            "epochs": len(self.history),
            "parameters": {
                "tunable": self.tunable,
                "frozen": self.frozen,
                "tunable_fraction": self.tunable / max(self.tunable + self.frozen, 1),
            },
            "frozen_intact": self.frozen_intact,
            "frozen_changed": list(self.frozen_changed),
            "checkpoint": str(self.checkpoint) if self.checkpoint else None,
            "final": self.final.to_dict() if self.final else None,
            "evaluation": self.evaluation.to_dict() if self.evaluation else None,
        }


@dataclass
class _Position:
    """Where the trainer is; serialized into checkpoint metadata."""

    stage_index: int = 0
    epoch: int = 0  # global, across stages
    stage_epoch: int = 0
    batch_index: int = 0
    step: int = 0
    stage_step: int = 0
    sum_ce: float = 0.0
    sum_bce: float = 0.0
    batches: int = 0
    history: List[Dict[str, Any]] = field(default_factory=list)


class Trainer:
    """Runs the stages configured by a RunConfig over a train / test pair."""

    def __init__(
        self,
        config: RunConfig,
        model: Optional[S2DModel] = None,
        train_set: Optional[ClipDataset] = None,
        test_set: Optional[ClipDataset] = None,
        output_dir: Optional[Union[str, Path]] = None,
    ):
        ensure_builtin_components_registered()
        self.config = config.validate()
        self.model = model if model is not None else S2DModel(config)
        if train_set is None or test_set is None:
            loaded_train, loaded_test = load_datasets(config)
            train_set = train_set if train_set is not None else loaded_train
            test_set = test_set if test_set is not None else loaded_test
        self.train_set = train_set
        self.test_set = test_set
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.supervision: BaseSupervision = ComponentRegistry.create(
            "supervision", config.sdl.supervision, config=config
        )
        self._image_supervision = OneHotSupervision(config)
        self.optimizer: Optional[AdamW] = None
        self.position = _Position()
        self._baseline: Dict[str, str] = {}
        self.frozen_intact = True
        self.frozen_changed: List[str] = []

    # ---------------------------------------------------------------- stages
    @property
    def stages(self) -> List[Tuple[str, int]]:
        opt = self.config.optim
        if self.config.mode == "sfer":
            return [("sfer", opt.epochs)]
        stages = [("sfer", opt.sfer_epochs)] if opt.sfer_epochs > 0 else []
        stages.append(("dfer", opt.epochs))
        return stages

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.train_set) / self.config.optim.batch_size)

    def _enter_stage(self, stage: str) -> None:
        if stage == "sfer":
            self.model.unfreeze_image_model()
        else:
            self.model.freeze_for_adaptation()
        opt = self.config.optim
        self.optimizer = AdamW(
            self.model.store, betas=(opt.beta1, opt.beta2), eps=opt.eps, weight_decay=opt.weight_decay
        )
        store = self.model.store
        self._baseline = store.checksums(store.frozen_names())
        logger.info(
            "Stage %s: %d tunable / %d frozen parameters", stage, store.count("tunable"), store.count("frozen")
        )

    def _supervision_for(self, stage: str) -> BaseSupervision:
        return self._image_supervision if stage == "sfer" else self.supervision

    def _verify_frozen(self) -> bool:
        """False (and logged) when any frozen tensor differs from its stage-entry checksum."""
        current = self.model.store.checksums(self._baseline)
        changed = sorted(name for name, digest in current.items() if digest != self._baseline[name])
        if changed:
            self.frozen_intact = False
            self.frozen_changed = changed
            logger.error("Frozen parameters changed during training: %s", changed)
        return not changed

    # ---------------------------------------------------------------- epochs
    def epoch_order(self, epoch: int) -> np.ndarray:
        rng = epoch_rng(self.config.seed, epoch)
        if self.config.optim.oversample:
            return oversample_indices(self.train_set.labels, rng)
        return shuffled_indices(len(self.train_set), rng)

    def frame_picks(self, epoch: int) -> np.ndarray:
        """One frame index per sample of the epoch order, for the image stage."""
        rng = np.random.default_rng([int(self.config.seed), int(epoch), _FRAME_PICK_STREAM])
        return rng.integers(0, self.train_set.frames, size=len(self.train_set))

    def _stage_batch(self, stage: str, batch: Batch, picks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if stage != "sfer":
            return batch.frames, batch.landmarks
        rows = np.arange(len(batch.labels))
        return batch.frames[rows, picks][:, None], batch.landmarks[rows, picks][:, None]

    def train_step(self, stage: str, frames: np.ndarray, landmarks: np.ndarray, labels: np.ndarray,
                   eta: float, lr: float):
        supervision = self._supervision_for(stage)
        self.optimizer.zero_grad()
        out = self.model.forward(frames, landmarks, mode=stage)
        breakdown = supervision.loss(out.logits, labels, out.features.data, eta)
        if not np.isfinite(breakdown.total.data).all():
            raise NumericError(f"non-finite loss at step {self.position.step}: {breakdown.total.item()}")
        breakdown.total.backward()
        self.optimizer.step(lr)
        supervision.observe(out.features.data, softmax(out.logits.data, axis=-1), labels)
        return breakdown

    # ------------------------------------------------------------------- fit
    def fit(self, resume_from: Optional[Union[str, Path]] = None, max_steps: Optional[int] = None) -> TrainingReport:
        """Train until every stage is done or `max_steps` global steps have run.

        Stopping on `max_steps` writes a checkpoint at the exact position
        (when an output directory is set) so `fit(resume_from=...)` can
        carry on from there.
        """
        stages = self.stages
        if resume_from is not None:
            self._resume(checkpoint_load(resume_from))
        else:
            self._enter_stage(stages[0][0])
            if self.output_dir is not None:
                self._save("init.npz")
        pos = self.position
        steps_per_epoch = self.steps_per_epoch
        bs = self.config.optim.batch_size
        base_lr = self.config.optim.lr

        while pos.stage_index < len(stages):
            stage, stage_epochs = stages[pos.stage_index]
            supervision = self._supervision_for(stage)
            total_steps = stage_epochs * steps_per_epoch
            while pos.stage_epoch < stage_epochs:
                order = self.epoch_order(pos.epoch)
                picks = self.frame_picks(pos.epoch)
                eta = supervision.eta(pos.stage_epoch, stage_epochs)
                lr = cosine_lr(pos.stage_step, total_steps, base_lr)
                while pos.batch_index < steps_per_epoch:
                    if max_steps is not None and pos.step >= max_steps:
                        return self._stop()
                    chunk = order[pos.batch_index * bs:(pos.batch_index + 1) * bs]
                    batch = self.train_set.batch(chunk)
                    frames, landmarks = self._stage_batch(stage, batch, picks[pos.batch_index * bs:][:len(chunk)])
                    lr = cosine_lr(pos.stage_step, total_steps, base_lr)
                    breakdown = self.train_step(stage, frames, landmarks, batch.labels, eta, lr)
                    pos.sum_ce += breakdown.ce
                    pos.sum_bce += breakdown.bce
                    pos.batches += 1
                    pos.batch_index += 1
                    pos.step += 1
                    pos.stage_step += 1
                    logger.debug(
                        "step %d (%s): ce %.6f bce %.6f eta %.3f lr %.3e",
                        pos.step, stage, breakdown.ce, breakdown.bce, eta, lr,
                    )
                if not self._verify_frozen():
                    return self._report(None, completed=False, checkpoint=None)
                self._finish_epoch(stage, eta, lr)
            pos.stage_index += 1
            pos.stage_epoch = 0
            pos.stage_step = 0
            if pos.stage_index < len(stages):
                self._enter_stage(stages[pos.stage_index][0])

        checkpoint = self._save("final.npz") if self.output_dir is not None else None
        evaluation = self._evaluate(stages[-1][0])
        return self._report(evaluation, completed=True, checkpoint=checkpoint)

    def _finish_epoch(self, stage: str, eta: float, lr: float) -> None:
        pos = self.position
        metrics = self._evaluate(stage).metrics
        record = EpochRecord(
            epoch=pos.epoch,
            stage=stage,
            step=pos.step,
            loss_ce=pos.sum_ce / max(pos.batches, 1),
            loss_bce=pos.sum_bce / max(pos.batches, 1),
            eta=eta,
            lr=lr,
            war=metrics.war,
            uar=metrics.uar,
        )
        pos.history.append(record.to_dict())
        logger.info(
            "epoch %d (%s): ce %.4f bce %.4f eta %.3f lr %.3e WAR %.4f UAR %.4f",
            record.epoch, stage, record.loss_ce, record.loss_bce, eta, lr, record.war, record.uar,
        )
        pos.epoch += 1
        pos.stage_epoch += 1
        pos.batch_index = 0
        pos.sum_ce = pos.sum_bce = 0.0
        pos.batches = 0
        every = self.config.checkpoint_every
        if self.output_dir is not None and every > 0 and pos.epoch % every == 0:
            self._save("last.npz")

    def _evaluate(self, stage: str) -> EvaluationReport:
        return evaluate(self.model, self.test_set, mode=stage, batch_size=self.config.optim.batch_size)

    def _stop(self) -> TrainingReport:
        checkpoint = self._save("last.npz") if self.output_dir is not None else None
        logger.info("Stopped at step %d (epoch %d, batch %d)", self.position.step, self.position.epoch,
                    self.position.batch_index)
        return self._report(None, completed=False, checkpoint=checkpoint)

    def _report(self, evaluation, completed: bool, checkpoint: Optional[Path]) -> TrainingReport:
        store = self.model.store
        return TrainingReport(
            history=[EpochRecord(**record) for record in self.position.history],
            evaluation=evaluation,
            tunable=store.count("tunable"),
            frozen=store.count("frozen"),
            frozen_intact=self.frozen_intact,
            frozen_changed=list(self.frozen_changed),
            completed=completed,
            checkpoint=checkpoint,
        )

    # ----------------------------------------------------------- checkpoints
    def _save(self, name: str) -> Path:
        queues = self.supervision.queues.state() if self.supervision.queues is not None else {}
        optim = self.optimizer.state.state_dict() if self.optimizer is not None else {}
        meta = {"config": self.config.to_dict(), "position": asdict(self.position)}
        return checkpoint_save(self.output_dir / "checkpoints" / name, self.model.store, queues, optim, meta)

    def _resume(self, data: CheckpointData) -> None:
        saved = data.meta.get("config")
        if saved is not None:
            diff = RunConfig.from_dict(saved).diff(self.config)
            if diff:
                raise CheckpointError(f"checkpoint was written by a different configuration: {sorted(diff)}")
        try:
            self.position = _Position(**data.meta["position"])
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"checkpoint position is unreadable: {exc}") from exc
        pos = self.position
        stages = self.stages
        if pos.stage_index < len(stages):
            self._enter_stage(stages[pos.stage_index][0])
        data.restore_params(self.model.store)
        self._baseline = self.model.store.checksums(self.model.store.frozen_names())
        if data.optim and self.optimizer is not None:
            self.optimizer.state = AdamWState.from_state_dict(data.optim)
        if self.supervision.queues is not None:
            self.supervision.queues.load_state(data.queues)
        logger.info("Resumed at step %d (epoch %d, batch %d)", pos.step, pos.epoch, pos.batch_index)


def train(config: RunConfig, output_dir: Optional[Union[str, Path]] = None, **kwargs: Any) -> TrainingReport:
    return Trainer(config, output_dir=output_dir).fit(**kwargs)


__all__ = ["CURVE_FIELDS", "EpochRecord", "Trainer", "TrainingReport", "train"]
