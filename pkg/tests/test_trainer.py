import math

import numpy as np
import pytest

from core.checkpoint import checkpoint_load
from core.exceptions import CheckpointError
from core.trainer import Trainer
from modules.optim.adamw import AdamW
from utils.datagen import load_datasets
from utils.datagen.dataset import ClipDataset
from utils.datagen.landmarks import SyntheticLandmarkProvider
from utils.datagen.synthetic import SyntheticSample

from conftest import tiny_config


def fit(config, **kwargs):
    train_set, test_set = load_datasets(config)
    trainer = Trainer(config, train_set=train_set, test_set=test_set, output_dir=kwargs.pop("output_dir", None))
    return trainer, trainer.fit(**kwargs)


def params_of(trainer):
    return {name: tensor.data.copy() for name, tensor in trainer.model.store.items()}


def test_smoke_run(tmp_path):
    trainer, report = fit(tiny_config(), output_dir=tmp_path)
    assert report.completed
    assert len(report.history) == 2
    assert [r.epoch for r in report.history] == [0, 1]
    assert report.history[-1].step == 2 * trainer.steps_per_epoch
    assert all(math.isfinite(r.loss_ce) for r in report.history)
    assert report.frozen_intact
    assert report.tunable + report.frozen == trainer.model.count_parameters()
    for name in ("init.npz", "last.npz", "final.npz"):
        assert (tmp_path / "checkpoints" / name).exists()
    assert report.evaluation.metrics.war == report.final.war


def test_learning_rate_follows_cosine():
    trainer, report = fit(tiny_config({"optim.epochs": 3}))
    assert report.history[0].lr == pytest.approx(trainer.config.optim.lr * 0.5 * (1 + math.cos(math.pi * 2 / 9)))
    assert report.history[-1].lr < report.history[0].lr


def test_frozen_parameters_match_initial_checkpoint(tmp_path):
    trainer, _ = fit(tiny_config(), output_dir=tmp_path)
    initial = checkpoint_load(tmp_path / "checkpoints" / "init.npz").params
    store = trainer.model.store
    assert store.frozen_names()
    for name in store.frozen_names():
        assert store[name].data.tobytes() == initial[name].tobytes()
    moved = [name for name in store.tunable_names() if not np.array_equal(store[name].data, initial[name])]
    assert moved


def test_zero_eta_matches_one_hot_exactly():
    one_hot, _ = fit(tiny_config({"sdl.supervision": "one_hot"}))
    no_distill, report = fit(tiny_config({"sdl.supervision": "sdl", "sdl.eta_max": 0.0}))
    assert all(r.loss_bce == 0.0 for r in report.history)
    a, b = params_of(one_hot), params_of(no_distill)
    for name in a:
        assert a[name].tobytes() == b[name].tobytes(), name


def test_distillation_engages_once_queues_fill():
    _, report = fit(tiny_config({"optim.epochs": 3, "sdl.queue_size": 4}))
    assert report.history[0].eta == 0.0
    assert report.history[-1].eta == 1.0
    assert report.history[-1].loss_bce > 0.0


def test_mid_epoch_resume_matches_uninterrupted_run(tmp_path):
    config = tiny_config({"optim.epochs": 2})
    straight, straight_report = fit(config)

    first, partial = fit(config, output_dir=tmp_path, max_steps=4)
    assert not partial.completed
    assert first.position.batch_index == 1
    resumed_trainer, resumed = fit(config, output_dir=tmp_path, resume_from=tmp_path / "checkpoints" / "last.npz")
    assert resumed.completed

    a, b = params_of(straight), params_of(resumed_trainer)
    for name in a:
        assert a[name].tobytes() == b[name].tobytes(), name
    assert [r.to_dict() for r in resumed.history] == [r.to_dict() for r in straight_report.history]


def test_resume_with_other_config_rejected(tmp_path):
    fit(tiny_config(), output_dir=tmp_path, max_steps=1)
    with pytest.raises(CheckpointError):
        fit(tiny_config({"optim.lr_base": 0.5}), resume_from=tmp_path / "checkpoints" / "last.npz")


def test_image_stage_precedes_adaptation():
    config = tiny_config({"optim.sfer_epochs": 1, "optim.epochs": 1})
    trainer, report = fit(config)
    assert trainer.stages == [("sfer", 1), ("dfer", 1)]
    assert [r.stage for r in report.history] == ["sfer", "dfer"]
    assert trainer.model.store.is_tunable("classifier.weight")
    assert not trainer.model.store.is_tunable("backbone.pos_embed")


def test_image_mode_trains_single_frames():
    trainer, report = fit(tiny_config({"mode": "sfer", "optim.epochs": 1}))
    assert trainer.stages == [("sfer", 1)]
    assert report.history[0].stage == "sfer"
    assert report.history[0].loss_bce == 0.0


def test_oversampled_epochs_are_seeded():
    config = tiny_config({"optim.oversample": True})
    trainer, _ = fit(config)
    np.testing.assert_array_equal(trainer.epoch_order(3), trainer.epoch_order(3))
    assert len(trainer.epoch_order(0)) == len(trainer.train_set)


@pytest.mark.slow
def test_desk_training_beats_chance():
    config = tiny_config({"data.num_train": 120, "data.num_test": 60, "optim.epochs": 50, "optim.batch_size": 8})
    _, report = fit(config)
    assert report.evaluation.metrics.war > 1.0 / config.num_classes + 0.1


def separable_set(config, count, seed):
    """Dark clips are class 0, bright clips class 1; nothing else varies."""
    rng = np.random.default_rng(seed)
    data = config.data
    shape = (data.sequence_length, data.channels, data.image_size, data.image_size)
    centre = np.full((data.sequence_length, data.keypoints, 2), data.image_size / 2.0)
    samples = []
    for i in range(count):
        label = i % 2
        level = 0.8 if label else 0.2
        frames = np.clip(level + 0.02 * rng.standard_normal(shape), 0.0, 1.0)
        samples.append(SyntheticSample(frames=frames, label=label, clip_id=f"sep-{seed}-{i}", keypoints=centre))
    return ClipDataset(samples, SyntheticLandmarkProvider(data), data.frames)


def test_loss_drops_ninety_percent_on_separable_clips():
    config = tiny_config({"mode": "sfer", "optim.epochs": 50, "optim.lr_base": 0.02})
    trainer = Trainer(config, train_set=separable_set(config, 16, 0), test_set=separable_set(config, 8, 1))
    report = trainer.fit()
    assert len(report.history) == 50
    assert report.history[-1].loss_ce <= 0.1 * report.history[0].loss_ce
    assert report.evaluation.metrics.war == 1.0


def test_frozen_parameters_survive_fifty_epochs(tmp_path, grad_config):
    config = grad_config.with_overrides({"optim.epochs": 50})
    trainer, report = fit(config, output_dir=tmp_path)
    assert report.completed and report.frozen_intact
    assert len(report.history) == 50
    initial = checkpoint_load(tmp_path / "checkpoints" / "init.npz").params
    store = trainer.model.store
    for name in store.frozen_names():
        assert store[name].data.tobytes() == initial[name].tobytes(), name


def test_moved_frozen_weight_stops_training(monkeypatch):
    original_step = AdamW.step

    def leaky_step(self, lr):
        original_step(self, lr)
        self.params["backbone.pos_embed"].data[0, 0] += 1.0

    monkeypatch.setattr(AdamW, "step", leaky_step)
    _, report = fit(tiny_config())
    assert not report.frozen_intact
    assert not report.completed
    assert report.frozen_changed == ["backbone.pos_embed"]
    assert report.history == []
