from types import SimpleNamespace

import numpy as np
import pytest
from scipy.special import softmax

from core.evaluation import (
    ConfusionMatrix,
    clip_logits,
    compute_metrics,
    dump_features,
    evaluate,
    predict_labels,
)
from core.exceptions import ContractError
from core.tensor import DiffTensor
from utils.datagen import ClipDataset, LandmarkProvider, SyntheticSample
from utils.tensor_io import read_tensor_file


class TestMetrics:
    def test_hand_example(self):
        metrics = compute_metrics(ConfusionMatrix.from_counts([[3, 1], [0, 1]]))
        assert metrics.war == pytest.approx(0.8)
        assert metrics.uar == pytest.approx(0.875)

    def test_minority_class_missed(self):
        metrics = compute_metrics(ConfusionMatrix.from_counts([[3, 1], [1, 0]]))
        assert metrics.war == pytest.approx(0.6)
        assert metrics.uar == pytest.approx(0.375)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            k = int(rng.integers(2, 7))
            n = int(rng.integers(1, 60))
            y_true = rng.integers(0, k, size=n)
            y_pred = rng.integers(0, k, size=n)
            metrics = compute_metrics(ConfusionMatrix.from_predictions(y_true, y_pred, k))

            correct = sum(int(t == p) for t, p in zip(y_true, y_pred))
            recalls = []
            for c in range(k):
                members = [p for t, p in zip(y_true, y_pred) if t == c]
                if members:
                    recalls.append(sum(int(p == c) for p in members) / len(members))
            assert metrics.war == pytest.approx(correct / n, rel=1e-12)
            assert metrics.uar == pytest.approx(sum(recalls) / len(recalls), rel=1e-12)

    def test_empty_class_left_out(self, caplog):
        metrics = compute_metrics(ConfusionMatrix.from_counts([[2, 0, 0], [0, 0, 0], [1, 0, 1]]))
        assert metrics.excluded == [1]
        assert metrics.recalls[1] is None
        assert metrics.uar == pytest.approx(0.75)
        assert "left out of UAR" in caplog.text

    def test_empty_matrix_rejected(self):
        with pytest.raises(ContractError):
            compute_metrics(ConfusionMatrix(3))

    def test_out_of_range_prediction(self):
        with pytest.raises(ContractError):
            ConfusionMatrix.from_predictions([0, 1], [0, 2], 2)

    def test_ties_go_to_lower_index(self):
        assert predict_labels(np.array([[1.0, 1.0, 0.5], [0.0, 2.0, 2.0]])).tolist() == [0, 1]


def test_logit_and_probability_averages_disagree():
    per_clip = np.array([[[-10.0, 10.0, 9.0]], [[10.5, -10.0, 9.0]]])
    assert predict_labels(per_clip.mean(axis=0)).tolist() == [2]
    assert predict_labels(softmax(per_clip, axis=-1).mean(axis=0)).tolist() == [0]


class _ZeroLandmarks(LandmarkProvider):
    def features(self, sample):
        return np.zeros((sample.length, 1, 2, 2))


class _ClipLookupModel:
    """Returns fixed logits chosen by the frame value of the clip."""

    def __init__(self, config, table):
        self.config = config
        self.table = table

    def forward(self, frames, landmarks, mode=None, return_attention=False):
        keys = frames[:, 0, 0, 0, 0].astype(int)
        return SimpleNamespace(logits=DiffTensor(self.table[keys]))


def test_evaluation_averages_logits_over_clips(tiny):
    config = tiny.with_overrides({"data.appearance_classes": 1, "data.motion_classes": 2})
    frames = np.stack([np.zeros((1, 2, 2)), np.ones((1, 2, 2))])  # frame t holds value t
    dataset = ClipDataset(
        [SyntheticSample(frames=frames, label=2, clip_id="only")], _ZeroLandmarks(config.data),
        frames=1, clip_mode="uniform-2",
    )
    table = np.array([[-10.0, 10.0, 9.0], [10.5, -10.0, 9.0]])
    model = _ClipLookupModel(config, table)
    np.testing.assert_allclose(clip_logits(model, dataset, mode="dfer"), [[0.25, 0.0, 9.0]])
    report = evaluate(model, dataset, mode="dfer")
    assert report.predictions.tolist() == [2]
    assert report.metrics.war == 1.0
    assert evaluate(model, dataset, clip_mode="uniform-1", mode="dfer").predictions.tolist() == [1]


def test_evaluate_real_model(tiny_model, tiny_data):
    _, test_set = tiny_data
    report = evaluate(tiny_model, test_set, batch_size=4)
    assert report.logits.shape == (len(test_set), tiny_model.config.num_classes)
    assert report.confusion.total == len(test_set)
    assert 0.0 <= report.metrics.uar <= 1.0
    assert report.to_dict()["samples"] == len(test_set)


@pytest.mark.parametrize("mode", ["dfer", "sfer"])
def test_dump_shapes(tiny_model, tiny_data, tmp_path, mode):
    _, test_set = tiny_data
    paths = dump_features(tiny_model, test_set, tmp_path, mode=mode, batch_size=4)
    features = read_tensor_file(paths["features"])
    attention = read_tensor_file(paths["attention"])
    labels = read_tensor_file(paths["labels"])
    bb = tiny_model.config.backbone
    assert features.shape == (len(test_set), bb.embed_dim)
    assert attention.shape == (len(test_set), bb.heads, bb.num_patches + 1, bb.num_patches + 1)
    np.testing.assert_allclose(attention.sum(axis=-1), 1.0, atol=1e-9)
    np.testing.assert_array_equal(labels, test_set.labels)
