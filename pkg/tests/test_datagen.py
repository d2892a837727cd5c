import numpy as np
import pytest
from scipy import stats

from core.config import DataConfig
from core.exceptions import ContractError, DataFormatError
from utils.datagen import (
    FileLandmarkProvider,
    SyntheticLandmarkProvider,
    class_names,
    generate_dataset,
    generate_sample,
    load_datasets,
    read_manifest,
    write_manifest,
)
from utils.datagen.synthetic import MOTION_DIRECTIONS, torus_offsets

from conftest import tiny_config


def small_data(**kwargs):
    values = dict(image_size=16, landmark_size=16, sequence_length=4, frames=4, keypoints=3, heatmap_sigma=1.5)
    values.update(kwargs)
    return DataConfig(**values)


def samples_of(cfg, label, count, seed=0):
    k = cfg.num_classes
    return [generate_sample(cfg, seed, "train", label + k * i) for i in range(count)]


def test_class_names_order():
    assert class_names(DataConfig()) == ["appearance_0", "appearance_1", "up", "down", "left", "right"]


def test_sample_is_pure_function_of_its_key():
    cfg = small_data()
    a = generate_sample(cfg, 7, "train", 4)
    b = generate_sample(cfg, 7, "train", 4)
    np.testing.assert_array_equal(a.frames, b.frames)
    assert a.label == 4 % cfg.num_classes
    assert not np.array_equal(a.frames, generate_sample(cfg, 7, "test", 4).frames)
    assert not np.array_equal(a.frames, generate_sample(cfg, 8, "train", 4).frames)


def test_dataset_is_balanced():
    cfg = small_data(num_train=24)
    labels = [s.label for s in generate_dataset(cfg, 0, "train")]
    assert np.bincount(labels).tolist() == [4] * 6


def test_frames_in_unit_range():
    for occlusion in (False, True):
        sample = generate_sample(small_data(occlusion=occlusion), 0, "train", 3)
        assert sample.frames.shape == (4, 3, 16, 16)
        assert sample.frames.min() >= 0.0 and sample.frames.max() <= 1.0


def test_unknown_split():
    with pytest.raises(ContractError):
        generate_sample(small_data(), 0, "validation", 0)


def test_motion_keypoints_follow_direction():
    cfg = small_data()
    for offset, (direction, (dx, dy)) in enumerate(MOTION_DIRECTIONS.items()):
        sample = samples_of(cfg, cfg.appearance_classes + offset, 1)[0]
        step = torus_offsets(sample.keypoints[1:], sample.keypoints[:-1], cfg.image_size)
        np.testing.assert_allclose(step[..., 0], dx, atol=1e-9, err_msg=direction)
        np.testing.assert_allclose(step[..., 1], dy, atol=1e-9, err_msg=direction)


def test_single_frame_does_not_reveal_up_versus_down():
    cfg = small_data()
    up = samples_of(cfg, 2, 150)
    down = samples_of(cfg, 3, 150)

    def brightness(samples):
        return [s.frames[2, 0].sum() for s in samples]

    def brightest_row(samples):
        return [int(np.argmax(s.frames[2, 0].sum(axis=1))) for s in samples]

    assert stats.ks_2samp(brightness(up), brightness(down)).pvalue > 0.01
    assert stats.ks_2samp(brightest_row(up), brightest_row(down)).pvalue > 0.01


def test_appearance_classes_separable_from_one_frame():
    cfg = small_data()
    samples = samples_of(cfg, 0, 40) + samples_of(cfg, 1, 40)
    feature = np.array([s.frames[0, 1].mean() - s.frames[0, 2].mean() for s in samples])
    labels = np.array([s.label for s in samples])
    accuracy = np.mean((feature < 0).astype(int) == labels)
    assert accuracy >= 0.95


class TestLandmarks:
    def test_heatmap_peaks_at_keypoint(self):
        provider = SyntheticLandmarkProvider(small_data(keypoints=1))
        maps = provider.heatmaps(np.array([[[3.0, 5.0]]]))
        assert maps.shape == (1, 1, 16, 16)
        assert np.unravel_index(np.argmax(maps[0, 0]), (16, 16)) == (5, 3)
        assert maps.max() == pytest.approx(1.0)

    def test_heatmap_scales_to_landmark_canvas(self):
        provider = SyntheticLandmarkProvider(small_data(keypoints=1, landmark_size=8))
        maps = provider.heatmaps(np.array([[[6.0, 10.0]]]))
        assert np.unravel_index(np.argmax(maps[0, 0]), (8, 8)) == (5, 3)

    def test_zero_keypoints_rejected(self):
        provider = SyntheticLandmarkProvider(small_data())
        with pytest.raises(ContractError):
            provider.heatmaps(np.zeros((4, 0, 2)))

    def test_feature_layout(self):
        cfg = small_data(landmark_size=8)
        sample = generate_sample(cfg, 0, "train", 2)
        features = SyntheticLandmarkProvider(cfg).features(sample)
        assert features.shape == (4, cfg.keypoints + 1, 8, 8)
        assert features.min() >= 0.0 and features.max() <= 1.0 + 1e-12

    def test_repeated_calls_hit_the_cache(self):
        cfg = small_data(landmark_size=8)
        provider = SyntheticLandmarkProvider(cfg)
        sample = generate_sample(cfg, 0, "train", 1)
        first = provider(sample)
        assert provider(sample) is first
        info = provider.cache_info()
        assert (info.hits, info.misses) == (1, 1)

    def test_cache_is_bounded(self):
        cfg = small_data(landmark_size=8)
        provider = SyntheticLandmarkProvider(cfg, cache_size=2)
        samples = [generate_sample(cfg, 0, "train", i) for i in range(3)]
        for sample in samples:
            provider(sample)
        info = provider.cache_info()
        assert info.maxsize == 2 and info.currsize == 2
        provider(samples[0])
        assert provider.cache_info().misses == 4

    def test_cache_can_be_disabled(self):
        cfg = small_data(landmark_size=8)
        provider = SyntheticLandmarkProvider(cfg, cache_size=0)
        sample = generate_sample(cfg, 0, "train", 1)
        assert provider.cache_info() is None
        assert provider(sample) is not provider(sample)
        np.testing.assert_array_equal(provider(sample), provider.features(sample))


class TestManifest:
    def test_manifest_round_trip(self, tmp_path):
        config = tiny_config()
        data = config.data
        splits = {split: generate_dataset(data, config.seed, split) for split in ("train", "test")}
        manifest = write_manifest(tmp_path, splits, SyntheticLandmarkProvider(data))
        records = read_manifest(manifest)
        assert len(records) == data.num_train + data.num_test
        assert records[0]["frames_path"] == "train/train-00000.frames.s2dt"

        from_files, _ = load_datasets(config.with_overrides({"data.manifest": str(manifest)}))
        generated, _ = load_datasets(config)
        frames_a, marks_a = from_files.clip(3)
        frames_b, marks_b = generated.clip(3)
        np.testing.assert_allclose(frames_a, frames_b.astype(np.float32), atol=1e-7)
        np.testing.assert_allclose(marks_a, marks_b.astype(np.float32), atol=1e-7)
        np.testing.assert_array_equal(from_files.labels, generated.labels)

    def test_bad_manifest_line(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text('{"clip_id": "a"}\n', encoding="utf-8")
        with pytest.raises(DataFormatError):
            read_manifest(path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataFormatError):
            read_manifest(tmp_path / "absent.jsonl")

    def test_file_provider_reads_each_clip_once(self, tmp_path):
        config = tiny_config()
        splits = {split: generate_dataset(config.data, config.seed, split) for split in ("train", "test")}
        manifest = write_manifest(tmp_path, splits, SyntheticLandmarkProvider(config.data))
        train, _ = load_datasets(config.with_overrides({"data.manifest": str(manifest)}))
        assert isinstance(train.provider, FileLandmarkProvider)
        for _ in range(3):
            train.clip(0)
            train.clip(1)
        info = train.provider.cache_info()
        assert (info.misses, info.hits, info.currsize) == (2, 4, 2)
