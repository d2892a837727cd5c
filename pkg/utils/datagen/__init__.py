"""Synthetic clips, landmark features, clip sampling and dataset manifests."""

from .clips import clip_indices, sample_clip
from .dataset import Batch, ClipDataset, load_datasets, read_manifest, samples_from_manifest, write_manifest
from .landmarks import FileLandmarkProvider, LandmarkProvider, SyntheticLandmarkProvider, landmark_provider
from .synthetic import MOTION_DIRECTIONS, SyntheticSample, class_names, generate_dataset, generate_sample

__all__ = [
    "Batch",
    "ClipDataset",
    "FileLandmarkProvider",
    "LandmarkProvider",
    "MOTION_DIRECTIONS",
    "SyntheticLandmarkProvider",
    "SyntheticSample",
    "class_names",
    "clip_indices",
    "generate_dataset",
    "generate_sample",
    "landmark_provider",
    "load_datasets",
    "read_manifest",
    "sample_clip",
    "samples_from_manifest",
    "write_manifest",
]
