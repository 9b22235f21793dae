"""
On-disk layout of a prepared dataset.

<out>/dataset/
  train-images.idx3-ubyte   binarized symbols, T x rows x cols
  train-labels.idx1-ubyte   class labels 0..c-1
  test-images.idx3-ubyte
  test-labels.idx1-ubyte
  dataset.json              DatasetManifest
"""

import json
import os
from typing import Tuple

from pydantic import ValidationError

from backdoor_cert.data.dataset import TrainingSet
from backdoor_cert.data.idx import encode_idx, load_idx
from backdoor_cert.errors import DataError, FormatError
from backdoor_cert.models.schemas import DatasetManifest
from backdoor_cert.utils.files import atomic_write_bytes, atomic_write_text

DATASET_DIR = "dataset"
MANIFEST_FILE = "dataset.json"
FILES = {
    "train": ("train-images.idx3-ubyte", "train-labels.idx1-ubyte"),
    "test": ("test-images.idx3-ubyte", "test-labels.idx1-ubyte"),
}


def dataset_dir(out_dir: str) -> str:
    return os.path.join(out_dir, DATASET_DIR)


def save_prepared(
    out_dir: str, train: TrainingSet, test: TrainingSet, manifest: DatasetManifest
) -> str:
    """Write the prepared dataset; returns its directory"""
    directory = dataset_dir(out_dir)
    rows, cols = manifest.image_shape
    for split, data in (("train", train), ("test", test)):
        images_file, labels_file = FILES[split]
        images = data.features.reshape(len(data), rows, cols)
        atomic_write_bytes(os.path.join(directory, images_file), encode_idx(images))
        atomic_write_bytes(os.path.join(directory, labels_file), encode_idx(data.labels))
    atomic_write_text(
        os.path.join(directory, MANIFEST_FILE), manifest.model_dump_json(indent=2) + "\n"
    )
    return directory


def load_prepared(out_dir: str) -> Tuple[TrainingSet, TrainingSet, DatasetManifest]:
    """Read a dataset written by save_prepared"""
    directory = dataset_dir(out_dir)
    manifest_path = os.path.join(directory, MANIFEST_FILE)
    if not os.path.exists(manifest_path):
        raise DataError(f"No prepared dataset at {directory}; run the prepare command first")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = DatasetManifest.model_validate(json.load(f))
    except (ValueError, ValidationError) as e:
        raise FormatError(f"Invalid dataset manifest: {e}", path=manifest_path)

    rows, cols = manifest.image_shape
    splits = {}
    for split, (images_file, labels_file) in FILES.items():
        raw = load_idx(os.path.join(directory, images_file), os.path.join(directory, labels_file))
        splits[split] = TrainingSet(
            raw.images.reshape(len(raw), rows * cols),
            raw.labels,
            feature_domain=manifest.feature_domain,
            num_classes=manifest.num_classes,
        )
    return splits["train"], splits["test"], manifest
