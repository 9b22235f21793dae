"""
Shared test configuration and fixtures
"""
import os

import numpy as np
import pytest

from backdoor_cert.data.dataset import TrainingSet, make_binary_subset
from backdoor_cert.data.idx import RawDataset, write_idx
from backdoor_cert.models.schemas import Hyperparameters, NoiseSpec, TriggerSpec
from backdoor_cert.nn.network import PARAMETER_NAMES, Classifier

IMAGE_SIDE = 8


def _digit_template(digit: int) -> np.ndarray:
    """Crude 8x8 strokes: a vertical bar for 1, a top bar and diagonal for 7"""
    image = np.zeros((IMAGE_SIDE, IMAGE_SIDE), dtype=np.uint8)
    if digit == 1:
        image[1:7, 4] = 255
    elif digit == 7:
        image[1, 1:7] = 255
        for row in range(2, 7):
            image[row, 7 - row] = 255
    else:
        image[1, 2:6] = 255
        image[6, 2:6] = 255
        image[1:7, 5] = 255
    return image


def make_raw_digits(counts=None, seed: int = 0, flip_rate: float = 0.05) -> RawDataset:
    """Synthetic digit images with a few flipped pixels per example"""
    counts = counts or {1: 30, 7: 30, 3: 10}
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for digit, count in counts.items():
        for _ in range(count):
            image = _digit_template(digit).copy()
            flips = rng.random(image.shape) < flip_rate
            image[flips] = 255 - image[flips]
            images.append(image)
            labels.append(digit)
    order = rng.permutation(len(labels))
    return RawDataset(np.array(images)[order], np.array(labels, dtype=np.uint8)[order])


def constant_classifier(label: int, num_features: int = IMAGE_SIDE * IMAGE_SIDE, num_classes: int = 2) -> Classifier:
    """Classifier whose prediction is label for every input"""
    b2 = np.zeros(num_classes)
    b2[label] = 10.0
    return Classifier(
        np.zeros((1, num_features)),
        np.zeros(1),
        np.zeros((num_classes, 1)),
        b2,
        feature_domain=2,
    )


def same_weights(a, b) -> bool:
    """Bitwise equality of two stacked ensembles"""
    return all(np.array_equal(getattr(a, name), getattr(b, name)) for name in PARAMETER_NAMES)


@pytest.fixture
def spec():
    """Binary noise channel with beta 0.9"""
    return NoiseSpec(beta=0.9, domain_size=2)


@pytest.fixture
def raw_digits():
    return make_raw_digits()


@pytest.fixture
def idx_files(tmp_path, raw_digits):
    """Raw synthetic digits written as IDX3/IDX1 files"""
    images_path = os.path.join(tmp_path, "train-images-idx3-ubyte")
    labels_path = os.path.join(tmp_path, "train-labels-idx1-ubyte")
    write_idx(images_path, raw_digits.images)
    write_idx(labels_path, raw_digits.labels)
    return images_path, labels_path


@pytest.fixture
def digit_sets(raw_digits):
    """20 training and 20 test examples of digits 1/7"""
    return make_binary_subset(raw_digits, (1, 7), 20, 20, seed=0)


@pytest.fixture
def train_set(digit_sets):
    return digit_sets[0]


@pytest.fixture
def test_set(digit_sets):
    return digit_sets[1]


@pytest.fixture
def small_hyper():
    """Few hidden units and epochs so ensembles train in milliseconds"""
    return Hyperparameters(hidden=8, epochs=20, learning_rate=0.5)


@pytest.fixture
def tiny_set():
    """Four 3-feature binary examples"""
    return TrainingSet(
        [[0, 0, 1], [1, 1, 0], [0, 1, 1], [1, 0, 0]],
        [0, 1, 0, 1],
        feature_domain=2,
        num_classes=2,
    )


@pytest.fixture
def corner_trigger():
    """Top-left 2x2 block set to 1, poisoned examples relabelled 0"""
    return TriggerSpec(
        pixel_positions=(0, 1, IMAGE_SIDE, IMAGE_SIDE + 1),
        pixel_values=(1, 1, 1, 1),
        target_label=0,
        poison_count=4,
    )


@pytest.fixture
def make_constant_classifier():
    """Factory for classifiers that always predict one label"""
    return constant_classifier


@pytest.fixture
def weights_equal():
    """Compare the stacked weights of two ensembles"""
    return same_weights
