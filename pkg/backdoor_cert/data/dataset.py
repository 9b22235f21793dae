"""
Symbol-encoded labeled datasets and the binary digit subset.
"""

import logging
from typing import Tuple

import numpy as np

from backdoor_cert.data.idx import RawDataset
from backdoor_cert.errors import DataError, DimensionError, DomainError, SymbolDomainError
from backdoor_cert.noise.discrete_noise import SYMBOL_DTYPE, EncodedVector
from backdoor_cert.noise.seeds import Stream, derive_seed, make_rng

logger = logging.getLogger(__name__)

BINARIZE_THRESHOLD = 0.5


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class TrainingSet:
    """
    Feature matrix (T x D symbols over feature_domain) and labels
    (T symbols over num_classes). Also used for test sets.
    """

    def __init__(self, features, labels, feature_domain: int, num_classes: int):
        features = np.array(features, dtype=SYMBOL_DTYPE)
        labels = np.array(labels, dtype=SYMBOL_DTYPE)
        if features.ndim != 2:
            raise DimensionError(f"features must be a T x D matrix, got shape {features.shape}")
        if labels.ndim != 1 or len(labels) != len(features):
            raise DimensionError(
                f"labels must be a vector of length {len(features)}, got shape {labels.shape}"
            )
        if feature_domain < 2 or num_classes < 2:
            raise SymbolDomainError("feature_domain and num_classes must be at least 2")
        if features.size and (features.min() < 0 or features.max() >= feature_domain):
            raise SymbolDomainError(f"feature symbols must lie in [0, {feature_domain})")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise SymbolDomainError(f"labels must lie in [0, {num_classes})")
        self.features = _frozen(features)
        self.labels = _frozen(labels)
        self.feature_domain = int(feature_domain)
        self.num_classes = int(num_classes)

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def example(self, index: int) -> EncodedVector:
        return EncodedVector(self.features[index], self.feature_domain)

    def replace(self, features=None, labels=None) -> "TrainingSet":
        """Copy with new features and/or labels over the same domains"""
        return TrainingSet(
            self.features if features is None else features,
            self.labels if labels is None else labels,
            self.feature_domain,
            self.num_classes,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrainingSet):
            return NotImplemented
        return (
            self.feature_domain == other.feature_domain
            and self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


def binarize(images: np.ndarray) -> np.ndarray:
    """Normalized pixel below 0.5 becomes 0, otherwise 1"""
    normalized = np.asarray(images, dtype=np.float64) / 255.0
    return (normalized >= BINARIZE_THRESHOLD).astype(SYMBOL_DTYPE)


def make_binary_subset(
    raw: RawDataset,
    digits: Tuple[int, int],
    n_train: int,
    n_test: int,
    seed: int,
) -> Tuple[TrainingSet, TrainingSet]:
    """
    Keep two digits, relabel them 0 and 1, binarize the pixels and draw
    disjoint training and test examples uniformly at random.
    """
    first, second = digits
    if first == second:
        raise DomainError(f"digits must differ, got {digits}")
    if n_train < 1 or n_test < 0:
        raise DomainError(f"need n_train >= 1 and n_test >= 0, got {n_train}, {n_test}")

    pool = np.flatnonzero((raw.labels == first) | (raw.labels == second))
    if len(pool) < n_train + n_test:
        raise DataError(
            f"Only {len(pool)} examples of digits {first}/{second}, "
            f"need {n_train + n_test}"
        )

    order = make_rng(derive_seed(seed, Stream.SUBSET)).permutation(pool)
    chosen_train = order[:n_train]
    chosen_test = order[n_train : n_train + n_test]

    def build(indices: np.ndarray) -> TrainingSet:
        features = binarize(raw.images[indices].reshape(len(indices), -1))
        labels = (raw.labels[indices] == second).astype(SYMBOL_DTYPE)
        return TrainingSet(features, labels, feature_domain=2, num_classes=2)

    train, test = build(chosen_train), build(chosen_test)
    logger.info(
        f"Digits {first}/{second}: pool of {len(pool)}, "
        f"{len(train)} training and {len(test)} test examples"
    )
    return train, test
