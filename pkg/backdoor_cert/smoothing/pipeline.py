"""
Smoothed train-then-predict pipeline.

N classifiers are trained on independently noised copies (X + tau^j, y + eps^j)
of the training set; a test example x gets one vote per classifier,
h_j(x + gamma^j), with fresh test noise gamma^j per (classifier, example).
The classifiers are shared by every test example.
"""

import hashlib
import logging
import time
from typing import List, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from backdoor_cert.certify.estimation import bonferroni_alpha, certify_votes
from backdoor_cert.data.dataset import TrainingSet
from backdoor_cert.errors import (
    ConfigurationError,
    DimensionError,
    DomainError,
    SymbolDomainError,
    TrainingDivergedError,
)
from backdoor_cert.models.schemas import CertificationResult, Hyperparameters, NoiseSpec, VoteCounts
from backdoor_cert.nn.network import PARAMETER_NAMES, Classifier, train_classifier
from backdoor_cert.noise.discrete_noise import (
    EncodedVector,
    apply_noise_matrix,
    draw_noise_symbols,
)
from backdoor_cert.noise.seeds import Stream, derive_seed, make_rng

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 250
# Classifiers evaluated together when voting
VOTE_BATCH = 1000


def training_fingerprint(train: TrainingSet, hyper: Hyperparameters) -> str:
    """SHA-256 over the training symbols, domains and hyperparameters"""
    digest = hashlib.sha256()
    digest.update(f"{len(train)}x{train.num_features}|d={train.feature_domain}|c={train.num_classes}|".encode())
    digest.update(np.ascontiguousarray(train.features, dtype="<i8").tobytes())
    digest.update(np.ascontiguousarray(train.labels, dtype="<i8").tobytes())
    digest.update(hyper.model_dump_json().encode())
    return digest.hexdigest()


class Ensemble:
    """
    N classifiers stored as stacked weight tensors:
    w1 (N, H, D), b1 (N, H), w2 (N, c, H), b2 (N, c).
    """

    def __init__(
        self,
        w1: np.ndarray,
        b1: np.ndarray,
        w2: np.ndarray,
        b2: np.ndarray,
        noise_spec_features: NoiseSpec,
        noise_spec_labels: NoiseSpec,
        master_seed: int,
        training_fingerprint: str,
        hyper: Hyperparameters,
    ):
        arrays = [np.asarray(a, dtype=np.float64) for a in (w1, b1, w2, b2)]
        w1, b1, w2, b2 = arrays
        if w1.ndim != 3 or len(w1) < 1:
            raise DimensionError(f"w1 must be N x H x D with N >= 1, got shape {w1.shape}")
        n, hidden, _ = w1.shape
        num_classes = w2.shape[1]
        if b1.shape != (n, hidden) or w2.shape != (n, num_classes, hidden) or b2.shape != (n, num_classes):
            raise DimensionError("inconsistent ensemble weight shapes")
        for array in arrays:
            array.setflags(write=False)
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.noise_spec_features = noise_spec_features
        self.noise_spec_labels = noise_spec_labels
        self.master_seed = int(master_seed)
        self.training_fingerprint = training_fingerprint
        self.hyper = hyper

    @classmethod
    def from_classifiers(
        cls,
        classifiers: Sequence[Classifier],
        noise_spec_features: NoiseSpec,
        noise_spec_labels: NoiseSpec,
        master_seed: int,
        training_fingerprint: str,
        hyper: Hyperparameters,
    ) -> "Ensemble":
        stacked = [np.stack([clf.params[name] for clf in classifiers]) for name in PARAMETER_NAMES]
        return cls(*stacked, noise_spec_features, noise_spec_labels, master_seed, training_fingerprint, hyper)

    @property
    def n_classifiers(self) -> int:
        return int(self.w1.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.w1.shape[2])

    @property
    def hidden(self) -> int:
        return int(self.w1.shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.w2.shape[1])

    def classifier(self, index: int) -> Classifier:
        return Classifier(
            self.w1[index],
            self.b1[index],
            self.w2[index],
            self.b2[index],
            feature_domain=self.noise_spec_features.domain_size,
            hyper=self.hyper,
        )


def label_noise_spec(spec: NoiseSpec, train: TrainingSet) -> NoiseSpec:
    """Label noise shares beta; certification requires d = c"""
    if spec.domain_size != train.feature_domain:
        raise SymbolDomainError(
            f"noise domain {spec.domain_size} does not match feature domain {train.feature_domain}"
        )
    if train.feature_domain != train.num_classes:
        raise ConfigurationError(
            f"Feature domain size {train.feature_domain} differs from the number of classes "
            f"{train.num_classes}; the summed l0 certificate needs one shared domain size"
        )
    return NoiseSpec(beta=spec.beta, domain_size=train.num_classes)


def noised_training_set(
    train: TrainingSet, spec: NoiseSpec, label_spec: NoiseSpec, master_seed: int, index: int
) -> TrainingSet:
    """(X + tau^j, y + eps^j) for classifier j"""
    features = apply_noise_matrix(train.features, spec, derive_seed(master_seed, Stream.TRAIN_FEATURES, index))
    labels = apply_noise_matrix(train.labels, label_spec, derive_seed(master_seed, Stream.TRAIN_LABELS, index))
    return train.replace(features=features, labels=labels)


def _train_chunk(
    train: TrainingSet,
    spec: NoiseSpec,
    label_spec: NoiseSpec,
    hyper: Hyperparameters,
    master_seed: int,
    start: int,
    stop: int,
) -> Tuple[np.ndarray, ...]:
    classifiers = []
    # One BLAS thread keeps floating-point reduction order independent of the worker count
    with threadpool_limits(limits=1):
        for j in range(start, stop):
            noisy = noised_training_set(train, spec, label_spec, master_seed, j)
            try:
                classifiers.append(
                    train_classifier(noisy, hyper, derive_seed(master_seed, Stream.TRAIN_INIT, j))
                )
            except TrainingDivergedError as e:
                raise TrainingDivergedError(e.epoch, classifier_index=j) from e
    return tuple(np.stack([clf.params[name] for clf in classifiers]) for name in PARAMETER_NAMES)


def build_ensemble(
    train: TrainingSet,
    spec: NoiseSpec,
    n_classifiers: int,
    hyper: Hyperparameters,
    master_seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> Ensemble:
    """Train N classifiers on independently noised training sets"""
    if n_classifiers < 1:
        raise DomainError(f"n_classifiers must be at least 1, got {n_classifiers}")
    if chunk_size < 1:
        raise DomainError(f"chunk_size must be at least 1, got {chunk_size}")
    label_spec = label_noise_spec(spec, train)

    bounds = [(s, min(s + chunk_size, n_classifiers)) for s in range(0, n_classifiers, chunk_size)]
    logger.info(
        f"Training {n_classifiers} classifiers (beta={spec.beta}, d={spec.domain_size}, "
        f"hidden={hyper.hidden}, epochs={hyper.epochs}) on {workers} worker(s)"
    )
    started = time.perf_counter()
    parts = []
    done = 0
    results = Parallel(n_jobs=workers, return_as="generator")(
        delayed(_train_chunk)(train, spec, label_spec, hyper, master_seed, start, stop)
        for start, stop in bounds
    )
    for part in results:
        parts.append(part)
        done += len(part[0])
        elapsed = time.perf_counter() - started
        logger.info(f"Trained {done}/{n_classifiers} classifiers ({done / max(elapsed, 1e-9):.1f} classifiers/sec)")

    stacked = [np.concatenate([part[k] for part in parts]) for k in range(len(PARAMETER_NAMES))]
    logger.info(f"Ensemble trained in {time.perf_counter() - started:.1f}s")
    return Ensemble(
        *stacked,
        noise_spec_features=spec,
        noise_spec_labels=label_spec,
        master_seed=master_seed,
        training_fingerprint=training_fingerprint(train, hyper),
        hyper=hyper,
    )


def vote_noise(ens: Ensemble, index: int, example_index: int) -> np.ndarray:
    """gamma^j for classifier j and one test example"""
    rng = make_rng(derive_seed(ens.master_seed, Stream.TEST, index, example_index))
    return draw_noise_symbols(rng, ens.noise_spec_features, ens.num_features)


def noisy_predictions(ens: Ensemble, x: EncodedVector, example_index: int) -> np.ndarray:
    """h_j(x + gamma^j) for every classifier j"""
    if len(x) != ens.num_features:
        raise DimensionError(f"expected {ens.num_features} features, got {len(x)}")
    d = ens.noise_spec_features.domain_size
    if x.domain_size != d:
        raise SymbolDomainError(f"input domain {x.domain_size} does not match ensemble domain {d}")

    predictions = np.empty(ens.n_classifiers, dtype=np.int64)
    for start in range(0, ens.n_classifiers, VOTE_BATCH):
        stop = min(start + VOTE_BATCH, ens.n_classifiers)
        noise = np.stack([vote_noise(ens, j, example_index) for j in range(start, stop)])
        inputs = ((x.symbols + noise) % d).astype(np.float64) / d
        hidden = np.matmul(ens.w1[start:stop], inputs[:, :, np.newaxis])[:, :, 0] + ens.b1[start:stop]
        np.maximum(hidden, 0.0, out=hidden)
        logits = np.matmul(ens.w2[start:stop], hidden[:, :, np.newaxis])[:, :, 0] + ens.b2[start:stop]
        predictions[start:stop] = np.argmax(logits, axis=1)
    return predictions


def smoothed_votes(ens: Ensemble, x: EncodedVector, example_index: int) -> VoteCounts:
    """Vote counts N_i = #{j : h_j(x + gamma^j) = i}"""
    return VoteCounts.from_predictions(noisy_predictions(ens, x, example_index), ens.num_classes)


def _votes_chunk(ens: Ensemble, examples: Sequence[Tuple[int, EncodedVector]]) -> List[VoteCounts]:
    return [smoothed_votes(ens, x, index) for index, x in examples]


def smoothed_votes_many(
    ens: Ensemble, examples: Sequence[Tuple[int, EncodedVector]], workers: int = 1
) -> List[VoteCounts]:
    """Votes for many (example_index, x) pairs, in input order"""
    if not examples:
        return []
    n_chunks = min(len(examples), max(1, workers) * 4)
    bounds = np.linspace(0, len(examples), n_chunks + 1).astype(int)
    # BLAS pools are process-wide, so one limit covers every voting thread
    with threadpool_limits(limits=1):
        parts = Parallel(n_jobs=workers, backend="threading")(
            delayed(_votes_chunk)(ens, examples[a:b]) for a, b in zip(bounds[:-1], bounds[1:]) if b > a
        )
    return [votes for part in parts for votes in part]


def _require_uniform_domain(ens: Ensemble) -> NoiseSpec:
    features, labels = ens.noise_spec_features, ens.noise_spec_labels
    if (features.beta, features.domain_size) != (labels.beta, labels.domain_size):
        raise ConfigurationError(
            "Certification needs feature and label noise with the same beta and domain size"
        )
    return features


def result_from_votes(
    ens: Ensemble, votes: VoteCounts, true_label: int, per_example_alpha: float, example_index: int
) -> CertificationResult:
    spec = _require_uniform_domain(ens)
    predicted, _, p_lower, radius = certify_votes(votes, spec, per_example_alpha)
    return CertificationResult(
        example_index=example_index,
        true_label=true_label,
        predicted_label=predicted,
        votes=votes,
        p_lower=p_lower,
        radius=radius,
    )


def certify_example(
    ens: Ensemble,
    x: EncodedVector,
    true_label: int,
    per_example_alpha: float,
    example_index: int,
) -> CertificationResult:
    """Smoothed label, p_lower and certified radius for one test example"""
    if not (0.0 < per_example_alpha < 1.0):
        raise DomainError(f"per_example_alpha must lie in (0, 1), got {per_example_alpha}")
    _require_uniform_domain(ens)
    votes = smoothed_votes(ens, x, example_index)
    return result_from_votes(ens, votes, true_label, per_example_alpha, example_index)


def certify_dataset(
    ens: Ensemble, test: TrainingSet, alpha: float, workers: int = 1
) -> List[CertificationResult]:
    """Certify every test example with Bonferroni-corrected significance"""
    _require_uniform_domain(ens)
    per_example_alpha = bonferroni_alpha(alpha, len(test))
    logger.info(
        f"Certifying {len(test)} examples with {ens.n_classifiers} classifiers, "
        f"per-example alpha {per_example_alpha:.3g}"
    )
    started = time.perf_counter()
    examples = [(i, test.example(i)) for i in range(len(test))]
    all_votes = smoothed_votes_many(ens, examples, workers=workers)
    results = [
        result_from_votes(ens, votes, int(test.labels[i]), per_example_alpha, i)
        for i, votes in enumerate(all_votes)
    ]
    logger.info(f"Certified {len(results)} examples in {time.perf_counter() - started:.1f}s")
    return results


def certified_accuracy(results: Sequence[CertificationResult], r: int) -> float:
    """Fraction correct and certified at radius >= r; abstentions always count as failures"""
    if not results:
        raise DomainError("certified accuracy of an empty result list is undefined")
    hits = sum(
        1
        for result in results
        if result.predicted_label is not None
        and result.predicted_label == result.true_label
        and result.radius >= r
    )
    return hits / len(results)


def certified_accuracy_curve(results: Sequence[CertificationResult]) -> List[Tuple[int, int, float]]:
    """(radius, n_certified_correct, certified_accuracy) for radius 0..max observed"""
    max_radius = max((result.radius for result in results if result.radius is not None), default=0)
    curve = []
    for r in range(max_radius + 1):
        accuracy = certified_accuracy(results, r)
        curve.append((r, int(round(accuracy * len(results))), accuracy))
    return curve


def smoothed_accuracy(results: Sequence[CertificationResult]) -> float:
    """Fraction of examples the smoothed function labels correctly without abstaining"""
    if not results:
        raise DomainError("accuracy of an empty result list is undefined")
    return sum(1 for r in results if r.predicted_label == r.true_label) / len(results)

