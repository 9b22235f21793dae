"""
Empirical falsification of certificates with real trigger attacks.

For every budget b up to the largest certified radius, the training set is
poisoned within ceil(b/2) changes, a fresh ensemble is trained on it, and
each test example certified at radius >= b is triggered within floor(b/2)
changes and re-predicted. A changed smoothed label is a violation.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from backdoor_cert.attack.backdoor import apply_trigger, poison_training_set, truncate_attack_many
from backdoor_cert.certify.estimation import top_label
from backdoor_cert.data.dataset import TrainingSet
from backdoor_cert.errors import DataError
from backdoor_cert.models.schemas import (
    AttackReport,
    CertificationRow,
    FalsificationRow,
    Hyperparameters,
    NoiseSpec,
    TriggerSpec,
)
from backdoor_cert.nn.network import Classifier, accuracy, train_classifier
from backdoor_cert.noise.seeds import Stream, derive_seed
from backdoor_cert.smoothing.pipeline import DEFAULT_CHUNK_SIZE, build_ensemble, smoothed_votes_many

logger = logging.getLogger(__name__)


def falsify_certificates(
    train: TrainingSet,
    test: TrainingSet,
    rows: Sequence[CertificationRow],
    trigger: TriggerSpec,
    spec: NoiseSpec,
    n_classifiers: int,
    hyper: Hyperparameters,
    master_seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> List[FalsificationRow]:
    """One FalsificationRow per budget 1..max certified radius"""
    trigger.check_against(test.num_features, test.feature_domain, test.num_classes)
    certified = [row for row in rows if row.certified]
    for row in certified:
        if row.example_index >= len(test):
            raise DataError(
                f"Certification report refers to example {row.example_index}, "
                f"test set has {len(test)}"
            )
    max_radius = max((row.radius for row in certified), default=0)

    falsification = []
    for budget in range(1, max_radius + 1):
        checked = [row for row in certified if row.radius >= budget]
        poisoned, triggered, accounting = truncate_attack_many(
            train, [test.example(row.example_index) for row in checked], trigger, budget, master_seed
        )
        # Fresh noise for the retrained ensemble
        ensemble = build_ensemble(
            poisoned,
            spec,
            n_classifiers,
            hyper,
            derive_seed(master_seed, Stream.POISON, budget),
            workers=workers,
            chunk_size=chunk_size,
        )

        votes = smoothed_votes_many(
            ensemble,
            [(row.example_index, x) for row, (x, _) in zip(checked, triggered)],
            workers=workers,
        )
        violations = sum(1 for row, v in zip(checked, votes) if top_label(v) != row.predicted_label)
        max_test_changes = max((changes for _, changes in triggered), default=0)

        result = FalsificationRow(
            budget=budget,
            n_checked=len(checked),
            n_violations=violations,
            train_changes=accounting.total,
            max_test_changes=max_test_changes,
        )
        logger.info(
            f"Budget {budget}: {result.n_checked} checked, {result.n_violations} violations "
            f"({result.train_changes} training + up to {result.max_test_changes} test changes)"
        )
        falsification.append(result)
    return falsification


def attack_success_rate(clf: Classifier, test: TrainingSet, trigger: TriggerSpec) -> Optional[float]:
    """
    Fraction of triggered test examples with true label != target predicted as
    target; None when every test example already carries the target label.
    """
    victims = np.flatnonzero(test.labels != trigger.target_label)
    if len(victims) == 0:
        logger.warning(f"No test example has a label other than the trigger target {trigger.target_label}")
        return None
    triggered = np.stack([apply_trigger(test.example(i), trigger)[0].symbols for i in victims])
    return float(np.mean(clf.predict_batch(triggered) == trigger.target_label))


def _rate(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def evaluate_attack(
    train: TrainingSet,
    test: TrainingSet,
    rows: Sequence[CertificationRow],
    trigger: TriggerSpec,
    spec: NoiseSpec,
    n_classifiers: int,
    hyper: Hyperparameters,
    master_seed: int,
    per_example_alpha: float,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> AttackReport:
    """Falsification harness plus the unsmoothed single-classifier contrast"""
    falsification = falsify_certificates(
        train, test, rows, trigger, spec, n_classifiers, hyper, master_seed, workers, chunk_size
    )
    warning = None
    if not falsification:
        warning = "No example is certified at radius >= 1; every attack budget exceeds the certificates"
        logger.warning(warning)

    init_seed = derive_seed(master_seed, Stream.POISON, 0)
    clean = train_classifier(train, hyper, init_seed)
    poisoned, accounting = poison_training_set(train, trigger, master_seed)
    backdoored = train_classifier(poisoned, hyper, init_seed)
    report = AttackReport(
        falsification=falsification,
        total_violations=sum(row.n_violations for row in falsification),
        allowed_violations=per_example_alpha * sum(row.n_checked for row in falsification),
        clean_accuracy_unsmoothed=accuracy(clean, test),
        attack_success_unsmoothed=attack_success_rate(backdoored, test, trigger),
        attack_success_baseline=attack_success_rate(clean, test, trigger),
        warning=warning,
    )
    logger.info(
        f"Unsmoothed classifier: clean accuracy {report.clean_accuracy_unsmoothed:.4f}, "
        f"attack success {_rate(report.attack_success_unsmoothed)} after {accounting.total} "
        f"training changes (baseline {_rate(report.attack_success_baseline)})"
    )
    if report.total_violations:
        logger.error(f"{report.total_violations} certificate violations observed")
    return report
