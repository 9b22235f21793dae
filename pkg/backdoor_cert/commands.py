"""
Subcommand implementations: prepare, train, certify, attack-eval, reproduce.

Each command takes a RunConfig, reads its inputs from config.out (or the raw
IDX files for prepare) and writes its outputs back under config.out.
"""

import logging
import os
import time

from backdoor_cert.attack.falsification import evaluate_attack
from backdoor_cert.certify.certified_radius import radius_thresholds
from backdoor_cert.certify.estimation import bonferroni_alpha
from backdoor_cert.config import RunConfig
from backdoor_cert.data.dataset import TrainingSet, make_binary_subset
from backdoor_cert.data.idx import load_idx
from backdoor_cert.data.prepared import load_prepared, save_prepared
from backdoor_cert.errors import ConfigurationError
from backdoor_cert.models.schemas import AttackReport, DatasetManifest
from backdoor_cert.reports import (
    ATTACK_REPORT_FILE,
    CERTIFICATION_FILE,
    CURVE_FILE,
    FALSIFICATION_FILE,
    read_certification_csv,
    write_attack_report,
    write_certification_csv,
    write_curve_csv,
    write_falsification_csv,
)
from backdoor_cert.smoothing.ensemble_store import (
    EnsembleHeader,
    read_ensemble,
    read_ensemble_header,
    write_ensemble,
)
from backdoor_cert.smoothing.pipeline import (
    Ensemble,
    build_ensemble,
    certified_accuracy_curve,
    certify_dataset,
    smoothed_accuracy,
    training_fingerprint,
)
from backdoor_cert.utils.files import sha256_file
from backdoor_cert.utils.metrics import RunMetrics

logger = logging.getLogger(__name__)

ENSEMBLE_FILE = "ensemble.bin"
# Radii reported on the console after certification
HEADLINE_RADII = (0, 1, 2, 3, 4)


def ensemble_path(config: RunConfig) -> str:
    return os.path.join(config.out, ENSEMBLE_FILE)


def check_ensemble(config: RunConfig, train: TrainingSet) -> EnsembleHeader:
    """
    Check from its header that <out>/ensemble.bin was built from the prepared
    training set with the configured hyperparameters, beta, ensemble size and seed.
    """
    path = ensemble_path(config)
    header = read_ensemble_header(path, expected_fingerprint=training_fingerprint(train, config.hyperparameters()))
    mismatches = [
        f"{key}={expected} in config but {stored} in the ensemble"
        for key, expected, stored in (
            ("BETA", config.beta, header.noise_spec_features.beta),
            ("NUM_CLASSIFIERS", config.num_classifiers, header.n_classifiers),
            ("SEED", config.seed, header.master_seed),
        )
        if expected != stored
    ]
    if mismatches:
        raise ConfigurationError(f"{path} does not match the run configuration: " + "; ".join(mismatches))
    return header


def load_ensemble(config: RunConfig, train: TrainingSet) -> Ensemble:
    header = check_ensemble(config, train)
    return read_ensemble(ensemble_path(config), expected_fingerprint=header.training_fingerprint)


def cmd_prepare(config: RunConfig, metrics: RunMetrics) -> DatasetManifest:
    """Load raw IDX, take the binary digit subset and store it under <out>/dataset/"""
    raw = load_idx(config.train_images, config.train_labels)
    train, test = make_binary_subset(raw, config.digits, config.train_size, config.test_size, config.seed)
    manifest = DatasetManifest(
        digits=config.digits,
        train_size=len(train),
        test_size=len(test),
        seed=config.seed,
        feature_domain=train.feature_domain,
        num_classes=train.num_classes,
        image_shape=raw.image_shape,
    )
    directory = save_prepared(config.out, train, test, manifest)
    print(f"Prepared digits {config.digits[0]}/{config.digits[1]}: train={len(train)} test={len(test)} -> {directory}")
    return manifest


def cmd_train(config: RunConfig, metrics: RunMetrics) -> str:
    """Train the ensemble on the prepared training set and write <out>/ensemble.bin"""
    train, _, _ = load_prepared(config.out)
    spec = config.noise_spec(train.feature_domain)
    started = time.perf_counter()
    ensemble = build_ensemble(
        train,
        spec,
        config.num_classifiers,
        config.hyperparameters(),
        config.seed,
        workers=config.workers,
        chunk_size=config.chunk_size,
    )
    elapsed = time.perf_counter() - started
    metrics.classifiers_trained.inc(ensemble.n_classifiers)
    metrics.training_seconds.set(elapsed)

    path = ensemble_path(config)
    write_ensemble(path, ensemble)
    logger.info(f"Ensemble file sha256 {sha256_file(path)}")
    print(f"Trained {ensemble.n_classifiers} classifiers in {elapsed:.1f}s -> {path}")
    return path


def cmd_certify(config: RunConfig, metrics: RunMetrics):
    """Certify every prepared test example and write the certification reports"""
    train, test, _ = load_prepared(config.out)
    ensemble = load_ensemble(config, train)
    started = time.perf_counter()
    results = certify_dataset(ensemble, test, config.alpha, workers=config.workers)
    metrics.certification_seconds.set(time.perf_counter() - started)

    curve = certified_accuracy_curve(results)
    write_certification_csv(os.path.join(config.out, CERTIFICATION_FILE), results)
    write_curve_csv(os.path.join(config.out, CURVE_FILE), curve)
    metrics.record_certification(results, curve)

    abstained = sum(1 for result in results if result.abstained)
    logger.info(f"Smoothed accuracy {smoothed_accuracy(results):.4f}, {abstained} abstentions")
    for radius, count, accuracy in curve:
        if radius in HEADLINE_RADII:
            logger.info(f"Certified accuracy at radius {radius}: {accuracy:.4f} ({count}/{len(results)})")
    thresholds = radius_thresholds(ensemble.noise_spec_features, max(HEADLINE_RADII))
    logger.info(
        "p_lower needed per radius: " + ", ".join(f"{r}: {p:.6f}" for r, p in enumerate(thresholds))
    )
    report_path = os.path.join(config.out, CERTIFICATION_FILE)
    logger.info(f"Certification report sha256 {sha256_file(report_path)}")
    print(f"Certified {len(results)} examples -> {report_path}")
    return results


def cmd_attack_eval(config: RunConfig, metrics: RunMetrics) -> AttackReport:
    """Falsify certificates with trigger attacks and contrast with an unsmoothed classifier"""
    trigger = config.trigger()
    if trigger is None:
        raise ConfigurationError("attack-eval needs a trigger: set TRIGGER_TARGET (and TRIGGER_POSITIONS/VALUES)")
    rows = read_certification_csv(os.path.join(config.out, CERTIFICATION_FILE))
    train, test, _ = load_prepared(config.out)
    header = check_ensemble(config, train)

    report = evaluate_attack(
        train,
        test,
        rows,
        trigger,
        header.noise_spec_features,
        header.n_classifiers,
        header.hyper,
        header.master_seed,
        per_example_alpha=bonferroni_alpha(config.alpha, len(test)),
        workers=config.workers,
        chunk_size=config.chunk_size,
    )
    metrics.attack_violations.inc(report.total_violations)
    write_falsification_csv(os.path.join(config.out, FALSIFICATION_FILE), report.falsification)
    write_attack_report(os.path.join(config.out, ATTACK_REPORT_FILE), report)
    print(
        f"Attack evaluation: {report.total_violations} violations over {len(report.falsification)} budget levels "
        f"-> {os.path.join(config.out, ATTACK_REPORT_FILE)}"
    )
    return report


def cmd_reproduce(config: RunConfig, metrics: RunMetrics):
    """prepare, train and certify in one run"""
    cmd_prepare(config, metrics)
    cmd_train(config, metrics)
    return cmd_certify(config, metrics)


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "certify": cmd_certify,
    "attack-eval": cmd_attack_eval,
    "reproduce": cmd_reproduce,
}
