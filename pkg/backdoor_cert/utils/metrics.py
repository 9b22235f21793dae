"""
Per-run metrics exported in the Prometheus text format.
"""

import logging
import os
from typing import Sequence

from prometheus_client import CollectorRegistry, Counter, Gauge, write_to_textfile

from backdoor_cert.models.schemas import CertificationResult

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.prom"


class RunMetrics:
    """Counters and gauges of one CLI invocation, kept in a private registry"""

    def __init__(self):
        self.registry = CollectorRegistry()
        self.classifiers_trained = Counter(
            "backdoor_cert_classifiers_trained", "Classifiers trained on noised data", registry=self.registry
        )
        self.training_seconds = Gauge(
            "backdoor_cert_training_seconds", "Wall-clock seconds spent training the ensemble", registry=self.registry
        )
        self.examples_certified = Counter(
            "backdoor_cert_examples_certified", "Test examples run through certification", registry=self.registry
        )
        self.abstentions = Counter(
            "backdoor_cert_abstentions", "Test examples on which the smoothed classifier abstained", registry=self.registry
        )
        self.certification_seconds = Gauge(
            "backdoor_cert_certification_seconds", "Wall-clock seconds spent certifying", registry=self.registry
        )
        self.certified_accuracy = Gauge(
            "backdoor_cert_certified_accuracy",
            "Certified accuracy at l0 radius",
            ["radius"],
            registry=self.registry,
        )
        self.attack_violations = Counter(
            "backdoor_cert_attack_violations", "Certificates falsified by an attack", registry=self.registry
        )

    def record_certification(self, results: Sequence[CertificationResult], curve) -> None:
        self.examples_certified.inc(len(results))
        self.abstentions.inc(sum(1 for result in results if result.abstained))
        for radius, _, accuracy in curve:
            self.certified_accuracy.labels(radius=str(radius)).set(accuracy)

    def write(self, out_dir: str) -> str:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, METRICS_FILE)
        write_to_textfile(path, self.registry)
        logger.debug(f"Metrics written to {path}")
        return path
