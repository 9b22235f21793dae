"""
CSV and JSON report writers and the certification report reader.

Abstentions are written as predicted_label -1 with an empty radius.
"""

import csv
import io
import logging
import os
from typing import Iterable, List, Sequence, Tuple

from pydantic import ValidationError

from backdoor_cert.errors import DataError, FormatError
from backdoor_cert.models.schemas import AttackReport, CertificationResult, CertificationRow, FalsificationRow
from backdoor_cert.utils.files import atomic_write_text

logger = logging.getLogger(__name__)

CERTIFICATION_FILE = "certification.csv"
CURVE_FILE = "certified_accuracy.csv"
FALSIFICATION_FILE = "attack_falsification.csv"
ATTACK_REPORT_FILE = "attack_report.json"

ABSTAIN = -1
CERTIFICATION_COLUMNS = [
    "example_index",
    "true_label",
    "predicted_label",
    "abstained",
    "votes_top",
    "n_samples",
    "p_lower",
    "radius",
]
CURVE_COLUMNS = ["radius", "n_certified_correct", "certified_accuracy"]
FALSIFICATION_COLUMNS = ["budget", "n_checked", "n_violations", "train_changes", "max_test_changes"]


def _csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue()


def write_certification_csv(path: str, results: Sequence[CertificationResult]) -> None:
    rows = (
        (
            r.example_index,
            r.true_label,
            ABSTAIN if r.predicted_label is None else r.predicted_label,
            int(r.abstained),
            r.votes_top,
            r.votes.n_samples,
            repr(r.p_lower),
            "" if r.radius is None else r.radius,
        )
        for r in results
    )
    atomic_write_text(path, _csv_text(CERTIFICATION_COLUMNS, rows))
    logger.info(f"Wrote {len(results)} certification rows to {path}")


def write_curve_csv(path: str, curve: Sequence[Tuple[int, int, float]]) -> None:
    rows = ((radius, count, repr(accuracy)) for radius, count, accuracy in curve)
    atomic_write_text(path, _csv_text(CURVE_COLUMNS, rows))


def write_falsification_csv(path: str, rows: Sequence[FalsificationRow]) -> None:
    atomic_write_text(
        path,
        _csv_text(FALSIFICATION_COLUMNS, ([getattr(row, column) for column in FALSIFICATION_COLUMNS] for row in rows)),
    )


def write_attack_report(path: str, report: AttackReport) -> None:
    atomic_write_text(path, report.model_dump_json(indent=2) + "\n")


def read_certification_csv(path: str) -> List[CertificationRow]:
    """Rows of a certification report written by write_certification_csv"""
    if not os.path.isfile(path):
        raise DataError(f"Certification report not found: {path}; run certify first")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CERTIFICATION_COLUMNS:
            raise FormatError(f"Unexpected certification columns {reader.fieldnames}", path=path)
        rows = []
        for line, record in enumerate(reader, start=2):
            try:
                predicted = int(record["predicted_label"])
                if bool(int(record["abstained"])) != (predicted == ABSTAIN):
                    raise ValueError("abstained flag disagrees with predicted_label")
                rows.append(
                    CertificationRow(
                        example_index=int(record["example_index"]),
                        true_label=int(record["true_label"]),
                        predicted_label=None if predicted == ABSTAIN else predicted,
                        votes_top=int(record["votes_top"]),
                        n_samples=int(record["n_samples"]),
                        p_lower=float(record["p_lower"]),
                        radius=int(record["radius"]) if record["radius"] else None,
                    )
                )
            except (ValueError, TypeError, ValidationError) as e:
                raise FormatError(f"Malformed certification row {line}: {e}", path=path)
    return rows
