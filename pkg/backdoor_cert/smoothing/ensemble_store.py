"""
Binary container for a trained ensemble.

Layout (little-endian):

    magic            8 bytes   b"BDCENSMB"
    format_version   uint32
    n_classifiers    uint32
    num_features     uint32    D
    hidden           uint32    H
    num_classes      uint32    c
    domain_size      uint32    d
    beta             float64
    epochs           uint32
    learning_rate    float64
    master_seed      uint64
    fingerprint      32 bytes  SHA-256 of the training set and hyperparameters

followed by one float64 record per classifier: w1 (H x D, row-major), b1 (H),
w2 (c x H, row-major), b2 (c).
"""

import logging
import os
import struct
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from backdoor_cert.errors import FingerprintMismatchError, FormatError
from backdoor_cert.models.schemas import Hyperparameters, NoiseSpec
from backdoor_cert.smoothing.pipeline import Ensemble
from backdoor_cert.utils.files import atomic_open

logger = logging.getLogger(__name__)

MAGIC = b"BDCENSMB"
FORMAT_VERSION = 1
HEADER = struct.Struct("<8sIIIIIIdIdQ32s")
WEIGHT_DTYPE = np.dtype("<f8")
# Classifiers serialized per write call
WRITE_BATCH = 500


def _record_size(hidden: int, num_features: int, num_classes: int) -> int:
    return hidden * num_features + hidden + num_classes * hidden + num_classes


def write_ensemble(path: str, ens: Ensemble) -> None:
    """Write the ensemble atomically; a crash never leaves a partial file at path"""
    n, hidden, num_features, num_classes = ens.n_classifiers, ens.hidden, ens.num_features, ens.num_classes
    header = HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        n,
        num_features,
        hidden,
        num_classes,
        ens.noise_spec_features.domain_size,
        ens.noise_spec_features.beta,
        ens.hyper.epochs,
        ens.hyper.learning_rate,
        ens.master_seed,
        bytes.fromhex(ens.training_fingerprint),
    )
    with atomic_open(path, "wb") as f:
        f.write(header)
        for start in range(0, n, WRITE_BATCH):
            stop = min(start + WRITE_BATCH, n)
            records = np.concatenate(
                [
                    ens.w1[start:stop].reshape(stop - start, -1),
                    ens.b1[start:stop],
                    ens.w2[start:stop].reshape(stop - start, -1),
                    ens.b2[start:stop],
                ],
                axis=1,
            )
            f.write(np.ascontiguousarray(records, dtype=WEIGHT_DTYPE).tobytes())
    logger.info(f"Wrote {n} classifiers to {path} ({os.path.getsize(path)} bytes)")


class EnsembleHeader(BaseModel):
    """Fixed-size header of an ensemble file"""

    n_classifiers: int = Field(..., ge=1)
    num_features: int = Field(..., ge=1)
    hidden: int = Field(..., ge=1)
    num_classes: int = Field(..., ge=2)
    noise_spec_features: NoiseSpec
    noise_spec_labels: NoiseSpec
    hyper: Hyperparameters
    master_seed: int
    training_fingerprint: str

    @property
    def record_size(self) -> int:
        return _record_size(self.hidden, self.num_features, self.num_classes)


def _parse_header(data: bytes, path: str, file_size: int) -> EnsembleHeader:
    if len(data) < HEADER.size:
        raise FormatError("Truncated ensemble header", path=path, offset=len(data))
    (
        magic,
        version,
        n,
        num_features,
        hidden,
        num_classes,
        domain_size,
        beta,
        epochs,
        learning_rate,
        master_seed,
        fingerprint,
    ) = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError("Not an ensemble file: bad magic", path=path, offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(
            f"Unsupported ensemble format version {version}, expected {FORMAT_VERSION}",
            path=path,
            offset=8,
        )
    if n < 1 or num_features < 1 or hidden < 1 or num_classes < 2:
        raise FormatError("Ensemble header declares empty dimensions", path=path, offset=12)

    expected = HEADER.size + n * _record_size(hidden, num_features, num_classes) * WEIGHT_DTYPE.itemsize
    if file_size != expected:
        raise FormatError(
            f"Ensemble payload has {file_size} bytes, header implies {expected}",
            path=path,
            offset=min(file_size, expected),
        )

    try:
        return EnsembleHeader(
            n_classifiers=n,
            num_features=num_features,
            hidden=hidden,
            num_classes=num_classes,
            noise_spec_features=NoiseSpec(beta=beta, domain_size=domain_size),
            noise_spec_labels=NoiseSpec(beta=beta, domain_size=num_classes),
            hyper=Hyperparameters(hidden=hidden, epochs=epochs, learning_rate=learning_rate),
            master_seed=master_seed,
            training_fingerprint=fingerprint.hex(),
        )
    except ValidationError as e:
        raise FormatError(f"Invalid ensemble header values: {e.errors()[0]['msg']}", path=path, offset=8)


def _check_fingerprint(header: EnsembleHeader, path: str, expected_fingerprint: Optional[str]) -> None:
    found = header.training_fingerprint
    if expected_fingerprint is not None and found != expected_fingerprint:
        raise FingerprintMismatchError(
            f"Ensemble {path} was trained on a different dataset or hyperparameters "
            f"(fingerprint {found[:12]}..., expected {expected_fingerprint[:12]}...)"
        )


def read_ensemble_header(path: str, expected_fingerprint: Optional[str] = None) -> EnsembleHeader:
    """Validate an ensemble file from its header and size alone, without loading the weights"""
    try:
        with open(path, "rb") as f:
            data = f.read(HEADER.size)
            file_size = os.fstat(f.fileno()).st_size
    except FileNotFoundError:
        raise FormatError("Ensemble file not found", path=path)
    header = _parse_header(data, path, file_size)
    _check_fingerprint(header, path, expected_fingerprint)
    return header


def read_ensemble(path: str, expected_fingerprint: Optional[str] = None) -> Ensemble:
    """Load an ensemble, validating version, sizes and optionally the training fingerprint"""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError:
        raise FormatError("Ensemble file not found", path=path)

    header = _parse_header(data, path, len(data))
    _check_fingerprint(header, path, expected_fingerprint)
    n, hidden, num_features, num_classes = header.n_classifiers, header.hidden, header.num_features, header.num_classes

    weights = np.frombuffer(data, dtype=WEIGHT_DTYPE, offset=HEADER.size).reshape(n, header.record_size)
    if not np.all(np.isfinite(weights)):
        raise FormatError("Ensemble contains non-finite weights", path=path, offset=HEADER.size)
    bounds = np.cumsum([0, hidden * num_features, hidden, num_classes * hidden, num_classes])
    w1, b1, w2, b2 = (weights[:, a:b] for a, b in zip(bounds[:-1], bounds[1:]))

    logger.info(f"Loaded {n} classifiers from {path}")
    return Ensemble(
        w1.reshape(n, hidden, num_features).astype(np.float64),
        b1.astype(np.float64),
        w2.reshape(n, num_classes, hidden).astype(np.float64),
        b2.astype(np.float64),
        noise_spec_features=header.noise_spec_features,
        noise_spec_labels=header.noise_spec_labels,
        master_seed=header.master_seed,
        training_fingerprint=header.training_fingerprint,
        hyper=header.hyper,
    )
