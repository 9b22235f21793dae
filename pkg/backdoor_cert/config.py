"""
Run configuration.

Values are layered, later sources overriding earlier ones:

    built-in defaults -> KEY=value config file -> BACKDOOR_CERT_* environment
    variables -> command-line flags
"""

import io
import logging
import os
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from backdoor_cert.errors import ConfigurationError
from backdoor_cert.models.schemas import Hyperparameters, NoiseSpec, TriggerSpec

logger = logging.getLogger(__name__)

ENV_PREFIX = "BACKDOOR_CERT_"

# Flat file key -> RunConfig field, in the order written by to_env_text
KEYS = {
    "TRAIN_IMAGES": "train_images",
    "TRAIN_LABELS": "train_labels",
    "DIGITS": "digits",
    "TRAIN_SIZE": "train_size",
    "TEST_SIZE": "test_size",
    "BETA": "beta",
    "NUM_CLASSIFIERS": "num_classifiers",
    "ALPHA": "alpha",
    "HIDDEN": "hidden",
    "EPOCHS": "epochs",
    "LR": "learning_rate",
    "SEED": "seed",
    "WORKERS": "workers",
    "OUT": "out",
    "CHUNK_SIZE": "chunk_size",
    "TRIGGER_POSITIONS": "trigger_positions",
    "TRIGGER_VALUES": "trigger_values",
    "TRIGGER_TARGET": "trigger_target",
    "TRIGGER_POISON_COUNT": "trigger_poison_count",
}
LIST_FIELDS = {"digits", "trigger_positions", "trigger_values"}


class RunConfig(BaseModel):
    """Everything a CLI invocation needs; defaults are the MNIST 1/7 profile"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    train_images: str = Field("data/mnist/train-images-idx3-ubyte.gz", description="IDX3 image file")
    train_labels: str = Field("data/mnist/train-labels-idx1-ubyte.gz", description="IDX1 label file")
    digits: Tuple[int, int] = Field((1, 7), description="The two digits kept, mapped to labels 0 and 1")
    train_size: int = Field(100, ge=1)
    test_size: int = Field(1000, ge=1)
    beta: float = Field(0.9, gt=0.0, lt=1.0)
    num_classifiers: int = Field(10000, ge=1)
    alpha: float = Field(0.001, gt=0.0, lt=1.0)
    hidden: int = Field(64, ge=1)
    epochs: int = Field(200, ge=1)
    learning_rate: float = Field(0.5, gt=0.0)
    seed: int = Field(0, ge=0, lt=2**64)
    workers: int = Field(1, ge=1)
    out: str = Field("runs/mnist17", description="Output directory")
    chunk_size: int = Field(250, ge=1, description="Classifiers per training task")
    trigger_positions: Tuple[int, ...] = ()
    trigger_values: Tuple[int, ...] = ()
    trigger_target: Optional[int] = Field(None, ge=0)
    trigger_poison_count: int = Field(0, ge=0)

    @field_validator("digits")
    @classmethod
    def validate_digits(cls, v):
        if v[0] == v[1] or not all(0 <= digit <= 9 for digit in v):
            raise ValueError("digits must be two different values in 0..9")
        return v

    @model_validator(mode="after")
    def validate_trigger(self):
        if len(self.trigger_positions) != len(self.trigger_values):
            raise ValueError("TRIGGER_POSITIONS and TRIGGER_VALUES must have equal length")
        return self

    def hyperparameters(self) -> Hyperparameters:
        return Hyperparameters(hidden=self.hidden, epochs=self.epochs, learning_rate=self.learning_rate)

    def noise_spec(self, domain_size: int) -> NoiseSpec:
        try:
            return NoiseSpec(beta=self.beta, domain_size=domain_size)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid noise parameters: {e.errors()[0]['msg']}")

    def trigger(self) -> Optional[TriggerSpec]:
        """The configured trigger, or None when no target label is set"""
        if self.trigger_target is None:
            return None
        try:
            return TriggerSpec(
                pixel_positions=self.trigger_positions,
                pixel_values=self.trigger_values,
                target_label=self.trigger_target,
                poison_count=self.trigger_poison_count,
            )
        except ValidationError as e:
            raise ConfigurationError(f"Invalid trigger: {e.errors()[0]['msg']}")

    def to_env_text(self) -> str:
        """Flat KEY=value text that load_config reads back to an equal RunConfig"""
        lines = []
        for key, field in KEYS.items():
            value = getattr(self, field)
            if field in LIST_FIELDS:
                text = ",".join(str(v) for v in value)
            elif value is None:
                text = ""
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{key}={text}")
        return "\n".join(lines) + "\n"


def _coerce(field: str, value: Any) -> Any:
    """Turn flat-file strings into values pydantic can validate"""
    if not isinstance(value, str):
        return value
    value = value.strip()
    if field in LIST_FIELDS:
        return tuple(part.strip() for part in value.split(",") if part.strip())
    if field == "trigger_target" and value == "":
        return None
    return value


def _from_flat(source: Mapping[str, Optional[str]], origin: str) -> Dict[str, Any]:
    values = {}
    for key, raw in source.items():
        field = KEYS.get(key.upper())
        if field is None:
            raise ConfigurationError(f"Unknown configuration key {key!r} in {origin}")
        values[field] = _coerce(field, raw if raw is not None else "")
    return values


def _from_env(environ: Mapping[str, str]) -> Dict[str, Any]:
    values = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        field = KEYS.get(key[len(ENV_PREFIX):].upper())
        if field is None:
            # Unrelated variables sharing the prefix are ignored
            logger.debug(f"Ignoring environment variable {key}")
            continue
        values[field] = _coerce(field, raw)
    return values


def parse_config_text(text: str) -> Dict[str, Any]:
    """Field values of a KEY=value text"""
    return _from_flat(dotenv_values(stream=io.StringIO(text)), "config text")


def load_config(
    path: Optional[str] = None,
    environ: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    text: Optional[str] = None,
) -> RunConfig:
    """Build a RunConfig from a file or text, the environment and explicit overrides"""
    values: Dict[str, Any] = {}
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigurationError(f"Config file not found: {path}")
        values.update(_from_flat(dotenv_values(path), path))
    if text is not None:
        values.update(parse_config_text(text))
    values.update(_from_env(os.environ if environ is None else environ))
    for field, value in (overrides or {}).items():
        if value is not None:
            values[field] = _coerce(field, value)

    try:
        return RunConfig(**values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"Invalid configuration: {problems}")
