import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    computed_field,
    field_validator,
    model_validator,
)

from backdoor_cert.errors import DimensionError, SymbolDomainError

# Tolerance for probability-mass bookkeeping
MASS_TOLERANCE = 1e-10


class ErrorResponse(BaseModel):
    error: Dict[str, str]


# Noise schemas
class NoiseSpec(BaseModel):
    """Parameters of the discrete smoothing noise channel"""

    model_config = ConfigDict(frozen=True)

    beta: float = Field(
        ...,
        description="Probability that a symbol is kept unchanged",
        examples=[0.9],
        gt=0.0,
        lt=1.0,
    )
    domain_size: int = Field(
        ..., description="Number of symbols d in each coordinate's domain", examples=[2], ge=2
    )

    @model_validator(mode="after")
    def validate_beta_above_uniform(self):
        """Uniform noise (beta = 1/d) certifies nothing, so beta must exceed it"""
        if self.beta <= 1.0 / self.domain_size:
            raise ValueError(
                f"beta must exceed 1/domain_size = {1.0 / self.domain_size:.6g}, got {self.beta}"
            )
        return self

    @computed_field
    @property
    def theta(self) -> float:
        """Probability of moving to each specific other symbol"""
        return (1.0 - self.beta) / (self.domain_size - 1)

    @property
    def likelihood_ratio(self) -> float:
        return self.beta / self.theta

    def symbol_probabilities(self) -> np.ndarray:
        """Distribution of one noise symbol: beta for 0, theta for every t != 0"""
        probs = np.full(self.domain_size, self.theta)
        probs[0] = self.beta
        return probs


# Region schemas
class Region(BaseModel):
    """Noise outcomes sharing one likelihood ratio rho**ratio_exponent"""

    model_config = ConfigDict(frozen=True)

    ratio_exponent: int = Field(
        ..., description="k = i - j, the P/Q likelihood ratio is rho**k"
    )
    p_mass: float = Field(
        ..., description="Probability under the noise around the original input", ge=0.0, le=1.0
    )
    q_mass: float = Field(
        ..., description="Probability under the noise around the perturbed input", ge=0.0, le=1.0
    )
    cells: Tuple[Tuple[int, int], ...] = Field(
        ...,
        description="(i, j) pairs merged into this region: i coordinates restored "
        "to the original symbol, j landing on the adversary's symbol",
    )

    @model_validator(mode="after")
    def validate_cells(self):
        for i, j in self.cells:
            if i < 0 or j < 0:
                raise ValueError(f"cell ({i}, {j}) has a negative count")
            if i - j != self.ratio_exponent:
                raise ValueError(
                    f"cell ({i}, {j}) does not belong to exponent {self.ratio_exponent}"
                )
        return self


class RegionTable(BaseModel):
    """Likelihood-ratio regions for r perturbed coordinates, best ratio first"""

    model_config = ConfigDict(frozen=True)

    r: int = Field(..., description="Number of perturbed coordinates", ge=0)
    spec: NoiseSpec
    regions: Tuple[Region, ...]

    @model_validator(mode="after")
    def validate_table(self):
        exponents = [region.ratio_exponent for region in self.regions]
        if any(a <= b for a, b in zip(exponents, exponents[1:])):
            raise ValueError("regions must have strictly decreasing ratio_exponent")
        for region in self.regions:
            for i, j in region.cells:
                if i + j > self.r:
                    raise ValueError(f"cell ({i}, {j}) exceeds r = {self.r}")
        p_total = math.fsum(region.p_mass for region in self.regions)
        q_total = math.fsum(region.q_mass for region in self.regions)
        if abs(p_total - 1.0) > MASS_TOLERANCE or abs(q_total - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"region masses must sum to 1 (P={p_total!r}, Q={q_total!r})")
        return self


# Estimation schemas
class VoteCounts(BaseModel):
    """Per-label tallies of the noisy base-function evaluations"""

    model_config = ConfigDict(frozen=True)

    counts: Tuple[int, ...] = Field(..., description="Votes per label 0..c-1", min_length=1)
    n_samples: int = Field(..., description="Number of Monte Carlo samples N", ge=1)

    @field_validator("counts")
    @classmethod
    def validate_counts(cls, v):
        if any(count < 0 for count in v):
            raise ValueError("vote counts must be nonnegative")
        return v

    @model_validator(mode="after")
    def validate_total(self):
        if sum(self.counts) != self.n_samples:
            raise ValueError(
                f"vote counts sum to {sum(self.counts)}, expected n_samples={self.n_samples}"
            )
        return self

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    @classmethod
    def from_predictions(cls, predictions: Sequence[int], num_classes: int) -> "VoteCounts":
        """Tally an array of predicted labels"""
        predictions = np.asarray(predictions, dtype=np.int64)
        if predictions.size and (predictions.min() < 0 or predictions.max() >= num_classes):
            raise SymbolDomainError(f"predicted labels must lie in [0, {num_classes})")
        counts = np.bincount(predictions, minlength=num_classes)
        return cls(counts=tuple(int(c) for c in counts), n_samples=int(predictions.size))


# Learning schemas
class Hyperparameters(BaseModel):
    """Settings of the two-layer network learning algorithm"""

    model_config = ConfigDict(frozen=True)

    hidden: int = Field(64, description="Hidden units", ge=1)
    epochs: int = Field(200, description="Full-batch gradient descent epochs", ge=1)
    learning_rate: float = Field(0.5, description="Gradient descent step size", gt=0.0)


# Attack schemas
class TriggerSpec(BaseModel):
    """A backdoor trigger pattern and its target label"""

    model_config = ConfigDict(frozen=True)

    pixel_positions: Tuple[int, ...] = Field(
        (), description="Feature indices overwritten by the trigger"
    )
    pixel_values: Tuple[int, ...] = Field(
        (), description="Symbol written at each trigger position"
    )
    target_label: int = Field(..., description="Label assigned to poisoned examples", ge=0)
    poison_count: int = Field(
        0, description="Number of training examples to poison", ge=0
    )

    @model_validator(mode="after")
    def validate_pattern(self):
        if len(self.pixel_positions) != len(self.pixel_values):
            raise ValueError("pixel_positions and pixel_values must have equal length")
        if len(set(self.pixel_positions)) != len(self.pixel_positions):
            raise ValueError("pixel_positions must be distinct")
        if any(p < 0 for p in self.pixel_positions) or any(v < 0 for v in self.pixel_values):
            raise ValueError("trigger positions and values must be nonnegative")
        return self

    def check_against(
        self, num_features: int, feature_domain: int, num_classes: int, num_examples: Optional[int] = None
    ) -> None:
        """Raise if the trigger does not fit a dataset of the given shape"""
        if any(p >= num_features for p in self.pixel_positions):
            raise DimensionError(f"trigger position out of range for {num_features} features")
        if any(v >= feature_domain for v in self.pixel_values):
            raise SymbolDomainError(f"trigger value out of range for domain size {feature_domain}")
        if self.target_label >= num_classes:
            raise SymbolDomainError(f"target label {self.target_label} out of range for {num_classes} classes")
        if num_examples is not None and self.poison_count > num_examples:
            raise DimensionError(
                f"poison_count {self.poison_count} exceeds training set size {num_examples}"
            )


class PoisonAccounting(BaseModel):
    """Exact l0 size of a poisoning, measured after the fact"""

    model_config = ConfigDict(frozen=True)

    feature_changes: int = Field(..., description="||delta1||_0, feature symbols changed", ge=0)
    label_changes: int = Field(..., description="||delta2||_0, labels changed", ge=0)

    @property
    def total(self) -> int:
        return self.feature_changes + self.label_changes


# Certification schemas
class CertificationResult(BaseModel):
    """Smoothed prediction and certificate for one test example"""

    model_config = ConfigDict(frozen=True)

    example_index: int = Field(..., ge=0)
    true_label: int = Field(..., ge=0)
    predicted_label: Optional[int] = Field(
        None, description="Smoothed label, None when the smoothed function abstains"
    )
    votes: VoteCounts
    p_lower: float = Field(..., description="Lower confidence bound on the top-label probability", ge=0.0, le=1.0)
    radius: Optional[int] = Field(
        None, description="Certified l0 radius, None when no majority is established", ge=0
    )

    @model_validator(mode="after")
    def validate_certificate(self):
        if (self.radius is not None) != (self.p_lower > 0.5):
            raise ValueError("radius must be present exactly when p_lower > 1/2")
        if (self.predicted_label is None) != (self.radius is None):
            raise ValueError("abstention and missing radius must coincide")
        return self

    @property
    def abstained(self) -> bool:
        return self.predicted_label is None

    @property
    def votes_top(self) -> int:
        return max(self.votes.counts)


# Dataset and report schemas
class DatasetManifest(BaseModel):
    """Metadata written next to a prepared dataset"""

    digits: Tuple[int, int]
    train_size: int = Field(..., ge=1)
    test_size: int = Field(..., ge=0)
    seed: int
    feature_domain: int = Field(..., ge=2)
    num_classes: int = Field(..., ge=2)
    image_shape: Tuple[int, int]


class FalsificationRow(BaseModel):
    """Outcome of re-running the pipeline under one attack budget"""

    budget: int = Field(..., description="Total l0 budget of the attack", ge=0)
    n_checked: int = Field(..., description="Certified examples with radius >= budget", ge=0)
    n_violations: int = Field(..., description="Examples whose smoothed label changed", ge=0)
    train_changes: int = Field(..., description="||delta1||_0 + ||delta2||_0 actually applied", ge=0)
    max_test_changes: int = Field(..., description="Largest ||delta3||_0 applied to a test input", ge=0)


class AttackReport(BaseModel):
    """Summary of an attack evaluation run"""

    falsification: List[FalsificationRow] = Field(default_factory=list)
    total_violations: int = Field(0, ge=0)
    allowed_violations: float = Field(
        ..., description="Expected violations under the simultaneous confidence level"
    )
    clean_accuracy_unsmoothed: Optional[float] = None
    attack_success_unsmoothed: Optional[float] = None
    attack_success_baseline: Optional[float] = Field(
        None, description="Target-label rate of the clean classifier on triggered inputs"
    )
    warning: Optional[str] = None


class CertificationRow(BaseModel):
    """One row of a certification report read back from disk"""

    model_config = ConfigDict(frozen=True)

    example_index: int = Field(..., ge=0)
    true_label: int = Field(..., ge=0)
    predicted_label: Optional[int] = None
    votes_top: int = Field(..., ge=0)
    n_samples: int = Field(..., ge=1)
    p_lower: float = Field(..., ge=0.0, le=1.0)
    radius: Optional[int] = Field(None, ge=0)

    @property
    def certified(self) -> bool:
        return self.predicted_label is not None and self.radius is not None
