"""
Unit tests for Pydantic schemas
"""
import pytest
from pydantic import ValidationError

from backdoor_cert.errors import DimensionError, SymbolDomainError
from backdoor_cert.models.schemas import (
    CertificationResult,
    ErrorResponse,
    NoiseSpec,
    PoisonAccounting,
    Region,
    RegionTable,
    TriggerSpec,
    VoteCounts,
)


class TestNoiseSpec:
    """Test NoiseSpec"""

    def test_theta_is_derived(self):
        """Test theta = (1 - beta) / (d - 1)"""
        spec = NoiseSpec(beta=0.7, domain_size=4)
        assert spec.theta == pytest.approx(0.1)
        assert spec.likelihood_ratio == pytest.approx(7.0)
        assert sum(spec.symbol_probabilities()) == pytest.approx(1.0)

    def test_theta_in_dump(self):
        """Test that theta is serialised alongside the inputs"""
        assert NoiseSpec(beta=0.9, domain_size=2).model_dump()["theta"] == pytest.approx(0.1)

    def test_frozen(self):
        """Test that specs cannot be modified"""
        spec = NoiseSpec(beta=0.9, domain_size=2)
        with pytest.raises(ValidationError):
            spec.beta = 0.5

    @pytest.mark.parametrize("beta,d", [(0.5, 2), (0.3, 3), (1.0, 2), (0.9, 1)])
    def test_invalid(self, beta, d):
        """Test beta must exceed 1/d and stay below 1, d must be at least 2"""
        with pytest.raises(ValidationError):
            NoiseSpec(beta=beta, domain_size=d)


class TestRegionSchemas:
    """Test Region and RegionTable"""

    def test_cell_must_match_exponent(self):
        """Test that cells carry i - j equal to the exponent"""
        with pytest.raises(ValidationError):
            Region(ratio_exponent=1, p_mass=0.5, q_mass=0.5, cells=((2, 0),))

    def test_table_mass_must_sum_to_one(self):
        """Test mass conservation in the table"""
        spec = NoiseSpec(beta=0.9, domain_size=2)
        with pytest.raises(ValidationError):
            RegionTable(
                r=1,
                spec=spec,
                regions=(
                    Region(ratio_exponent=1, p_mass=0.9, q_mass=0.1, cells=((1, 0),)),
                    Region(ratio_exponent=-1, p_mass=0.05, q_mass=0.9, cells=((0, 1),)),
                ),
            )

    def test_table_order(self):
        """Test that exponents must strictly decrease"""
        spec = NoiseSpec(beta=0.9, domain_size=2)
        with pytest.raises(ValidationError):
            RegionTable(
                r=1,
                spec=spec,
                regions=(
                    Region(ratio_exponent=-1, p_mass=0.1, q_mass=0.9, cells=((0, 1),)),
                    Region(ratio_exponent=1, p_mass=0.9, q_mass=0.1, cells=((1, 0),)),
                ),
            )


class TestTriggerSpec:
    """Test TriggerSpec"""

    def test_lengths_must_match(self):
        """Test one value per position"""
        with pytest.raises(ValidationError):
            TriggerSpec(pixel_positions=(0, 1), pixel_values=(1,), target_label=0)

    def test_positions_distinct(self):
        """Test that a position appears once"""
        with pytest.raises(ValidationError):
            TriggerSpec(pixel_positions=(3, 3), pixel_values=(1, 1), target_label=0)

    def test_check_against(self):
        """Test fitting a trigger to a dataset shape"""
        trigger = TriggerSpec(pixel_positions=(9,), pixel_values=(1,), target_label=1, poison_count=2)
        trigger.check_against(num_features=10, feature_domain=2, num_classes=2, num_examples=5)
        with pytest.raises(DimensionError):
            trigger.check_against(num_features=9, feature_domain=2, num_classes=2)
        with pytest.raises(SymbolDomainError):
            trigger.check_against(num_features=10, feature_domain=2, num_classes=1)


class TestCertificationResult:
    """Test CertificationResult invariants"""

    def _votes(self):
        return VoteCounts(counts=(2, 8), n_samples=10)

    def test_radius_requires_majority(self):
        """Test that a radius needs p_lower > 1/2"""
        with pytest.raises(ValidationError):
            CertificationResult(
                example_index=0, true_label=0, predicted_label=0, votes=self._votes(), p_lower=0.4, radius=0
            )

    def test_majority_requires_radius(self):
        """Test that p_lower > 1/2 needs a radius"""
        with pytest.raises(ValidationError):
            CertificationResult(
                example_index=0, true_label=0, predicted_label=1, votes=self._votes(), p_lower=0.7, radius=None
            )

    def test_abstain(self):
        """Test an abstaining result"""
        result = CertificationResult(
            example_index=3, true_label=1, predicted_label=None, votes=self._votes(), p_lower=0.3, radius=None
        )
        assert result.abstained
        assert result.votes_top == 8


class TestMiscSchemas:
    """Test small records"""

    def test_poison_accounting_total(self):
        """Test the summed l0 size"""
        assert PoisonAccounting(feature_changes=3, label_changes=2).total == 5

    def test_error_response(self):
        """Test the error envelope"""
        response = ErrorResponse(error={"code": "2", "type": "DataError", "message": "missing"})
        assert response.model_dump() == {"error": {"code": "2", "type": "DataError", "message": "missing"}}
