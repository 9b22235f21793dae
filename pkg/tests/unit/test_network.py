"""
Unit tests for the two-layer network
"""
from unittest.mock import patch

import numpy as np
import pytest

from backdoor_cert.errors import DimensionError, SymbolDomainError, TrainingDivergedError
from backdoor_cert.models.schemas import Hyperparameters
from backdoor_cert.nn.network import Classifier, accuracy, predict, train_classifier
from backdoor_cert.noise.discrete_noise import EncodedVector


class TestPredict:
    """Test predict"""

    def test_forced_label(self, make_constant_classifier):
        """Test a classifier whose output bias always favours class 1"""
        clf = make_constant_classifier(1, num_features=4)
        for symbols in ([0, 0, 0, 0], [1, 1, 1, 1], [1, 0, 1, 0]):
            assert predict(clf, EncodedVector(symbols, 2)) == 1

    def test_tie_goes_to_smallest_label(self):
        """Test that all-zero weights predict label 0"""
        clf = Classifier(np.zeros((2, 3)), np.zeros(2), np.zeros((2, 2)), np.zeros(2), feature_domain=2)
        assert predict(clf, EncodedVector([1, 0, 1], 2)) == 0

    def test_label_in_range(self, train_set, small_hyper):
        """Test that predictions are valid labels"""
        clf = train_classifier(train_set, small_hyper, seed=0)
        for i in range(len(train_set)):
            assert predict(clf, train_set.example(i)) in (0, 1)

    def test_dimension_mismatch(self, make_constant_classifier):
        """Test that the input length must match the classifier"""
        with pytest.raises(DimensionError):
            predict(make_constant_classifier(0, num_features=4), EncodedVector([0, 1, 0], 2))

    def test_domain_mismatch(self, make_constant_classifier):
        """Test that the input domain must match the classifier"""
        with pytest.raises(SymbolDomainError):
            predict(make_constant_classifier(0, num_features=3), EncodedVector([0, 2, 0], 3))


class TestLossAndGradients:
    """Test the analytic gradients"""

    def test_gradient_check(self, tiny_set):
        """Test analytic gradients against central differences"""
        rng = np.random.default_rng(0)
        clf = Classifier(
            rng.normal(size=(5, 3)),
            rng.normal(size=5),
            rng.normal(size=(2, 5)),
            rng.normal(size=2),
            feature_domain=2,
        )
        _, gradients = clf.loss_and_gradients(tiny_set.features, tiny_set.labels)

        eps = 1e-6
        for name in ("w1", "b1", "w2", "b2"):
            params = {key: value.copy() for key, value in clf.params.items()}
            numeric = np.zeros_like(params[name])
            for index in np.ndindex(params[name].shape):
                for sign in (1, -1):
                    shifted = {key: value.copy() for key, value in params.items()}
                    shifted[name][index] += sign * eps
                    nudged = Classifier(**shifted, feature_domain=2)
                    loss, _ = nudged.loss_and_gradients(tiny_set.features, tiny_set.labels)
                    numeric[index] += sign * loss / (2 * eps)
            np.testing.assert_allclose(gradients[name], numeric, rtol=1e-4, atol=1e-7)


class TestTrainClassifier:
    """Test train_classifier"""

    def test_deterministic(self, train_set, small_hyper):
        """Test bitwise-identical weights for the same seed"""
        a = train_classifier(train_set, small_hyper, seed=3)
        b = train_classifier(train_set, small_hyper, seed=3)
        for name in ("w1", "b1", "w2", "b2"):
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_seed_matters(self, train_set, small_hyper):
        """Test that different seeds give different weights"""
        a = train_classifier(train_set, small_hyper, seed=3)
        b = train_classifier(train_set, small_hyper, seed=4)
        assert not np.array_equal(a.w1, b.w1)

    def test_loss_decreases(self, train_set):
        """Test that the training loss goes down"""
        clf = train_classifier(train_set, Hyperparameters(hidden=16, epochs=100), seed=0)
        assert len(clf.loss_history) == 100
        assert clf.loss_history[-1] < clf.loss_history[0]

    def test_loss_never_increases(self, tiny_set):
        """Test that full-batch descent lowers the loss at every epoch"""
        clf = train_classifier(tiny_set, Hyperparameters(hidden=8, epochs=200), seed=0)
        losses = np.array(clf.loss_history)
        assert np.all(np.diff(losses) <= 1e-12)

    def test_fits_separable_set(self, tiny_set):
        """Test that default hyperparameters fit a linearly separable set exactly"""
        clf = train_classifier(tiny_set, Hyperparameters(), seed=0)
        assert accuracy(clf, tiny_set) == 1.0

    def test_learns_synthetic_digits(self, digit_sets):
        """Test clean accuracy on the easy synthetic 1-vs-7 task"""
        train, test = digit_sets
        clf = train_classifier(train, Hyperparameters(hidden=16, epochs=200), seed=0)
        assert accuracy(clf, train) >= 0.9
        assert accuracy(clf, test) >= 0.85

    def test_divergence_names_epoch(self, tiny_set):
        """Test that a non-finite loss raises with the epoch"""
        with patch("backdoor_cert.nn.network.loss_and_gradients", return_value=(float("nan"), {})):
            with pytest.raises(TrainingDivergedError) as exc_info:
                train_classifier(tiny_set, Hyperparameters(hidden=2, epochs=5), seed=0)
        assert exc_info.value.epoch == 0
        assert "epoch 0" in str(exc_info.value)

    def test_weights_read_only(self, tiny_set, small_hyper):
        """Test that trained weights are immutable"""
        clf = train_classifier(tiny_set, small_hyper, seed=0)
        with pytest.raises(ValueError):
            clf.w1[0, 0] = 1.0
