"""
Two-layer neural network: input -> hidden (ReLU) -> softmax, trained with
cross-entropy by full-batch gradient descent.

Symbols enter the network as their fractional value symbol / d.
"""

import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from backdoor_cert.data.dataset import TrainingSet
from backdoor_cert.errors import DimensionError, DomainError, SymbolDomainError, TrainingDivergedError
from backdoor_cert.models.schemas import Hyperparameters
from backdoor_cert.noise.discrete_noise import EncodedVector
from backdoor_cert.noise.seeds import make_rng

logger = logging.getLogger(__name__)

PARAMETER_NAMES = ("w1", "b1", "w2", "b2")


def to_inputs(symbols: np.ndarray, domain_size: int) -> np.ndarray:
    """Fractional encoding symbol / d"""
    return np.asarray(symbols, dtype=np.float64) / domain_size


def init_parameters(
    num_features: int, hidden: int, num_classes: int, rng: np.random.Generator
) -> Dict[str, np.ndarray]:
    """Uniform in +-1/sqrt(fan_in) for every layer"""
    bound1 = 1.0 / math.sqrt(num_features)
    bound2 = 1.0 / math.sqrt(hidden)
    return {
        "w1": rng.uniform(-bound1, bound1, size=(hidden, num_features)),
        "b1": rng.uniform(-bound1, bound1, size=hidden),
        "w2": rng.uniform(-bound2, bound2, size=(num_classes, hidden)),
        "b2": rng.uniform(-bound2, bound2, size=num_classes),
    }


def forward(params: Dict[str, np.ndarray], inputs: np.ndarray) -> np.ndarray:
    hidden = np.maximum(inputs @ params["w1"].T + params["b1"], 0.0)
    return hidden @ params["w2"].T + params["b2"]


def loss_and_gradients(
    params: Dict[str, np.ndarray], inputs: np.ndarray, labels: np.ndarray
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and its gradient for every parameter"""
    n = len(labels)
    pre_activation = inputs @ params["w1"].T + params["b1"]
    hidden = np.maximum(pre_activation, 0.0)
    logits = hidden @ params["w2"].T + params["b2"]

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -float(log_probs[rows, labels].mean())

    d_logits = np.exp(log_probs)
    d_logits[rows, labels] -= 1.0
    d_logits /= n

    d_hidden = (d_logits @ params["w2"]) * (pre_activation > 0.0)
    gradients = {
        "w1": d_hidden.T @ inputs,
        "b1": d_hidden.sum(axis=0),
        "w2": d_logits.T @ hidden,
        "b2": d_logits.sum(axis=0),
    }
    return loss, gradients


class Classifier:
    """Trained network h; immutable once built"""

    def __init__(
        self,
        w1: np.ndarray,
        b1: np.ndarray,
        w2: np.ndarray,
        b2: np.ndarray,
        feature_domain: int,
        hyper: Optional[Hyperparameters] = None,
        seed: Optional[int] = None,
        loss_history: Sequence[float] = (),
    ):
        params = {
            name: np.array(value, dtype=np.float64)
            for name, value in zip(PARAMETER_NAMES, (w1, b1, w2, b2))
        }
        hidden, num_features = params["w1"].shape
        num_classes = params["w2"].shape[0]
        if (
            params["b1"].shape != (hidden,)
            or params["w2"].shape != (num_classes, hidden)
            or params["b2"].shape != (num_classes,)
        ):
            raise DimensionError("inconsistent layer shapes")
        for name, value in params.items():
            if not np.all(np.isfinite(value)):
                raise DomainError(f"parameter {name} contains non-finite values")
            value.setflags(write=False)
        self.params = params
        self.feature_domain = int(feature_domain)
        self.hyper = hyper
        self.seed = seed
        self.loss_history = tuple(loss_history)

    @property
    def num_features(self) -> int:
        return int(self.params["w1"].shape[1])

    @property
    def hidden(self) -> int:
        return int(self.params["w1"].shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.params["w2"].shape[0])

    @property
    def w1(self) -> np.ndarray:
        return self.params["w1"]

    @property
    def b1(self) -> np.ndarray:
        return self.params["b1"]

    @property
    def w2(self) -> np.ndarray:
        return self.params["w2"]

    @property
    def b2(self) -> np.ndarray:
        return self.params["b2"]

    def loss_and_gradients(self, features: np.ndarray, labels: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """Cross-entropy of the current weights on symbol rows and its gradient"""
        inputs = to_inputs(np.atleast_2d(features), self.feature_domain)
        return loss_and_gradients(self.params, inputs, np.asarray(labels, dtype=np.int64))

    def logits(self, symbols: np.ndarray) -> np.ndarray:
        """Output scores for a batch of symbol rows"""
        return forward(self.params, to_inputs(symbols, self.feature_domain))

    def predict_batch(self, symbols: np.ndarray) -> np.ndarray:
        """argmax of the logits per row; np.argmax keeps the smallest index on ties"""
        symbols = np.atleast_2d(symbols)
        if symbols.shape[1] != self.num_features:
            raise DimensionError(
                f"expected {self.num_features} features, got {symbols.shape[1]}"
            )
        return np.argmax(self.logits(symbols), axis=1)


def train_classifier(train: TrainingSet, hyper: Hyperparameters, seed: int) -> Classifier:
    """Deterministic given (train, hyper, seed)"""
    if len(train) < 1:
        raise DomainError("training set must contain at least one example")

    rng = make_rng(seed)
    params = init_parameters(train.num_features, hyper.hidden, train.num_classes, rng)
    inputs = to_inputs(train.features, train.feature_domain)
    labels = train.labels

    history = []
    for epoch in range(hyper.epochs):
        loss, gradients = loss_and_gradients(params, inputs, labels)
        if not math.isfinite(loss):
            raise TrainingDivergedError(epoch)
        history.append(loss)
        for name in PARAMETER_NAMES:
            params[name] -= hyper.learning_rate * gradients[name]
        if not all(np.all(np.isfinite(params[name])) for name in PARAMETER_NAMES):
            raise TrainingDivergedError(epoch)

    return Classifier(
        params["w1"],
        params["b1"],
        params["w2"],
        params["b2"],
        feature_domain=train.feature_domain,
        hyper=hyper,
        seed=seed,
        loss_history=history,
    )


def predict(clf: Classifier, x: EncodedVector) -> int:
    """Label predicted for one symbol vector"""
    if x.domain_size != clf.feature_domain:
        raise SymbolDomainError(
            f"input domain {x.domain_size} does not match classifier domain {clf.feature_domain}"
        )
    if len(x) != clf.num_features:
        raise DimensionError(f"expected {clf.num_features} features, got {len(x)}")
    return int(clf.predict_batch(x.symbols[np.newaxis, :])[0])


def accuracy(clf: Classifier, dataset: TrainingSet) -> float:
    """Fraction of dataset examples predicted correctly"""
    if len(dataset) == 0:
        raise DomainError("accuracy of an empty dataset is undefined")
    return float(np.mean(clf.predict_batch(dataset.features) == dataset.labels))
