"""
Backdoor trigger injection.

A poisoning writes the trigger pattern into selected training examples and
relabels them with the target label; at test time the same pattern is
written into the input. Every change is counted exactly as an l0 distance so
an attack can be placed against a certified radius.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from backdoor_cert.data.dataset import TrainingSet
from backdoor_cert.errors import DimensionError, DomainError, SymbolDomainError
from backdoor_cert.models.schemas import PoisonAccounting, TriggerSpec
from backdoor_cert.noise.discrete_noise import EncodedVector
from backdoor_cert.noise.seeds import Stream, derive_seed, make_rng

logger = logging.getLogger(__name__)


def poison_indices(train_size: int, poison_count: int, seed: int) -> np.ndarray:
    """Training examples to poison, in selection order"""
    if not (0 <= poison_count <= train_size):
        raise DimensionError(f"poison_count {poison_count} not in [0, {train_size}]")
    rng = make_rng(derive_seed(seed, Stream.POISON))
    return rng.permutation(train_size)[:poison_count]


def poison_training_set(
    train: TrainingSet, trigger: TriggerSpec, seed: int
) -> Tuple[TrainingSet, PoisonAccounting]:
    """
    Write the trigger into poison_count training examples and relabel them
    with the target label. Returns the poisoned set and its exact l0 size.
    """
    trigger.check_against(train.num_features, train.feature_domain, train.num_classes, len(train))
    chosen = poison_indices(len(train), trigger.poison_count, seed)
    positions = np.asarray(trigger.pixel_positions, dtype=np.int64)
    values = np.asarray(trigger.pixel_values, dtype=np.int64)
    features = train.features.copy()
    labels = train.labels.copy()

    block = np.ix_(chosen, positions)
    feature_changes = int(np.count_nonzero(features[block] != values))
    label_changes = int(np.count_nonzero(labels[chosen] != trigger.target_label))
    if feature_changes + label_changes == 0:
        return train, PoisonAccounting(feature_changes=0, label_changes=0)
    features[block] = values
    labels[chosen] = trigger.target_label

    logger.info(
        f"Poisoned {len(chosen)} training examples: "
        f"{feature_changes} feature and {label_changes} label changes"
    )
    return train.replace(features=features, labels=labels), PoisonAccounting(
        feature_changes=feature_changes, label_changes=label_changes
    )


def apply_trigger(x: EncodedVector, trigger: TriggerSpec) -> Tuple[EncodedVector, int]:
    """Test-time trigger; returns the triggered input and ||delta3||_0"""
    return trigger_within_budget(x, trigger, budget=None)


def split_budget(budget: int) -> Tuple[int, int]:
    """ceil(b/2) for the training set, floor(b/2) for the test input"""
    if budget < 0:
        raise DomainError(f"budget must be nonnegative, got {budget}")
    return math.ceil(budget / 2), budget // 2


def poison_within_budget(
    train: TrainingSet, trigger: TriggerSpec, budget: int, seed: int
) -> Tuple[TrainingSet, PoisonAccounting]:
    """
    The poisoning truncated to at most budget changes: examples are visited
    in selection order, each getting its label flip first and then its
    trigger pixels in position order.
    """
    if budget < 0:
        raise DomainError(f"budget must be nonnegative, got {budget}")
    trigger.check_against(train.num_features, train.feature_domain, train.num_classes, len(train))
    features = train.features.copy()
    labels = train.labels.copy()
    remaining = budget
    feature_changes = label_changes = 0

    for index in poison_indices(len(train), trigger.poison_count, seed):
        if remaining == 0:
            break
        if labels[index] != trigger.target_label:
            labels[index] = trigger.target_label
            label_changes += 1
            remaining -= 1
        for position, value in zip(trigger.pixel_positions, trigger.pixel_values):
            if remaining == 0:
                break
            if features[index, position] != value:
                features[index, position] = value
                feature_changes += 1
                remaining -= 1

    return train.replace(features=features, labels=labels), PoisonAccounting(
        feature_changes=feature_changes, label_changes=label_changes
    )


def trigger_within_budget(
    x: EncodedVector, trigger: TriggerSpec, budget: Optional[int] = None
) -> Tuple[EncodedVector, int]:
    """Trigger pixels written in position order until budget changes are made"""
    if any(p >= len(x) for p in trigger.pixel_positions):
        raise DimensionError(f"trigger position out of range for {len(x)} features")
    if any(v >= x.domain_size for v in trigger.pixel_values):
        raise SymbolDomainError(f"trigger value out of range for domain size {x.domain_size}")
    if budget is not None and budget < 0:
        raise DomainError(f"budget must be nonnegative, got {budget}")

    symbols = x.symbols.copy()
    changes = 0
    for position, value in zip(trigger.pixel_positions, trigger.pixel_values):
        if budget is not None and changes == budget:
            break
        if symbols[position] != value:
            symbols[position] = value
            changes += 1
    return EncodedVector(symbols, x.domain_size), changes


def truncate_attack(
    train: TrainingSet, x: EncodedVector, trigger: TriggerSpec, budget: int, seed: int
) -> Tuple[TrainingSet, EncodedVector, PoisonAccounting, int]:
    """
    An attack of total l0 size at most budget: ceil(b/2) changes go to the
    training set and floor(b/2) to the test input. Unused budget is not
    moved between the two.
    """
    poisoned, [(triggered, test_changes)], accounting = truncate_attack_many(train, [x], trigger, budget, seed)
    return poisoned, triggered, accounting, test_changes


def truncate_attack_many(
    train: TrainingSet, inputs: Sequence[EncodedVector], trigger: TriggerSpec, budget: int, seed: int
) -> Tuple[TrainingSet, List[Tuple[EncodedVector, int]], PoisonAccounting]:
    """truncate_attack for several test inputs sharing one poisoned training set"""
    train_budget, test_budget = split_budget(budget)
    poisoned, accounting = poison_within_budget(train, trigger, train_budget, seed)
    triggered = [trigger_within_budget(x, trigger, test_budget) for x in inputs]
    return poisoned, triggered, accounting
