"""
Statistical machinery for Monte Carlo certification.

The lower confidence bound on the top-label probability is the
Clopper-Pearson bound, i.e. the alpha-quantile of Beta(k, n - k + 1), found
by bracketed root finding on the regularized incomplete beta function.
"""

import math
from typing import Optional, Tuple

from scipy.optimize import brentq
from scipy.special import betainc

from backdoor_cert.certify.certified_radius import MAJORITY, certified_radius
from backdoor_cert.errors import DomainError
from backdoor_cert.models.schemas import NoiseSpec, VoteCounts

ROOT_TOLERANCE = 1e-12


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def clopper_pearson_lower(successes: int, n: int, alpha: float) -> float:
    """One-sided (1 - alpha) lower confidence bound on a binomial proportion"""
    _check_alpha(alpha)
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    if not (0 <= successes <= n):
        raise DomainError(f"successes must lie in [0, {n}], got {successes}")

    if successes == 0:
        return 0.0
    if successes == n:
        # Beta(n, 1) has CDF p**n
        return alpha ** (1.0 / n)

    a, b = successes, n - successes + 1
    # I_p(a, b) = Pr[Binomial(n, p) >= successes] increases from 0 to 1 in p
    return brentq(lambda p: betainc(a, b, p) - alpha, 0.0, 1.0, xtol=ROOT_TOLERANCE)


def bonferroni_alpha(alpha: float, n_tests: int) -> float:
    """Per-test significance giving simultaneous confidence 1 - alpha"""
    _check_alpha(alpha)
    if n_tests < 1:
        raise DomainError(f"n_tests must be at least 1, got {n_tests}")
    return alpha / n_tests


def top_label(votes: VoteCounts) -> int:
    """Label with the most votes, ties going to the smallest index"""
    counts = votes.counts
    return max(range(len(counts)), key=lambda label: (counts[label], -label))


def certify_votes(
    votes: VoteCounts, spec: NoiseSpec, alpha: float
) -> Tuple[Optional[int], int, float, Optional[int]]:
    """
    Returns (predicted label or None when abstaining, top label, p_lower,
    radius or None).
    """
    label = top_label(votes)
    p_lower = clopper_pearson_lower(votes.counts[label], votes.n_samples, alpha)
    if p_lower <= MAJORITY or math.isnan(p_lower):
        return None, label, p_lower, None
    return label, label, p_lower, certified_radius(p_lower, spec)
