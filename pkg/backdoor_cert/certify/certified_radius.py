"""
Exact l0 certified radius for the discrete noise channel.

When r coordinates of the input are perturbed, each noise outcome on those
coordinates falls into a cell (i, j): i coordinates where the noisy value
equals the original symbol, j where it equals the adversary's symbol, and
r - i - j elsewhere. The likelihood ratio between the noise around the
original input (P) and around the perturbed input (Q) is rho**(i - j) with
rho = beta / theta, so cells with equal i - j form one region. The worst
case Q-probability of an event with P-probability p is a fractional
knapsack over the regions, filled in descending ratio order.
"""

import logging
import math
from functools import lru_cache
from typing import List, Optional

import numpy as np
from scipy.special import gammaln

from backdoor_cert.errors import DomainError
from backdoor_cert.models.schemas import NoiseSpec, Region, RegionTable

logger = logging.getLogger(__name__)

# Tables up to this r use exact binomials; beyond it, log-space masses
EXACT_MAX_R = 30
# Upper limit of the radius search (only reached for p_lower == 1)
MAX_RADIUS = 512
MAJORITY = 0.5


def _check_probability(p: float, name: str) -> None:
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise DomainError(f"{name} must lie in [0, 1], got {p}")


def _cell_masses_exact(spec: NoiseSpec, r: int):
    beta, theta, d = spec.beta, spec.theta, spec.domain_size
    other = (d - 2) * theta
    for i in range(r + 1):
        for j in range(r - i + 1):
            rest = r - i - j
            if d == 2 and rest > 0:
                continue
            coefficient = math.comb(r, i) * math.comb(r - i, j)
            # Python evaluates 0.0 ** 0 as 1.0
            shared = coefficient * other**rest
            yield i, j, shared * beta**i * theta**j, shared * theta**i * beta**j


def _cell_masses_log(spec: NoiseSpec, r: int):
    beta, theta, d = spec.beta, spec.theta, spec.domain_size
    i, j = np.meshgrid(np.arange(r + 1), np.arange(r + 1), indexing="ij")
    keep = i + j <= r
    if d == 2:
        keep &= i + j == r
    i, j = i[keep], j[keep]
    rest = r - i - j
    log_coefficient = gammaln(r + 1) - gammaln(i + 1) - gammaln(j + 1) - gammaln(rest + 1)
    log_other = np.log((d - 2) * theta) * rest if d > 2 else np.zeros_like(log_coefficient)
    log_p = log_coefficient + log_other + i * math.log(beta) + j * math.log(theta)
    log_q = log_coefficient + log_other + i * math.log(theta) + j * math.log(beta)
    for cell in zip(i.tolist(), j.tolist(), np.exp(log_p).tolist(), np.exp(log_q).tolist()):
        yield cell


@lru_cache(maxsize=256)
def region_masses(spec: NoiseSpec, r: int) -> RegionTable:
    """Likelihood-ratio regions for r perturbed coordinates"""
    if r < 0:
        raise DomainError(f"r must be nonnegative, got {r}")

    cells = _cell_masses_exact(spec, r) if r <= EXACT_MAX_R else _cell_masses_log(spec, r)
    merged = {}
    for i, j, p_mass, q_mass in cells:
        entry = merged.setdefault(i - j, ([], [], []))
        entry[0].append((i, j))
        entry[1].append(p_mass)
        entry[2].append(q_mass)

    regions = tuple(
        Region(
            ratio_exponent=k,
            p_mass=min(math.fsum(merged[k][1]), 1.0),
            q_mass=min(math.fsum(merged[k][2]), 1.0),
            cells=tuple(merged[k][0]),
        )
        for k in sorted(merged, reverse=True)
    )
    return RegionTable(r=r, spec=spec, regions=regions)


def min_adversarial_prob(p_lower: float, table: RegionTable) -> float:
    """
    Smallest Q(A) over events A with P(A) >= p_lower, by greedy fill of the
    regions in descending P/Q ratio order.
    """
    _check_probability(p_lower, "p_lower")
    if p_lower >= 1.0:
        return 1.0

    remaining = p_lower
    bound = 0.0
    for region in table.regions:
        if remaining <= 0.0:
            break
        if region.p_mass <= remaining:
            bound += region.q_mass
            remaining -= region.p_mass
        else:
            bound += remaining * (region.q_mass / region.p_mass)
            remaining = 0.0
    return min(bound, 1.0)


def certified_radius(
    p_lower: float, spec: NoiseSpec, max_radius: int = MAX_RADIUS
) -> Optional[int]:
    """
    Largest r whose worst-case bound stays strictly above 1/2, or None when
    p_lower does not establish a majority.
    """
    _check_probability(p_lower, "p_lower")
    if p_lower <= MAJORITY:
        return None

    radius = 0
    while radius < max_radius:
        if min_adversarial_prob(p_lower, region_masses(spec, radius + 1)) <= MAJORITY:
            return radius
        radius += 1
    logger.warning(f"Radius search stopped at the cap {max_radius} for p_lower={p_lower}")
    return radius


def radius_threshold(r: int, spec: NoiseSpec) -> float:
    """Infimum p_lower whose worst-case bound at radius r exceeds 1/2"""
    table = region_masses(spec, r)
    p_cumulative = 0.0
    q_cumulative = 0.0
    for region in table.regions:
        if q_cumulative + region.q_mass >= MAJORITY:
            # Linear segment of the greedy fill that crosses 1/2
            return p_cumulative + (MAJORITY - q_cumulative) * (region.p_mass / region.q_mass)
        p_cumulative += region.p_mass
        q_cumulative += region.q_mass
    return 1.0


def radius_thresholds(spec: NoiseSpec, max_r: int) -> List[float]:
    """Thresholds for radii 0..max_r"""
    return [radius_threshold(r, spec) for r in range(max_r + 1)]
