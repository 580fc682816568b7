"""Closed-form rates, resource-normalized rate ratios and waiting-time statistics.

Inverse rates are handled as dimensionless coefficients ``tau`` with
``1/r = tau * L / c``, which stay finite at ``L = 0`` where the raw rates
themselves diverge.  Ratios of rates are ratios of coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import noise
from .errors import ConfigurationError
from .noise import PhysicalParams
from .protocols import purification_chain, qmux_initial_fidelity
from .table import SweepTable

PERFECT = "perfect"
IMPERFECT = "imperfect"

# rounded three-pair waiting factor used for the EC rate; the exact
# small-P0 limit of expected_attempts_3 is 11/6
APPROX_WAIT_FACTOR_3 = 1.7


@dataclass(frozen=True)
class CostModel:
    C_M: float = 1.0
    C_p: float = 1.0

    def __post_init__(self):
        if self.C_M < 0 or self.C_p < 0 or (self.C_M == 0 and self.C_p == 0):
            raise ConfigurationError(f"invalid cost weights C_M={self.C_M!r}, C_p={self.C_p!r}")


@dataclass(frozen=True)
class ResourceCount:
    """Matter qubits ``M`` and expected photons ``m`` per delivered pair."""

    M: float
    m: float

    def __post_init__(self):
        if self.M < 1 or self.m < 1:
            raise ConfigurationError(f"invalid resource count M={self.M!r}, m={self.m!r}")

    def cost(self, cost: CostModel) -> float:
        return self.M * cost.C_M + self.m * cost.C_p


@dataclass(frozen=True)
class RatePoint:
    L: float
    raw_rate: float
    normalized_rate: float
    inverse_rate_coefficient: float
    resources: ResourceCount
    auxiliary: dict = field(default_factory=dict)


def normalized_rate(raw: float, res: ResourceCount, cost: CostModel) -> float:
    denom = res.cost(cost)
    if denom <= 0:
        raise ConfigurationError("resource cost denominator is zero")
    return raw / denom


def _raw_from_coefficient(tau: float, p: PhysicalParams) -> float:
    if p.L == 0:
        return math.inf
    return p.c / (p.L * tau)


def _point(p: PhysicalParams, tau: float, res: ResourceCount, cost: CostModel, **aux) -> RatePoint:
    raw = _raw_from_coefficient(tau, p)
    return RatePoint(p.L, raw, normalized_rate(raw, res, cost), tau, res, aux)


def pd_chain(k: int, p: PhysicalParams) -> list[float]:
    """Success probabilities ``P_D(1..k)`` of successive rounds on pairs of fidelity F0(L).

    The same chain feeds both QMUXING and traditional pipelines so that
    raw-rate ratios depend on timing and loss only.
    """
    if k == 0:
        return []
    return [pd for _, pd in purification_chain(k, qmux_initial_fidelity(p), 1.0)]


def _effective_p0(p: PhysicalParams, n_pairs: int, switches: str, n_switches: float | None) -> float:
    p0 = noise.transmission_prob(p)
    if switches == PERFECT:
        return p0
    if switches != IMPERFECT:
        raise ConfigurationError(f"unknown switch model {switches!r}")
    if n_switches is None and n_pairs < 2:
        return p0
    return noise.switch_adjusted_p0(p0, n_pairs, p.eta_OS, n_switches)


def raw_rate_qmux(
    k: int,
    p: PhysicalParams,
    cost: CostModel = CostModel(),
    switches: str = PERFECT,
    n_switches: float | None = None,
) -> RatePoint:
    """QMUXING protocol with ``k`` built-in purification rounds (``2**k`` pairs on one photon)."""
    if k < 0:
        raise ConfigurationError(f"k must be >= 0, got {k}")
    pds = pd_chain(k, p)
    p0 = _effective_p0(p, 2**k, switches, n_switches)
    tau = 2.0 / (p0 * math.prod(pds))
    res = ResourceCount(2**k + 1, 1.0 / p0)
    return _point(p, tau, res, cost, P0=p0, P_D=pds)


def deutsch_inverse_coefficient(k: int, p0: float, pds: Sequence[float]) -> float:
    """Inverse-rate coefficient of ``k`` Deutsch rounds on conventionally created pairs.

    The leading term is pair creation with the 3/2 two-pair waiting factor;
    each following term is one round's acknowledgement, with one factor of
    3/2 fewer and the trailing success probabilities dropped.
    """
    tau = 1.5**k * 2.0 / (p0 * math.prod(pds[:k]))
    for j in range(1, k + 1):
        tau += 1.5 ** (k - j) / math.prod(pds[: k - j + 1])
    return tau


def raw_rate_deutsch(k: int, p: PhysicalParams, cost: CostModel = CostModel()) -> RatePoint:
    if k < 1:
        raise ConfigurationError("the Deutsch pipeline needs k >= 1 rounds")
    pds = pd_chain(k, p)
    p0 = noise.transmission_prob(p)
    tau = deutsch_inverse_coefficient(k, p0, pds)
    res = ResourceCount(2 ** (k + 1), 2**k / p0)
    return _point(p, tau, res, cost, P0=p0, P_D=pds)


def _normalized_ratio(a: RatePoint, b: RatePoint, cost: CostModel) -> float:
    """R_a / R_b computed from coefficients (finite at L = 0)."""
    return (b.inverse_rate_coefficient / a.inverse_rate_coefficient) * (
        b.resources.cost(cost) / a.resources.cost(cost)
    )


def raw_ratio_purification(k: int, p: PhysicalParams, switches: str = PERFECT, n_switches=None) -> float:
    q = raw_rate_qmux(k, p, switches=switches, n_switches=n_switches)
    d = raw_rate_deutsch(k, p)
    return d.inverse_rate_coefficient / q.inverse_rate_coefficient


def ratio_purification(
    k: int,
    p: PhysicalParams,
    cost: CostModel = CostModel(),
    switches: str = PERFECT,
    n_switches: float | None = None,
) -> float:
    """Normalized-rate ratio R_QMX(k) / R_D(k)."""
    q = raw_rate_qmux(k, p, cost, switches, n_switches)
    d = raw_rate_deutsch(k, p, cost)
    return _normalized_ratio(q, d, cost)


def ratio_k1_closed_form(P0: float) -> float:
    """R_QMX/R_D for one round with C_M = C_p = 1, as a function of P0 alone."""
    return (1.5 + P0 / 2) * (4 * P0 + 2) / (3 * P0 + 1)


def rate_single_node_qr(p: PhysicalParams, cost: CostModel = CostModel()) -> RatePoint:
    """One-node repeater: pairs purified over L/2, then swapped with probability P_ES."""
    p0 = noise.transmission_prob(p)
    half = p.at(p.L / 2)
    pd = pd_chain(1, half)[0]
    sq = math.sqrt(p0)
    tau = 2.25 * 2.0 * 0.5 / (sq * pd * p.P_ES) + 1.5 * 0.5 / (pd * p.P_ES) + 0.5 / p.P_ES
    res = ResourceCount(8, 4.0 / sq)
    return _point(p, tau, res, cost, P0=p0, P_D=[pd])


def repeater_ratios(p: PhysicalParams, cost: CostModel = CostModel()) -> tuple[float, float]:
    """(raw, normalized) ratio of the three-memory QMUXING protocol to the one-node repeater."""
    q = raw_rate_qmux(1, p, cost)
    r = rate_single_node_qr(p, cost)
    return r.inverse_rate_coefficient / q.inverse_rate_coefficient, _normalized_ratio(q, r, cost)


def rate_ec(
    variant: str,
    p: PhysicalParams,
    cost: CostModel = CostModel(),
    switches: str = PERFECT,
    wait_factor: float = APPROX_WAIT_FACTOR_3,
    n_switches: float | None = None,
) -> RatePoint:
    """Three-pair error-correction rates.

    ``traditional`` waits ``wait_factor / P0`` attempts for three
    independently created pairs; pass ``expected_attempts_3(P0) * P0`` for
    the exact factor.
    """
    if variant == "qmux":
        p0 = _effective_p0(p, 3, switches, n_switches)
        return _point(p, 2.0 / p0, ResourceCount(4, 1.0 / p0), cost, P0=p0)
    if variant == "traditional":
        p0 = noise.transmission_prob(p)
        return _point(p, wait_factor * 2.0 / p0, ResourceCount(6, 3.0 / p0), cost, P0=p0)
    raise ConfigurationError(f"unknown EC variant {variant!r}")


def ec_ratios(
    p: PhysicalParams,
    cost: CostModel = CostModel(),
    switches: str = PERFECT,
    wait_factor: float = APPROX_WAIT_FACTOR_3,
) -> tuple[float, float]:
    """(raw, normalized) ratio R_QMX^EC / R_D^EC."""
    q = rate_ec("qmux", p, cost, switches)
    d = rate_ec("traditional", p, cost, wait_factor=wait_factor)
    return d.inverse_rate_coefficient / q.inverse_rate_coefficient, _normalized_ratio(q, d, cost)


def cost_sweep(p: PhysicalParams, ratio_grid: Sequence[float], k: int = 1) -> SweepTable:
    """R_QMX/R_D at fixed L versus C_M/C_p (with C_p = 1)."""
    table = SweepTable(["CM_over_Cp", "ratio", "equal_cost"])
    for x in ratio_grid:
        if not x > 0:
            raise ConfigurationError(f"cost ratio grid values must be > 0, got {x!r}")
        table.add(float(x), ratio_purification(k, p, CostModel(float(x), 1.0)), bool(x == 1.0))
    return table


def cost_sweep_limits(p: PhysicalParams) -> tuple[float, float]:
    """Limits of the k = 1 ratio for C_M/C_p -> 0 and -> infinity."""
    raw = raw_ratio_purification(1, p)
    return raw * 2.0, raw * 4.0 / 3.0


# --------------------------------------------------------------------------
# waiting times


def geometric_pmf(n: int, P0: float) -> float:
    """Probability that the first success happens on attempt ``n``."""
    if n < 1:
        raise ConfigurationError(f"attempt number must be >= 1, got {n}")
    _check_p0(P0)
    return (1.0 - P0) ** (n - 1) * P0


def _check_p0(P0: float):
    if not 0.0 < P0 <= 1.0:
        raise ConfigurationError(f"P0 {P0!r} outside (0, 1]")


def max3_pmf(n: int, P0: float) -> float:
    """Probability that the last of three independent links succeeds on attempt ``n``."""
    pn = geometric_pmf(n, P0)
    before = 1.0 - (1.0 - P0) ** (n - 1)
    return pn**3 + 3 * pn**2 * before + 3 * pn * before**2


def expected_attempts_3(P0: float) -> float:
    _check_p0(P0)
    num = 3 * P0**3 - 12 * P0**2 + 19 * P0 - 11
    den = P0 * (P0**2 - 3 * P0 + 3) * (P0 - 2)
    return num / den


def expected_attempts_n(N: int, P0: float) -> float:
    """Mean of the maximum of ``N`` independent geometric variables (inclusion-exclusion)."""
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}")
    _check_p0(P0)
    q = 1.0 - P0
    total = 0.0
    for j in range(1, N + 1):
        hit = 1.0 if q == 0 else -math.expm1(j * math.log(q))
        total += (-1) ** (j + 1) * math.comb(N, j) / hit
    return total


def harmonic_number(N: int) -> float:
    return sum(1.0 / j for j in range(1, N + 1))


def pmf_mean(pmf: Callable[[int, float], float], P0: float, tail_factor: float = 3.0, rel_tol: float = 1e-12) -> tuple[float, float]:
    """Truncated ``sum n * pmf(n)`` and the summed probability mass.

    Stops once ``tail_factor * (1-P0)**n``, a bound on the remaining mass
    for the max of ``tail_factor`` geometrics, drops below ``rel_tol``
    times the accumulated mass.
    """
    _check_p0(P0)
    mean = mass = 0.0
    n = 0
    while True:
        n += 1
        w = pmf(n, P0)
        mean += n * w
        mass += w
        tail = tail_factor * (1.0 - P0) ** n
        if tail * max(n, 1.0 / P0) < rel_tol * mass:
            return mean, mass


MC_BLOCK = 1 << 16


def monte_carlo_attempts(N: int, P0: float, trials: int, seed: int = 0) -> tuple[float, float]:
    """Sample mean and standard error of the max of ``N`` geometric draws.

    Trials are split into fixed-size blocks, each with its own Philox
    stream spawned from ``seed``, so the result depends only on
    ``(N, P0, trials, seed)``.
    """
    if trials < 1:
        raise ConfigurationError(f"trials must be >= 1, got {trials}")
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}")
    _check_p0(P0)
    n_blocks = -(-trials // MC_BLOCK)
    streams = np.random.SeedSequence(seed).spawn(n_blocks)
    total = 0.0
    total_sq = 0.0
    for b, ss in enumerate(streams):
        size = min(MC_BLOCK, trials - b * MC_BLOCK)
        rng = np.random.Generator(np.random.Philox(ss))
        draws = rng.geometric(P0, size=(size, N)).max(axis=1).astype(float)
        total += draws.sum()
        total_sq += np.square(draws).sum()
    mean = float(total / trials)
    if trials == 1:
        return mean, 0.0
    var = max(float(total_sq) - trials * mean * mean, 0.0) / (trials - 1)
    return mean, math.sqrt(var / trials)
