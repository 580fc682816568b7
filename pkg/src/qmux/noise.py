"""Loss, memory dephasing and optical-switch models.

Scalar closed forms live next to their density-matrix channel so the two
can be checked against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import core
from .errors import ConfigurationError, LayoutError, PreconditionError


@dataclass(frozen=True)
class PhysicalParams:
    """Channel and memory constants.

    Attributes
    ----------
    L : float
        Alice-Bob distance in km.
    L_att : float
        Fiber attenuation length in km.
    c : float
        Signal speed in fiber, km/s.
    T2 : float
        Memory coherence time, s.
    eta_OS : float
        Transmission of a single optical switch.
    P_ES : float
        Entanglement-swapping success probability.
    """

    L: float = 0.0
    L_att: float = 25.0
    c: float = 2e5
    T2: float = 1e-3
    eta_OS: float = 0.99
    P_ES: float = 0.9

    def __post_init__(self):
        checks = {
            "L": self.L >= 0,
            "L_att": self.L_att > 0,
            "c": self.c > 0,
            "T2": self.T2 > 0,
            "eta_OS": 0 < self.eta_OS <= 1,
            "P_ES": 0 < self.P_ES <= 1,
        }
        for name, ok in checks.items():
            if not ok or not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"invalid {name} = {getattr(self, name)!r}")

    def at(self, L: float) -> "PhysicalParams":
        return replace(self, L=float(L))

    @property
    def one_way_time(self) -> float:
        """L/c in seconds."""
        return self.L / self.c


def transmission_prob(p: PhysicalParams) -> float:
    return math.exp(-p.L / p.L_att)


def dephasing_lambda(t: float, T2: float) -> float:
    """Weight kept on the identity Kraus operator after waiting ``t``."""
    if t < 0:
        raise PreconditionError(f"negative dephasing duration {t!r}")
    return (1.0 + math.exp(-t / T2)) / 2.0


def dephasing_kraus(lam: float) -> list[np.ndarray]:
    if not 0.0 <= lam <= 1.0:
        raise ConfigurationError(f"dephasing weight {lam!r} outside [0, 1]")
    return [math.sqrt(lam) * core.GATES["I"], math.sqrt(1.0 - lam) * core.GATES["Z"]]


def dephase_with(rho: core.State, qubit: core.QubitLabel, lam: float) -> core.DensityMatrix:
    """``rho -> lam rho + (1 - lam) Z rho Z`` on one qubit."""
    return core.apply_kraus(rho, dephasing_kraus(lam), [qubit])


def dephase(rho: core.State, qubit: core.QubitLabel, t: float, p: PhysicalParams) -> core.DensityMatrix:
    return dephase_with(rho, qubit, dephasing_lambda(t, p.T2))


def dephased_fidelity(F: float, factor: float) -> float:
    """Fidelity of a phase-damped Bell pair after its coherence shrinks by ``factor``."""
    return (1.0 + (2.0 * F - 1.0) * factor) / 2.0


def pair_fidelity_qmux(p: PhysicalParams) -> float:
    # 3L/c: travel to Bob plus the heralding message back, as used for QMUXING pairs
    return (1.0 + math.exp(-3.0 * p.L / (p.c * p.T2))) / 2.0


def pair_fidelity_trad_second(p: PhysicalParams) -> float:
    """Fidelity of the first-created pair, which waits for the second one."""
    p0 = transmission_prob(p)
    exponent = p.L / (p.c * p.T2) + 2.0 * p.L / (p.c * p0 * p.T2)
    return (1.0 + math.exp(-exponent)) / 2.0


def switch_count(n_pairs: int) -> float:
    """Number of optical switches a photon crosses when entangling ``n_pairs`` pairs."""
    count = 1.5 * n_pairs - 3.0
    if count < 0:
        raise ConfigurationError(f"negative switch count for n_pairs={n_pairs}")
    return count


def switch_adjusted_p0(P0: float, n_pairs: int, eta_OS: float, n_switches: float | None = None) -> float:
    """``eta_OS ** switches * P0``; ``n_switches`` overrides the default count.

    Fractional counts (odd ``n_pairs``) are kept as real exponents.
    """
    if n_switches is None:
        n_switches = switch_count(n_pairs)
    elif n_switches < 0:
        raise ConfigurationError(f"negative switch count {n_switches!r}")
    return eta_OS**n_switches * P0


@dataclass(frozen=True, eq=False)
class LossMixture:
    """Two orthogonal branches of a transmitted photon.

    ``heralded`` still carries the photonic qubits; ``lost`` lives on the
    memory qubits only, since the photon is in the vacuum there and has no
    coherence with the heralded branch.
    """

    p_herald: float
    heralded: core.DensityMatrix
    lost: core.DensityMatrix

    @property
    def trace(self) -> float:
        return self.p_herald * self.heralded.trace + (1.0 - self.p_herald) * self.lost.trace

    def memory_state(self) -> core.DensityMatrix:
        """Total state with the photon discarded, over the memory qubits."""
        mems = list(self.lost.layout)
        ok = core.partial_trace(self.heralded, mems).matrix
        return core.DensityMatrix(
            self.lost.layout, self.p_herald * ok + (1.0 - self.p_herald) * self.lost.matrix
        )


def apply_loss_mixture(
    state: core.State,
    p: PhysicalParams,
    after_transmission: Callable[[core.State], core.State] | None = None,
    p0: float | None = None,
) -> LossMixture:
    """Split a pre-transmission state into heralded and lost branches.

    The lost branch is the memory reduction of the input: memories that have
    already interacted with the photon end up mixed, the others keep their
    state.  ``after_transmission`` (e.g. Bob's interactions) is applied to
    the heralded branch only.
    """
    photons = [q for q in state.layout if q.is_photonic]
    if not photons:
        raise LayoutError(f"no photonic qubits in layout {state.layout}")
    mems = [q for q in state.layout if not q.is_photonic]
    p0 = transmission_prob(p) if p0 is None else p0
    lost = core.partial_trace(state, mems)
    heralded = state if after_transmission is None else after_transmission(state)
    return LossMixture(p0, heralded.to_density(), lost)
