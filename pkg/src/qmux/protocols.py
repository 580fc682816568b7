"""Entangling, purification and error-correction protocols on the exact engine.

Every protocol runs gate by gate on :mod:`qmux.core` states.  Measurement
branches are enumerated exactly, so success probabilities and kept states
are exact; passing an ``rng`` additionally samples one trajectory for the
step trace.

Memory pairs follow the layout ``QM(2j-1)`` (Alice) and ``QM(2j)`` (Bob) for
pair ``j``.  The photon carries one polarization qubit plus one time-bin
qubit per extra pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import core, noise
from .core import COMPUTATIONAL, DIAGONAL, DensityMatrix, PureState, QubitLabel
from .errors import ConfigurationError, PreconditionError
from .noise import PhysicalParams

NOISE_NONE = "none"
NOISE_LOSS = "loss"
NOISE_LOSS_DEPHASING = "loss+dephasing"
NOISE_DEPHASING = "dephasing"

# branches lighter than this are dropped when enumerating measurement outcomes
_BRANCH_FLOOR = 1e-14


# --------------------------------------------------------------------------
# states


def bell_state(kind: str, a: QubitLabel, b: QubitLabel) -> PureState:
    """``phi+``, ``phi-``, ``psi+`` or ``psi-`` on qubits ``(a, b)``."""
    terms = {
        "phi+": {"00": 1, "11": 1},
        "phi-": {"00": 1, "11": -1},
        "psi+": {"01": 1, "10": 1},
        "psi-": {"01": 1, "10": -1},
    }
    try:
        return core.ket([a, b], terms[kind])
    except KeyError:
        raise ConfigurationError(f"unknown Bell state {kind!r}") from None


def pair_labels(j: int) -> tuple[QubitLabel, QubitLabel]:
    return core.memory(2 * j - 1), core.memory(2 * j)


def phase_damped_pair(F: float, a: QubitLabel | None = None, b: QubitLabel | None = None) -> DensityMatrix:
    """``F |phi+><phi+| + (1-F) Z|phi+><phi+|Z`` on ``(a, b)``."""
    if not 0.0 <= F <= 1.0:
        raise ConfigurationError(f"fidelity {F!r} outside [0, 1]")
    if a is None:
        a, b = pair_labels(1)
    plus = bell_state("phi+", a, b).to_density().matrix
    minus = bell_state("phi-", a, b).to_density().matrix
    return DensityMatrix(core.SystemLayout([a, b]), F * plus + (1 - F) * minus)


def product_target(n_pairs: int) -> PureState:
    """``|phi+_12>|phi+_34>...`` over ``QM1..QM(2n)``."""
    return core.tensor(*(bell_state("phi+", *pair_labels(j)) for j in range(1, n_pairs + 1)))


@dataclass(frozen=True)
class BellDiagonal:
    """Weights of psi+, psi-, phi+ and phi- in a Bell-diagonal pair."""

    A: float
    B: float
    C: float
    D_coef: float

    def __post_init__(self):
        w = (self.A, self.B, self.C, self.D_coef)
        if min(w) < 0 or abs(sum(w) - 1.0) > 1e-12:
            raise ConfigurationError(f"Bell-diagonal weights {w} must be >= 0 and sum to 1")

    @classmethod
    def from_abc(cls, A: float, B: float, C: float) -> "BellDiagonal":
        return cls(A, B, C, 1.0 - A - B - C)

    def to_density(self, a: QubitLabel | None = None, b: QubitLabel | None = None) -> DensityMatrix:
        if a is None:
            a, b = pair_labels(1)
        mat = sum(
            w * bell_state(kind, a, b).to_density().matrix
            for w, kind in zip((self.A, self.B, self.C, self.D_coef), ("psi+", "psi-", "phi+", "phi-"))
        )
        return DensityMatrix(core.SystemLayout([a, b]), mat)


@dataclass(frozen=True)
class PauliFrame:
    """Pending X/Z corrections per memory qubit."""

    flips: tuple[tuple[QubitLabel, bool, bool], ...] = ()

    def with_flip(self, qubit: QubitLabel, x: bool = False, z: bool = False) -> "PauliFrame":
        table = {q: (fx, fz) for q, fx, fz in self.flips}
        fx, fz = table.get(qubit, (False, False))
        table[qubit] = (fx ^ x, fz ^ z)
        return PauliFrame(tuple((q, fx, fz) for q, (fx, fz) in sorted(table.items()) if fx or fz))

    def combine(self, other: "PauliFrame") -> "PauliFrame":
        out = self
        for q, fx, fz in other.flips:
            out = out.with_flip(q, fx, fz)
        return out

    def apply(self, state: core.State) -> core.State:
        for q, fx, fz in self.flips:
            if fx:
                state = core.apply_gate(state, "X", q)
            if fz:
                state = core.apply_gate(state, "Z", q)
        return state

    def __bool__(self):
        return bool(self.flips)


# --------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class TraceStep:
    name: str
    qubits: tuple[str, ...]
    outcome: str = ""
    probability: float = 1.0

    def to_text(self) -> str:
        qs = " ".join(self.qubits)
        return f"{self.name} [{qs}] {self.outcome or '.'} {self.probability:.12g}"


class _Run:
    """Applies operations to a state while recording a step trace."""

    def __init__(self, state: core.State):
        self.state = state
        self.steps: list[TraceStep] = []

    def log(self, name, qubits, outcome="", probability=1.0):
        self.steps.append(TraceStep(name, tuple(str(q) for q in qubits), outcome, probability))

    def gate(self, name: str, *qubits: QubitLabel):
        self.state = core.apply_gate(self.state, name, *qubits)
        self.log(name, qubits)

    def op(self, name: str, fn, *qubits: QubitLabel, **kwargs):
        self.state = fn(self.state, *qubits, **kwargs)
        self.log(name, qubits)

    def dephase(self, qubit: QubitLabel, lam: float):
        self.state = noise.dephase_with(self.state, qubit, lam)
        self.log(f"dephase(F={lam:.12g})", [qubit])

    def diagonal_cnot(self, control: QubitLabel, target: QubitLabel):
        """CNOT acting on the +/- basis of both qubits."""
        for q in (control, target):
            self.state = core.apply_gate(self.state, "H", q)
        self.state = core.apply_gate(self.state, "CNOT", control, target)
        for q in (control, target):
            self.state = core.apply_gate(self.state, "H", q)
        self.log("CNOT(diagonal)", [control, target])


def _branches(
    state: core.State, measurements: Sequence[tuple[QubitLabel, str]]
) -> Iterator[tuple[tuple[core.MeasurementRecord, ...], float, core.State]]:
    """Every outcome combination with its joint probability and post-state."""
    if not measurements:
        yield (), 1.0, state
        return
    (qubit, basis), rest = measurements[0], measurements[1:]
    probs = core.outcome_probabilities(state, qubit, basis)
    for outcome in (0, 1):
        if probs[outcome] < _BRANCH_FLOOR:
            continue
        rec, post = core.measure(state, qubit, basis, outcome=outcome, remove=True)
        for recs, p, final in _branches(post, rest):
            yield (rec,) + recs, probs[outcome] * p, final


def _sample_path(run: _Run, measurements, rng: np.random.Generator) -> tuple[core.MeasurementRecord, ...]:
    records = []
    for qubit, basis in measurements:
        rec, run.state = core.measure(run.state, qubit, basis, rng=rng, remove=True)
        run.log("measure", [qubit], rec.symbol, rec.probability)
        records.append(rec)
    return tuple(records)


def _mixture(layout: core.SystemLayout, parts: list[tuple[float, core.State]]) -> DensityMatrix:
    total = sum(w for w, _ in parts)
    if total <= 0.0:
        raise PreconditionError("no measurement branch is kept; the protocol cannot succeed on this input")
    mat = sum(w * s.to_density().matrix for w, s in parts) / total
    return DensityMatrix(layout, mat)


def _pair_fidelities(state: core.State, n_pairs: int) -> list[float]:
    out = []
    for j in range(1, n_pairs + 1):
        a, b = pair_labels(j)
        out.append(core.fidelity(core.partial_trace(state, [a, b]), bell_state("phi+", a, b)))
    return out


# --------------------------------------------------------------------------
# entangling


@dataclass(frozen=True, eq=False)
class EntangleOutcome:
    success: bool
    herald_probability: float
    state: DensityMatrix
    per_pair_fidelity: list[float]
    elapsed: float
    photons_consumed: float
    photon_outcome: tuple[str, ...] = ()
    pre_correction: core.State | None = None
    mixture: noise.LossMixture | None = None
    trace: list[TraceStep] = field(default_factory=list)


def qmux_layout(n_pairs: int, max_qubits: int = core.DEFAULT_MAX_QUBITS) -> core.SystemLayout:
    mems = [core.memory(i) for i in range(1, 2 * n_pairs + 1)]
    photon = [core.polarization()] + [core.timebin(i) for i in range(1, n_pairs)]
    return core.SystemLayout(mems + photon, max_qubits)


def _qmux_alice(run: _Run, n_pairs: int):
    pol = core.polarization()
    for j in range(1, n_pairs + 1):
        a, b = pair_labels(j)
        run.gate("H", a)
        run.gate("H", b)
    for j in range(1, n_pairs):
        run.op("nv_photon_interact", core.nv_photon_interact, pair_labels(j)[0], pol)
        run.op("pol_to_timebin", core.pol_to_timebin, pol, core.timebin(j))
    run.op("nv_photon_interact", core.nv_photon_interact, pair_labels(n_pairs)[0], pol)


def _qmux_bob(state: core.State, n_pairs: int, run: _Run | None = None) -> core.State:
    run = run or _Run(state)
    run.state = state
    pol = core.polarization()
    run.op("nv_photon_interact", core.nv_photon_interact, pair_labels(n_pairs)[1], pol)
    for j in range(n_pairs - 1, 0, -1):
        run.op("swap_dofs", core.swap_dofs, pol, core.timebin(j))
        run.op("nv_photon_interact", core.nv_photon_interact, pair_labels(j)[1], pol)
    return run.state


def _qmux_parity_map(n_pairs: int) -> list[tuple[QubitLabel, int]]:
    """Photonic qubit measured for each pair's parity, in measurement order."""
    out = [(core.polarization(), 1)]
    out += [(core.timebin(j), j + 1) for j in range(1, n_pairs)]
    return out


def run_qmux_entangle(
    n_pairs: int,
    p: PhysicalParams,
    noise_model: str = NOISE_NONE,
    rng: np.random.Generator | None = None,
    outcomes: Sequence[int] | None = None,
    herald: bool | None = None,
    switches: str = "perfect",
    n_switches: float | None = None,
    max_qubits: int = core.DEFAULT_MAX_QUBITS,
) -> EntangleOutcome:
    """Entangle ``n_pairs`` memory pairs with a single multi-DOF photon.

    Parameters
    ----------
    outcomes
        Forced photon outcomes (polarization first, then time bins 1..N-1).
        Without it the outcome is sampled from ``rng``, or the ``D_S...``
        branch is taken.
    herald
        Force the photon to arrive (``True``) or be lost (``False``).  By
        default an ``rng`` decides when loss is modelled, otherwise the run
        is conditioned on arrival.
    """
    if noise_model not in (NOISE_NONE, NOISE_LOSS, NOISE_LOSS_DEPHASING):
        raise ConfigurationError(f"unknown noise model {noise_model!r}")
    if n_pairs < 2:
        raise ConfigurationError("QMUXING entangling needs at least two pairs")
    if 3 * n_pairs > max_qubits:
        raise ConfigurationError(
            f"{n_pairs} pairs need {3 * n_pairs} qubits, above the engine cap of {max_qubits}"
        )
    layout = qmux_layout(n_pairs, max_qubits)
    run = _Run(core.new_state(layout, "0" * layout.n))
    _qmux_alice(run, n_pairs)

    lossy = noise_model != NOISE_NONE
    p0 = noise.transmission_prob(p) if lossy else 1.0
    if lossy and switches == "imperfect":
        p0 = noise.switch_adjusted_p0(p0, n_pairs, p.eta_OS, n_switches)
    elapsed = 2.0 * p.L / p.c

    mixture = None
    if lossy:
        mixture = noise.apply_loss_mixture(
            run.state, p, after_transmission=lambda s: _qmux_bob(s, n_pairs), p0=p0
        )
        if herald is None:
            herald = True if rng is None else bool(rng.random() < p0)
        run.log("transmit", [core.polarization()], "arrived" if herald else "lost", p0 if herald else 1 - p0)
        if not herald:
            lost = mixture.lost
            return EntangleOutcome(
                success=False,
                herald_probability=p0,
                state=lost,
                per_pair_fidelity=_pair_fidelities(lost, n_pairs),
                elapsed=elapsed,
                photons_consumed=1.0 / p0,
                mixture=mixture,
                trace=run.steps,
            )
    _qmux_bob(run.state, n_pairs, run)

    parity = _qmux_parity_map(n_pairs)
    if outcomes is None and rng is None:
        outcomes = [0] * n_pairs
    if outcomes is not None and len(outcomes) != n_pairs:
        raise ConfigurationError(f"expected {n_pairs} photon outcomes, got {len(outcomes)}")
    frame = PauliFrame()
    symbols = []
    for i, (q, pair) in enumerate(parity):
        if outcomes is None:
            rec, run.state = core.measure(run.state, q, COMPUTATIONAL, rng=rng, remove=True)
        else:
            rec, run.state = core.measure(run.state, q, COMPUTATIONAL, outcome=outcomes[i], remove=True)
        run.log("measure", [q], rec.symbol, rec.probability)
        symbols.append(rec.symbol)
        if rec.outcome:
            frame = frame.with_flip(pair_labels(pair)[1], x=True)
    pre_correction = run.state
    if frame:
        run.state = frame.apply(run.state)
        run.log("pauli_frame", [q for q, _, _ in frame.flips])
    state = run.state.to_density()

    if noise_model == NOISE_LOSS_DEPHASING:
        lam = noise.dephasing_lambda(3.0 * p.L / p.c, p.T2)
        for j in range(1, n_pairs + 1):
            run.dephase(pair_labels(j)[0], lam)
        state = run.state

    return EntangleOutcome(
        success=True,
        herald_probability=p0,
        state=state,
        per_pair_fidelity=_pair_fidelities(state, n_pairs),
        elapsed=elapsed,
        photons_consumed=1.0 / p0,
        photon_outcome=tuple(symbols),
        pre_correction=pre_correction,
        mixture=mixture,
        trace=run.steps,
    )


def traditional_fidelities(n_pairs: int, p: PhysicalParams, attempts: Sequence[int] | None = None) -> list[float]:
    """Pair fidelities for sequential one-photon-per-pair creation.

    Pair ``n`` is created first and pair 1 last; every pair except the last
    keeps dephasing while the later ones are attempted (``2L/c`` per attempt,
    ``1/P0`` attempts on average unless ``attempts`` is given).
    """
    p0 = noise.transmission_prob(p)
    out = []
    for i in range(1, n_pairs + 1):
        if i == 1:
            out.append(noise.pair_fidelity_qmux(p))
            continue
        if attempts is None:
            wait = (i - 1) * 2.0 * p.L / (p.c * p0)
        else:
            wait = sum(attempts[: i - 1]) * 2.0 * p.L / p.c
        out.append((1.0 + math.exp(-(p.L / p.c + wait) / p.T2)) / 2.0)
    return out


def run_traditional_entangle(
    n_pairs: int, p: PhysicalParams, rng: np.random.Generator | None = None
) -> EntangleOutcome:
    """Independent prepare-and-measure pairs; expected-value mode without ``rng``."""
    if n_pairs < 1:
        raise ConfigurationError("n_pairs must be >= 1")
    p0 = noise.transmission_prob(p)
    run = _Run(None)
    if rng is None:
        attempts = None
        elapsed = n_pairs * (2.0 * p.L / p.c) / p0
    else:
        attempts = [int(a) for a in rng.geometric(p0, size=n_pairs)]
        elapsed = sum(attempts) * 2.0 * p.L / p.c
    fids = traditional_fidelities(n_pairs, p, attempts)
    for i in range(n_pairs, 0, -1):
        prob = p0 if attempts is None else (1 - p0) ** (attempts[i - 1] - 1) * p0
        run.log("entangle_pair", pair_labels(i), "" if attempts is None else f"attempts={attempts[i - 1]}", prob)
    state = core.tensor(*(phase_damped_pair(F, *pair_labels(j)) for j, F in enumerate(fids, 1)))
    return EntangleOutcome(
        success=True,
        herald_probability=p0,
        state=state,
        per_pair_fidelity=_pair_fidelities(state, n_pairs),
        elapsed=elapsed,
        photons_consumed=n_pairs / p0,
        trace=run.steps,
    )


# --------------------------------------------------------------------------
# purification


@dataclass(frozen=True, eq=False)
class PurifyOutcome:
    p_success: float
    out_state: DensityMatrix
    out_fidelity: float
    success: bool | None = None
    trace: list[TraceStep] = field(default_factory=list)


def deutsch_fidelity(F1: float, F2: float) -> tuple[float, float]:
    """(success probability, output fidelity) for two phase-damped pairs."""
    p = F1 * F2 + (1 - F1) * (1 - F2)
    return p, F1 * F2 / p


def _frame_ops(variant: str, alice: list[QubitLabel], bob: list[QubitLabel], inverse: bool):
    if variant == "hadamard":
        return [(core.GATES["H"], q) for q in alice + bob]
    if variant == "rotation":
        sign = -1 if inverse else 1
        return [(core.rx(sign * np.pi / 2), q) for q in alice] + [(core.rx(-sign * np.pi / 2), q) for q in bob]
    raise ConfigurationError(f"unknown Deutsch variant {variant!r}")


def _deutsch_on(
    run: _Run,
    control: tuple[QubitLabel, QubitLabel],
    target: tuple[QubitLabel, QubitLabel],
    variant: str = "hadamard",
    rng: np.random.Generator | None = None,
) -> tuple[float, DensityMatrix, bool | None]:
    alice, bob = [control[0], target[0]], [control[1], target[1]]
    for op, q in _frame_ops(variant, alice, bob, inverse=False):
        run.state = core.apply_unitary(run.state, op, [q])
    run.log(f"rotate({variant})", alice + bob)
    run.gate("CNOT", control[0], target[0])
    run.gate("CNOT", control[1], target[1])
    measurements = [(target[0], COMPUTATIONAL), (target[1], COMPUTATIONAL)]
    kept = []
    p_success = 0.0
    for recs, prob, post in _branches(run.state, measurements):
        if recs[0].outcome == recs[1].outcome:
            p_success += prob
            kept.append((prob, post))
    layout = run.state.layout.without(target)
    out = _mixture(layout, kept)
    for op, q in _frame_ops(variant, [control[0]], [control[1]], inverse=True):
        out = core.apply_unitary(out, op, [q])
    success = None
    if rng is not None:
        recs = _sample_path(run, measurements, rng)
        success = recs[0].outcome == recs[1].outcome
        run.log("compare", target, "keep" if success else "discard", p_success if success else 1 - p_success)
    run.state = out
    run.log(f"unrotate({variant})", list(control))
    return p_success, out, success


def deutsch_round(
    pair_a: core.State,
    pair_b: core.State,
    variant: str = "hadamard",
    rng: np.random.Generator | None = None,
) -> PurifyOutcome:
    """One two-to-one purification round; ``pair_a`` is kept, ``pair_b`` measured.

    Each input is a two-qubit state whose first qubit is Alice's.  The output
    keeps ``pair_a``'s labels.
    """
    if pair_a.layout.n != 2 or pair_b.layout.n != 2:
        raise ConfigurationError("deutsch_round needs two 2-qubit pair states")
    ctrl, tgt = pair_labels(1), pair_labels(2)
    joint = core.tensor(_relabel(pair_a, ctrl), _relabel(pair_b, tgt))
    run = _Run(joint)
    p_success, out, success = _deutsch_on(run, ctrl, tgt, variant, rng)
    out = _relabel(out, tuple(pair_a.layout.labels))
    a, b = pair_a.layout.labels
    return PurifyOutcome(
        p_success=p_success,
        out_state=out,
        out_fidelity=core.fidelity(out, bell_state("phi+", a, b)),
        success=success,
        trace=run.steps,
    )


def _relabel(state: core.State, labels) -> DensityMatrix:
    rho = state.to_density()
    return DensityMatrix(core.SystemLayout(labels), rho.matrix)


def purification_chain(k: int, F_initial: float, inter_round_dephase: float = 1.0) -> list[tuple[float, float]]:
    """Fidelity and success probability of ``k`` rounds on identical pairs.

    Entry ``i`` is ``(F_i, P_D(i))``: the fidelity leaving round ``i`` (after
    the inter-round dephasing factor is applied) and the probability that
    round ``i`` succeeds.
    """
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    if not 0.5 <= F_initial <= 1.0:
        raise ConfigurationError(f"F_initial {F_initial!r} outside [1/2, 1]")
    if not 0.0 <= inter_round_dephase <= 1.0:
        raise ConfigurationError(f"inter-round dephasing factor {inter_round_dephase!r} outside [0, 1]")
    out = []
    F = F_initial
    for _ in range(k):
        p_d, F = deutsch_fidelity(F, F)
        F = noise.dephased_fidelity(F, inter_round_dephase)
        out.append((F, p_d))
    return out


def qmux_initial_fidelity(p: PhysicalParams) -> float:
    """Pair fidelity after the one-way photon flight, when purification starts."""
    return noise.dephasing_lambda(p.L / p.c, p.T2)


def _comm_factor(p: PhysicalParams) -> float:
    return math.exp(-2.0 * p.L / (p.c * p.T2))


def qmux_deutsch_fidelity(p: PhysicalParams, engine: bool = False) -> PurifyOutcome:
    """Deutsch round on two QMUXING pairs, then the classical-exchange wait."""
    if engine:
        return _qmux_deutsch_engine(p)
    F0 = qmux_initial_fidelity(p)
    p_d, F = deutsch_fidelity(F0, F0)
    F_dph = noise.dephased_fidelity(F, _comm_factor(p))
    return PurifyOutcome(p_d, phase_damped_pair(F_dph), F_dph)


def _qmux_deutsch_engine(p: PhysicalParams) -> PurifyOutcome:
    ent = run_qmux_entangle(2, p, NOISE_NONE)
    run = _Run(ent.state)
    run.steps = list(ent.trace)
    lam0 = qmux_initial_fidelity(p)
    for j in (1, 2):
        run.dephase(pair_labels(j)[0], lam0)
    # the pair on QM3/QM4 controls, QM1/QM2 is measured
    p_success, out, _ = _deutsch_on(run, pair_labels(2), pair_labels(1))
    run.dephase(core.memory(3), noise.dephasing_lambda(2.0 * p.L / p.c, p.T2))
    out = run.state
    return PurifyOutcome(
        p_success, out, core.fidelity(out, bell_state("phi+", *pair_labels(2))), trace=run.steps
    )


def trad_deutsch_fidelity(p: PhysicalParams, engine: bool = False) -> PurifyOutcome:
    """Deutsch round on sequentially created pairs, then the classical-exchange wait."""
    F12 = noise.pair_fidelity_qmux(p)
    F34 = noise.pair_fidelity_trad_second(p)
    if engine:
        res = deutsch_round(phase_damped_pair(F12, *pair_labels(1)), phase_damped_pair(F34, *pair_labels(2)))
        run = _Run(res.out_state)
        run.steps = list(res.trace)
        run.dephase(core.memory(1), noise.dephasing_lambda(2.0 * p.L / p.c, p.T2))
        out = run.state
        return PurifyOutcome(
            res.p_success, out, core.fidelity(out, bell_state("phi+", *pair_labels(1))), trace=run.steps
        )
    p_d, F = deutsch_fidelity(F12, F34)
    F_dph = noise.dephased_fidelity(F, _comm_factor(p))
    return PurifyOutcome(p_d, phase_damped_pair(F_dph), F_dph)


def purified_pair_closed_form(F: float, a: QubitLabel | None = None, b: QubitLabel | None = None) -> DensityMatrix:
    """Kept state of a dephased two-pair purification.

    Weight ``F^2/(F^2+(1-F)^2)`` on ``|phi+>`` and the rest on the state with
    Alice's qubit flipped in the diagonal frame (``Z`` in the computational
    frame, i.e. ``|phi->``).
    """
    if a is None:
        a, b = core.memory(3), core.memory(4)
    _, w = deutsch_fidelity(F, F)
    return phase_damped_pair(w, a, b)


def run_three_qubit_qmux(
    p: PhysicalParams, noise_model: str = NOISE_NONE, rng: np.random.Generator | None = None
) -> PurifyOutcome:
    """Purification built into the photon: memories QM1, QM3 (Alice) and QM4 (Bob).

    Success requires Alice's diagonal-basis result on QM1 to match Bob's time
    bin (``+`` with ``S`` or ``-`` with ``L``).  Probabilities are conditioned
    on the photon being heralded.
    """
    if noise_model not in (NOISE_NONE, NOISE_DEPHASING):
        raise ConfigurationError(f"unknown noise model {noise_model!r}")
    qm1, qm3, qm4 = core.memory(1), core.memory(3), core.memory(4)
    pol, tb = core.polarization(), core.timebin(1)
    layout = core.SystemLayout([qm1, qm3, qm4, pol, tb])
    run = _Run(core.new_state(layout, "00000"))
    for q in (qm1, qm3, qm4):
        run.gate("H", q)
    run.op("nv_photon_interact", core.nv_photon_interact, qm1, pol)
    run.op("pol_to_timebin", core.pol_to_timebin, pol, tb)
    run.op("nv_photon_interact", core.nv_photon_interact, qm3, pol)
    run.gate("H", qm1)
    run.gate("H", qm3)
    if noise_model == NOISE_DEPHASING:
        lam = noise.pair_fidelity_qmux(p)
        run.dephase(qm1, lam)
        run.dephase(qm3, lam)
    run.diagonal_cnot(qm3, qm1)
    run.op("photonic_cnot", core.photonic_cnot, pol, tb)
    run.log("transmit", [pol, tb])
    run.op("nv_photon_interact", core.nv_photon_interact, qm4, pol)
    run.gate("H", qm4)

    measurements = [(qm1, DIAGONAL), (tb, COMPUTATIONAL), (pol, COMPUTATIONAL)]
    kept = []
    p_success = 0.0
    for recs, prob, post in _branches(run.state, measurements):
        if recs[0].outcome != recs[1].outcome:
            continue
        p_success += prob
        if recs[2].outcome:
            post = core.apply_gate(post, "Z", qm4)
        kept.append((prob, post))
    out = _mixture(core.SystemLayout([qm3, qm4]), kept)
    success = None
    if rng is not None:
        recs = _sample_path(run, measurements, rng)
        success = recs[0].outcome == recs[1].outcome
        if success and recs[2].outcome:
            run.gate("Z", qm4)
    return PurifyOutcome(
        p_success=p_success,
        out_state=out,
        out_fidelity=core.fidelity(out, bell_state("phi+", qm3, qm4)),
        success=success,
        trace=run.steps,
    )


def dephased_four_qubit_state(F: float) -> DensityMatrix:
    """Two diagonal-frame Bell pairs whose Alice qubits QM1, QM3 were dephased to ``F``."""
    if not 0.5 <= F <= 1.0:
        raise ConfigurationError(f"F {F!r} outside [1/2, 1]")
    rho = product_target(2).to_density()
    for q in (core.memory(1), core.memory(3)):
        rho = noise.dephase_with(rho, q, F)
    return rho


def run_four_qubit_dephased_purification(F: float, rng: np.random.Generator | None = None) -> PurifyOutcome:
    """Diagonal-frame bilateral CNOT (QM3->QM1, QM4->QM2) on a dephased pair of pairs.

    QM1/QM2 are measured in the diagonal basis and the pair QM3/QM4 is kept
    when the results agree.
    """
    if not 0.5 <= F <= 1.0:
        raise ConfigurationError(f"F {F!r} outside [1/2, 1]")
    run = _Run(dephased_four_qubit_state(F))
    run.log(f"dephase(F={F:.12g})", [core.memory(1), core.memory(3)])
    run.diagonal_cnot(core.memory(3), core.memory(1))
    run.diagonal_cnot(core.memory(4), core.memory(2))
    measurements = [(core.memory(1), DIAGONAL), (core.memory(2), DIAGONAL)]
    kept = []
    p_success = 0.0
    for recs, prob, post in _branches(run.state, measurements):
        if recs[0].outcome == recs[1].outcome:
            p_success += prob
            kept.append((prob, post))
    out = _mixture(core.SystemLayout([core.memory(3), core.memory(4)]), kept)
    success = None
    if rng is not None:
        recs = _sample_path(run, measurements, rng)
        success = recs[0].outcome == recs[1].outcome
    return PurifyOutcome(
        p_success, out, core.fidelity(out, bell_state("phi+", *pair_labels(2))), success, run.steps
    )


# --------------------------------------------------------------------------
# error correction


def ec_majority_correction(syndrome_1: int, syndrome_2: int) -> bool:
    """Flip the control pair only when both target pairs disagree with it."""
    return bool(syndrome_1 and syndrome_2)


def run_three_qubit_ec(pairs: Sequence[core.State], rng: np.random.Generator | None = None) -> PurifyOutcome:
    """Three-pair bit-flip code.

    Pairs are rotated into the Hadamard frame so phase errors act as bit
    flips, the control pair is copied onto both target pairs on each side,
    and Bob flips his control qubit when both parity checks fail.
    """
    if len(pairs) != 3:
        raise ConfigurationError(f"three-qubit EC needs exactly 3 pairs, got {len(pairs)}")
    if any(s.layout.n != 2 for s in pairs):
        raise ConfigurationError("every EC input must be a 2-qubit pair state")
    labels = [pair_labels(j) for j in (1, 2, 3)]
    joint = core.tensor(*(_relabel(s, lab) for s, lab in zip(pairs, labels)))
    run = _Run(joint)
    for q in joint.layout:
        run.gate("H", q)
    (a0, b0), (a1, b1), (a2, b2) = labels
    for c, t in ((a0, a1), (a0, a2), (b0, b1), (b0, b2)):
        run.gate("CNOT", c, t)
    measurements = [(q, COMPUTATIONAL) for q in (a1, b1, a2, b2)]
    parts = []
    for recs, prob, post in _branches(run.state, measurements):
        o = [r.outcome for r in recs]
        if ec_majority_correction(o[0] ^ o[1], o[2] ^ o[3]):
            post = core.apply_gate(post, "X", b0)
        parts.append((prob, post))
    out = _mixture(core.SystemLayout([a0, b0]), parts)
    out = core.apply_gate(core.apply_gate(out, "H", a0), "H", b0)
    success = None
    if rng is not None:
        _sample_path(run, measurements, rng)
        success = True
    out = _relabel(out, tuple(pairs[0].layout.labels))
    a, b = pairs[0].layout.labels
    return PurifyOutcome(1.0, out, core.fidelity(out, bell_state("phi+", a, b)), success, run.steps)


def majority_vote_fidelity(F: float) -> float:
    """Output fidelity of the three-pair code for independent flips of weight ``1-F``."""
    return F**3 + 3 * F**2 * (1 - F)

