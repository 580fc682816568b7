"""Dense pure-state and density-matrix engine over labelled qubits.

Qubits are addressed by :class:`QubitLabel` rather than position.  The first
label of a :class:`SystemLayout` is the most significant bit of the basis
index, so ``new_state(layout, "01")`` puts the unit amplitude at index 1.

Basis conventions (``|0>``, ``|1>``):

==============  =======  =======
label kind      ``0``    ``1``
==============  =======  =======
memory          ``g``    ``e``
polarization    ``D``    ``A``
time bin        ``S``    ``L``
==============  =======  =======
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import ConfigurationError, InvariantViolation, LayoutError, PreconditionError

DEFAULT_MAX_QUBITS = 12

# structural invariants vs. algebraic identities
STRUCTURAL_TOL = 1e-10
POSITIVITY_TOL = 1e-9

MEMORY = "memory"
POLARIZATION = "polarization"
TIMEBIN = "timebin"

_BASIS_CHARS = {MEMORY: "ge", POLARIZATION: "DA", TIMEBIN: "SL"}
_PREFIX = {MEMORY: "QM", POLARIZATION: "Pol", TIMEBIN: "TB"}

COMPUTATIONAL = "computational"
DIAGONAL = "diagonal"


@dataclass(frozen=True, order=True)
class QubitLabel:
    kind: str
    index: int = 0

    def __post_init__(self):
        if self.kind not in _BASIS_CHARS:
            raise LayoutError(f"unknown qubit kind {self.kind!r}")
        if self.index < 0:
            raise LayoutError(f"negative qubit index {self.index}")

    def __str__(self):
        if self.kind == POLARIZATION:
            return "Pol"
        return f"{_PREFIX[self.kind]}{self.index}"

    @property
    def basis_chars(self) -> str:
        return _BASIS_CHARS[self.kind]

    @property
    def is_photonic(self) -> bool:
        return self.kind != MEMORY

    @classmethod
    def parse(cls, text: str) -> "QubitLabel":
        text = text.strip()
        if text == "Pol":
            return polarization()
        for kind, prefix in ((MEMORY, "QM"), (TIMEBIN, "TB")):
            if text.startswith(prefix) and text[len(prefix):].isdigit():
                return cls(kind, int(text[len(prefix):]))
        raise LayoutError(f"cannot parse qubit label {text!r}")


def memory(index: int) -> QubitLabel:
    return QubitLabel(MEMORY, index)


def polarization() -> QubitLabel:
    return QubitLabel(POLARIZATION, 0)


def timebin(index: int) -> QubitLabel:
    return QubitLabel(TIMEBIN, index)


@dataclass(frozen=True)
class SystemLayout:
    """Ordered, duplicate-free list of qubit labels."""

    labels: tuple[QubitLabel, ...]
    max_qubits: int = field(default=DEFAULT_MAX_QUBITS, compare=False)

    def __init__(self, labels: Iterable[QubitLabel], max_qubits: int = DEFAULT_MAX_QUBITS):
        labels = tuple(labels)
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate labels in layout {[str(q) for q in labels]}")
        if len(labels) > max_qubits:
            raise ConfigurationError(
                f"layout has {len(labels)} qubits, above the cap of {max_qubits}"
            )
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "max_qubits", max_qubits)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return 2 ** len(self.labels)

    def __len__(self):
        return len(self.labels)

    def __iter__(self) -> Iterator[QubitLabel]:
        return iter(self.labels)

    def __contains__(self, label):
        return label in self.labels

    def __str__(self):
        return "[" + ", ".join(str(q) for q in self.labels) + "]"

    def index(self, label: QubitLabel) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"qubit {label} not in layout {self}") from None

    def positions(self, labels: Sequence[QubitLabel]) -> list[int]:
        pos = [self.index(q) for q in labels]
        if len(set(pos)) != len(pos):
            raise LayoutError(f"duplicate targets {[str(q) for q in labels]}")
        return pos

    def without(self, labels: Iterable[QubitLabel]) -> "SystemLayout":
        drop = set(labels)
        return SystemLayout([q for q in self.labels if q not in drop], self.max_qubits)

    def basis_label(self, index: int) -> str:
        bits = format(index, f"0{self.n}b") if self.n else ""
        return "".join(q.basis_chars[int(b)] for q, b in zip(self.labels, bits))


def _as_layout(layout) -> SystemLayout:
    return layout if isinstance(layout, SystemLayout) else SystemLayout(layout)


@dataclass(frozen=True, eq=False)
class PureState:
    layout: SystemLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.layout.dim:
            raise ConfigurationError(
                f"amplitude vector of length {amps.shape[0]} for {self.layout.n} qubits"
            )
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        nrm = self.norm
        if nrm == 0:
            raise PreconditionError("cannot normalize the zero vector")
        return PureState(self.layout, self.amplitudes / nrm)

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    layout: SystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        d = self.layout.dim
        if mat.shape != (d, d):
            raise ConfigurationError(f"density matrix of shape {mat.shape} for dimension {d}")
        object.__setattr__(self, "matrix", mat)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def to_density(self) -> "DensityMatrix":
        return self

    @classmethod
    def maximally_mixed(cls, layout) -> "DensityMatrix":
        layout = _as_layout(layout)
        return cls(layout, np.eye(layout.dim) / layout.dim)


State = Union[PureState, DensityMatrix]


@dataclass(frozen=True)
class MeasurementRecord:
    qubit: QubitLabel
    basis: str
    outcome: int
    probability: float

    @property
    def symbol(self) -> str:
        if self.basis == DIAGONAL:
            return "+-"[self.outcome]
        return self.qubit.basis_chars[self.outcome]


# --------------------------------------------------------------------------
# invariant checking


class ValidationLog:
    """Counts invariant checks performed inside :func:`validating`."""

    def __init__(self):
        self.checks = 0


_VALIDATION: contextvars.ContextVar[ValidationLog | None] = contextvars.ContextVar(
    "qmux_validation", default=None
)


@contextlib.contextmanager
def validating():
    """Check every state produced by an engine operation within the block.

    Raises :class:`InvariantViolation` at the first offending operation.
    """
    log = ValidationLog()
    token = _VALIDATION.set(log)
    try:
        yield log
    finally:
        _VALIDATION.reset(token)


def check_state(state: State, tol: float = STRUCTURAL_TOL, pos_tol: float = POSITIVITY_TOL) -> None:
    if isinstance(state, PureState):
        if abs(state.norm - 1.0) > tol:
            raise InvariantViolation(f"state norm {state.norm!r} deviates from 1")
        return
    m = state.matrix
    herm = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if herm > tol:
        raise InvariantViolation(f"density matrix not Hermitian (max deviation {herm:.3e})")
    tr = np.trace(m)
    if abs(tr - 1.0) > tol:
        raise InvariantViolation(f"density matrix trace {tr!r} deviates from 1")
    lo = float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0])
    if lo < -pos_tol:
        raise InvariantViolation(f"density matrix has negative eigenvalue {lo:.3e}")


def _emit(state):
    log = _VALIDATION.get()
    if log is not None:
        check_state(state)
        log.checks += 1
    return state


# --------------------------------------------------------------------------
# construction


def new_state(layout, basis_string: str) -> PureState:
    """Computational basis product state, e.g. ``new_state([QM1, Pol], "01")``."""
    layout = _as_layout(layout)
    if len(basis_string) != layout.n:
        raise ConfigurationError(
            f"basis string {basis_string!r} has {len(basis_string)} entries for {layout.n} qubits"
        )
    if set(basis_string) - {"0", "1"}:
        raise ConfigurationError(f"basis string {basis_string!r} must contain only 0 and 1")
    amps = np.zeros(layout.dim, dtype=complex)
    amps[int(basis_string, 2) if basis_string else 0] = 1.0
    return PureState(layout, amps)


def tensor(*states: State) -> State:
    """Tensor product; the result's layout is the concatenation of the inputs'."""
    if not states:
        raise ConfigurationError("tensor() needs at least one state")
    labels = [q for s in states for q in s.layout]
    cap = max(s.layout.max_qubits for s in states)
    layout = SystemLayout(labels, max(cap, DEFAULT_MAX_QUBITS))
    if all(isinstance(s, PureState) for s in states):
        amps = states[0].amplitudes
        for s in states[1:]:
            amps = np.kron(amps, s.amplitudes)
        return PureState(layout, amps)
    mat = states[0].to_density().matrix
    for s in states[1:]:
        mat = np.kron(mat, s.to_density().matrix)
    return DensityMatrix(layout, mat)


def reorder(state: State, labels: Sequence[QubitLabel]) -> State:
    """Permute tensor factors so the layout order becomes ``labels``."""
    layout = state.layout
    if sorted(labels) != sorted(layout.labels) or len(labels) != layout.n:
        raise LayoutError(f"{[str(q) for q in labels]} is not a permutation of {layout}")
    perm = [layout.index(q) for q in labels]
    new_layout = SystemLayout(labels, layout.max_qubits)
    n = layout.n
    if isinstance(state, PureState):
        t = state.amplitudes.reshape((2,) * n).transpose(perm)
        return PureState(new_layout, t.reshape(-1))
    t = state.matrix.reshape((2,) * (2 * n)).transpose(perm + [n + p for p in perm])
    return DensityMatrix(new_layout, t.reshape(layout.dim, layout.dim))


# --------------------------------------------------------------------------
# operators

_S2 = 1 / np.sqrt(2)
GATES = {
    "I": np.eye(2, dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _S2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
    "SWAP": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    ),
}
GATES["CX"] = GATES["CNOT"]


def rx(theta: float) -> np.ndarray:
    return np.array(
        [[np.cos(theta / 2), -1j * np.sin(theta / 2)], [-1j * np.sin(theta / 2), np.cos(theta / 2)]]
    )


def _contract(t: np.ndarray, op: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    k = len(axes)
    opt = op.reshape((2,) * (2 * k))
    out = np.tensordot(opt, t, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def _apply_left_right(state: State, left: np.ndarray, right: np.ndarray | None, pos: list[int]):
    """Return ``left @ state`` (pure) or ``left @ rho @ right^dagger`` (mixed), unnormalized."""
    n = state.layout.n
    if isinstance(state, PureState):
        t = _contract(state.amplitudes.reshape((2,) * n), left, pos)
        return PureState(state.layout, t.reshape(-1))
    right = left if right is None else right
    t = state.matrix.reshape((2,) * (2 * n))
    t = _contract(t, left, pos)
    t = _contract(t, right.conj(), [n + p for p in pos])
    d = state.layout.dim
    return DensityMatrix(state.layout, t.reshape(d, d))


def apply_unitary(state: State, unitary: np.ndarray, targets: Sequence[QubitLabel]) -> State:
    unitary = np.asarray(unitary, dtype=complex)
    pos = state.layout.positions(targets)
    if unitary.shape != (2 ** len(pos), 2 ** len(pos)):
        raise ConfigurationError(f"operator of shape {unitary.shape} on {len(pos)} qubits")
    return _emit(_apply_left_right(state, unitary, None, pos))


def apply_gate(state: State, gate: str, *targets: QubitLabel) -> State:
    """Apply a named gate.  Two-qubit gates take ``(control, target)`` order."""
    try:
        mat = GATES[gate.upper()]
    except KeyError:
        raise ConfigurationError(f"unknown gate {gate!r}") from None
    if mat.shape[0] != 2 ** len(targets):
        raise ConfigurationError(f"gate {gate} acts on {mat.shape[0].bit_length() - 1} qubits")
    return apply_unitary(state, mat, targets)


def apply_kraus(state: State, kraus_ops: Sequence[np.ndarray], targets: Sequence[QubitLabel]) -> DensityMatrix:
    rho = state.to_density()
    pos = rho.layout.positions(targets)
    out = np.zeros_like(rho.matrix)
    for k in kraus_ops:
        out += _apply_left_right(rho, np.asarray(k, dtype=complex), None, pos).matrix
    return _emit(DensityMatrix(rho.layout, out))


def _require_kind(label: QubitLabel, kind: str, role: str):
    if label.kind != kind:
        raise LayoutError(f"{role} must be a {kind} qubit, got {label}")


def nv_photon_interact(state: State, mem: QubitLabel, pol: QubitLabel) -> State:
    """Cavity reflection: flip D<->A when the memory is in ``|e>``."""
    _require_kind(mem, MEMORY, "memory")
    _require_kind(pol, POLARIZATION, "pol")
    return apply_gate(state, "CNOT", mem, pol)


def pol_to_timebin(state: State, pol: QubitLabel, tb: QubitLabel) -> State:
    """Move the polarization qubit into a fresh time-bin qubit, resetting pol to ``D``."""
    _require_kind(pol, POLARIZATION, "pol")
    _require_kind(tb, TIMEBIN, "tb")
    p_short, _ = outcome_probabilities(state, tb)
    if abs(p_short - 1.0) > STRUCTURAL_TOL:
        raise PreconditionError(f"time-bin qubit {tb} is not in |S> (population {p_short:.3g})")
    state = apply_gate(state, "CNOT", pol, tb)
    return apply_gate(state, "CNOT", tb, pol)


def swap_dofs(state: State, pol: QubitLabel, tb: QubitLabel) -> State:
    _require_kind(pol, POLARIZATION, "pol")
    _require_kind(tb, TIMEBIN, "tb")
    return apply_gate(state, "SWAP", pol, tb)


def photonic_cnot(state: State, pol: QubitLabel, tb: QubitLabel) -> State:
    _require_kind(pol, POLARIZATION, "pol")
    _require_kind(tb, TIMEBIN, "tb")
    return apply_gate(state, "CNOT", pol, tb)


# --------------------------------------------------------------------------
# measurement

_PROJECTORS = {
    COMPUTATIONAL: (np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex)),
    DIAGONAL: (
        np.array([[1, 1], [1, 1]], dtype=complex) / 2,
        np.array([[1, -1], [-1, 1]], dtype=complex) / 2,
    ),
}
_BRAS = {
    COMPUTATIONAL: (np.array([[1, 0]], dtype=complex), np.array([[0, 1]], dtype=complex)),
    DIAGONAL: (np.array([[1, 1]], dtype=complex) * _S2, np.array([[1, -1]], dtype=complex) * _S2),
}


def _projectors(basis: str):
    try:
        return _PROJECTORS[basis]
    except KeyError:
        raise ConfigurationError(f"unknown measurement basis {basis!r}") from None


def outcome_probabilities(state: State, qubit: QubitLabel, basis: str = COMPUTATIONAL) -> tuple[float, float]:
    pos = state.layout.positions([qubit])
    probs = []
    for proj in _projectors(basis):
        branch = _apply_left_right(state, proj, None, pos)
        if isinstance(branch, PureState):
            probs.append(float(np.vdot(branch.amplitudes, branch.amplitudes).real))
        else:
            probs.append(branch.trace)
    return probs[0], probs[1]


def _drop_qubit(state: State, qubit: QubitLabel, basis: str, outcome: int) -> State:
    pos = state.layout.positions([qubit])
    new_layout = state.layout.without([qubit])
    if isinstance(state, PureState):
        bra = _BRAS[basis][outcome].reshape(2)
        t = np.tensordot(bra, state.amplitudes.reshape((2,) * state.layout.n), axes=([0], pos))
        return PureState(new_layout, t.reshape(-1))
    return partial_trace(state, list(new_layout))


def measure(
    state: State,
    qubit: QubitLabel,
    basis: str = COMPUTATIONAL,
    rng: np.random.Generator | None = None,
    outcome: int | None = None,
    remove: bool = False,
) -> tuple[MeasurementRecord, State]:
    """Projective single-qubit measurement.

    Exactly one of ``rng`` and ``outcome`` selects the branch.  The post-state
    is renormalized; with ``remove=True`` the measured qubit is dropped from
    the layout.
    """
    probs = outcome_probabilities(state, qubit, basis)
    if outcome is None:
        if rng is None:
            raise ConfigurationError("measure() needs an rng or a forced outcome")
        outcome = int(rng.random() >= probs[0])
    elif outcome not in (0, 1):
        raise ConfigurationError(f"outcome must be 0 or 1, got {outcome!r}")
    prob = probs[outcome]
    if prob <= 0.0:
        raise PreconditionError(f"forced outcome {outcome} on {qubit} has zero probability")
    pos = state.layout.positions([qubit])
    branch = _apply_left_right(state, _projectors(basis)[outcome], None, pos)
    if isinstance(branch, PureState):
        post: State = PureState(branch.layout, branch.amplitudes / np.sqrt(prob))
    else:
        post = DensityMatrix(branch.layout, branch.matrix / prob)
    if remove:
        post = _drop_qubit(post, qubit, basis, outcome)
    record = MeasurementRecord(qubit, basis, outcome, min(max(prob, 0.0), 1.0))
    return record, _emit(post)


# --------------------------------------------------------------------------
# reductions and figures of merit


def partial_trace(rho: State, keep: Sequence[QubitLabel]) -> DensityMatrix:
    """Reduced state over ``keep`` (in the order given)."""
    rho = rho.to_density()
    keep = list(keep)
    if not keep:
        raise ConfigurationError("partial_trace needs at least one qubit to keep")
    layout = rho.layout
    kpos = layout.positions(keep)
    n = layout.n
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for i in range(n):
        if i not in kpos:
            col[i] = row[i]
    out = "".join(row[p] for p in kpos) + "".join(col[p] for p in kpos)
    t = np.einsum("".join(row) + "".join(col) + "->" + out, rho.matrix.reshape((2,) * (2 * n)))
    d = 2 ** len(kpos)
    return DensityMatrix(SystemLayout(keep, layout.max_qubits), t.reshape(d, d))


def fidelity(rho: State, reference: PureState) -> float:
    """Overlap ``<ref| rho |ref>`` (layouts must match exactly)."""
    if rho.layout.labels != reference.layout.labels:
        raise LayoutError(f"layout mismatch: {rho.layout} vs {reference.layout}")
    ref = reference.amplitudes / np.linalg.norm(reference.amplitudes)
    if isinstance(rho, PureState):
        return float(abs(np.vdot(ref, rho.amplitudes)) ** 2)
    return float(np.vdot(ref, rho.matrix @ ref).real)


def same_ray(a: PureState, b: PureState, atol: float = 1e-12) -> bool:
    """Equality up to global phase and normalization."""
    if a.layout.labels != b.layout.labels:
        return False
    x = a.amplitudes / np.linalg.norm(a.amplitudes)
    y = b.amplitudes / np.linalg.norm(b.amplitudes)
    return abs(abs(np.vdot(x, y)) - 1.0) <= atol


def ket(layout, terms: dict[str, complex] | Iterable[str]) -> PureState:
    """Normalized superposition of basis strings, e.g. ``ket(lay, ["00", "11"])``."""
    layout = _as_layout(layout)
    if not isinstance(terms, dict):
        terms = {t: 1.0 for t in terms}
    amps = np.zeros(layout.dim, dtype=complex)
    for bits, amp in terms.items():
        amps += amp * new_state(layout, bits).amplitudes
    return PureState(layout, amps).normalized()


def dump(state: State, digits: int = 12) -> str:
    """Text dump: index, basis label, real and imaginary parts of each nonzero entry."""
    fmt = f"{{:.{digits}g}}"
    lines = []
    if isinstance(state, PureState):
        lines.append(f"# pure state on {state.layout}")
        for i, a in enumerate(state.amplitudes):
            if abs(a) > 0:
                lines.append(f"{i} {state.layout.basis_label(i)} {fmt.format(a.real)} {fmt.format(a.imag)}")
    else:
        lines.append(f"# density matrix on {state.layout}")
        rows, cols = np.nonzero(state.matrix)
        for i, j in zip(rows, cols):
            a = state.matrix[i, j]
            lines.append(
                f"{i},{j} {state.layout.basis_label(i)},{state.layout.basis_label(j)} "
                f"{fmt.format(a.real)} {fmt.format(a.imag)}"
            )
    return "\n".join(lines) + "\n"
