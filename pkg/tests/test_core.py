import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qmux import core
from qmux.core import DIAGONAL, memory, polarization, timebin
from qmux.errors import ConfigurationError, InvariantViolation, LayoutError, PreconditionError
from qmux.protocols import bell_state, phase_damped_pair

QM1, QM2, QM3 = memory(1), memory(2), memory(3)
POL, TB1 = polarization(), timebin(1)
SQ = 1 / np.sqrt(2)


def amps(state):
    return state.amplitudes


def test_labels_parse_and_print():
    for text in ("QM1", "QM12", "Pol", "TB3"):
        assert str(core.QubitLabel.parse(text)) == text
    with pytest.raises(LayoutError):
        core.QubitLabel.parse("XY1")


def test_layout_rejects_duplicates_and_cap():
    with pytest.raises(LayoutError):
        core.SystemLayout([QM1, QM1])
    with pytest.raises(ConfigurationError):
        core.SystemLayout([memory(i) for i in range(1, 14)])
    assert core.SystemLayout([memory(i) for i in range(1, 14)], max_qubits=13).dim == 2**13


def test_basis_labels():
    lay = core.SystemLayout([QM1, POL, TB1])
    assert lay.basis_label(0) == "gDS"
    assert lay.basis_label(7) == "eAL"


def test_new_state_examples():
    np.testing.assert_array_equal(amps(core.new_state([QM1], "0")), [1, 0])
    s = core.new_state([QM1, POL], "01")
    assert s.layout.basis_label(int(np.argmax(abs(amps(s))))) == "gA"
    s = core.new_state([QM1, POL, TB1], "000")
    assert amps(s)[0] == 1 and np.count_nonzero(amps(s)) == 1
    with pytest.raises(ConfigurationError):
        core.new_state([QM1, POL], "0")


def test_hadamard_and_pauli_x():
    plus = core.apply_gate(core.new_state([QM1], "0"), "H", QM1)
    np.testing.assert_allclose(amps(plus), [SQ, SQ])
    phi = bell_state("phi+", QM1, QM2)
    out = core.apply_gate(phi, "X", QM2)
    assert core.same_ray(out, bell_state("psi+", QM1, QM2))


def test_gate_errors():
    s = core.new_state([QM1, QM2], "00")
    with pytest.raises(LayoutError):
        core.apply_gate(s, "CNOT", QM1, QM1)
    with pytest.raises(LayoutError):
        core.apply_gate(s, "H", QM3)
    with pytest.raises(ConfigurationError):
        core.apply_gate(s, "T", QM1)


def test_gate_on_density_matches_pure():
    s = core.ket([QM1, QM2, QM3], {"000": 1, "011": 1j, "101": -0.5})
    for name, targets in (("H", [QM2]), ("CNOT", [QM3, QM1]), ("SWAP", [QM1, QM3])):
        pure = core.apply_gate(s, name, *targets).to_density().matrix
        mixed = core.apply_gate(s.to_density(), name, *targets).matrix
        np.testing.assert_allclose(pure, mixed, atol=1e-14)


def test_cnot_matches_kron_oracle():
    rng = np.random.default_rng(3)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    s = core.PureState(core.SystemLayout([QM1, QM2, QM3]), v / np.linalg.norm(v))
    out = core.apply_gate(s, "CNOT", QM3, QM1)
    ref = oracles.cnot_matrix(3, 2, 0) @ amps(s)
    np.testing.assert_allclose(amps(out), ref, atol=1e-14)


def test_nv_photon_interact_examples():
    s = core.ket([QM1, POL], ["00", "10"])
    out = core.nv_photon_interact(s, QM1, POL)
    assert core.same_ray(out, core.ket([QM1, POL], ["00", "11"]))
    gd = core.new_state([QM1, POL], "00")
    assert core.same_ray(core.nv_photon_interact(gd, QM1, POL), gd)
    ea = core.new_state([QM1, POL], "11")
    assert core.same_ray(core.nv_photon_interact(ea, QM1, POL), core.new_state([QM1, POL], "10"))
    with pytest.raises(LayoutError):
        core.nv_photon_interact(core.new_state([QM1, QM2], "00"), QM1, QM2)


def test_pol_to_timebin_examples():
    lay = [QM1, POL, TB1]
    s = core.ket(lay, ["000", "110"])
    out = core.pol_to_timebin(s, POL, TB1)
    assert core.same_ray(out, core.ket(lay, ["000", "101"]))
    assert core.same_ray(core.pol_to_timebin(core.new_state(lay, "000"), POL, TB1), core.new_state(lay, "000"))
    assert core.same_ray(core.pol_to_timebin(core.new_state(lay, "110"), POL, TB1), core.new_state(lay, "101"))


def test_pol_to_timebin_requires_short_bin():
    s = core.new_state([QM1, POL, TB1], "001")
    with pytest.raises(PreconditionError):
        core.pol_to_timebin(s, POL, TB1)


def test_swap_dofs_and_photonic_cnot():
    lay = [POL, TB1]
    assert core.same_ray(core.swap_dofs(core.new_state(lay, "10"), POL, TB1), core.new_state(lay, "01"))
    assert core.same_ray(core.swap_dofs(core.new_state(lay, "00"), POL, TB1), core.new_state(lay, "00"))
    assert core.same_ray(core.photonic_cnot(core.new_state(lay, "10"), POL, TB1), core.new_state(lay, "11"))
    assert core.same_ray(core.photonic_cnot(core.new_state(lay, "00"), POL, TB1), core.new_state(lay, "00"))
    assert core.same_ray(core.photonic_cnot(core.new_state(lay, "11"), POL, TB1), core.new_state(lay, "10"))


def test_measure_examples():
    plus = core.apply_gate(core.new_state([QM1], "0"), "H", QM1)
    rec, _ = core.measure(plus, QM1, DIAGONAL, outcome=0)
    assert rec.symbol == "+" and rec.probability == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(PreconditionError):
        core.measure(plus, QM1, DIAGONAL, outcome=1)

    s = core.ket([QM1, POL, TB1], ["000", "101"])
    rec, post = core.measure(s, TB1, outcome=0, remove=True)
    assert rec.symbol == "S" and rec.probability == pytest.approx(0.5)
    assert core.same_ray(post, core.new_state([QM1, POL], "00"))


def test_measure_sampling_is_seeded():
    s = core.ket([QM1], ["0", "1"])
    a = [core.measure(s, QM1, rng=np.random.default_rng(7))[0].outcome for _ in range(3)]
    b = [core.measure(s, QM1, rng=np.random.default_rng(7))[0].outcome for _ in range(3)]
    assert a == b


def test_partial_trace_examples():
    rho = bell_state("phi+", QM1, QM2).to_density()
    np.testing.assert_allclose(core.partial_trace(rho, [QM1]).matrix, np.eye(2) / 2, atol=1e-15)
    with pytest.raises(ConfigurationError):
        core.partial_trace(rho, [])


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_partial_trace_of_product(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    ra = a @ a.conj().T
    rb = b @ b.conj().T
    rho = core.DensityMatrix(core.SystemLayout([QM1, QM2, QM3]), np.kron(ra, rb))
    out = core.partial_trace(rho, [QM1]).matrix
    np.testing.assert_allclose(out, ra * np.trace(rb), atol=1e-10)
    np.testing.assert_allclose(
        core.partial_trace(rho, [QM2, QM3]).matrix, oracles.ptrace_keep(rho.matrix, 3, [1, 2]), atol=1e-10
    )


def test_fidelity_examples():
    phi = bell_state("phi+", QM1, QM2)
    assert core.fidelity(phi.to_density(), phi) == pytest.approx(1.0, abs=1e-15)
    mixed = core.DensityMatrix.maximally_mixed([QM1, QM2])
    assert core.fidelity(mixed, phi) == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(LayoutError):
        core.fidelity(mixed, bell_state("phi+", QM2, QM1))


@given(st.floats(min_value=0.5, max_value=1.0))
def test_fidelity_of_phase_damped_pair(F):
    assert core.fidelity(phase_damped_pair(F), bell_state("phi+", QM1, QM2)) == pytest.approx(F, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=0, max_value=2**32 - 1),
    st.lists(st.sampled_from(["H", "X", "Y", "Z", "CNOT", "SWAP"]), min_size=1, max_size=12),
)
def test_random_circuits_keep_invariants(seed, gates):
    rng = np.random.default_rng(seed)
    labels = [QM1, QM2, QM3]
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    pure = core.PureState(core.SystemLayout(labels), v / np.linalg.norm(v))
    rho = pure.to_density()
    with core.validating() as log:
        for g in gates:
            n = 2 if g in ("CNOT", "SWAP") else 1
            targets = [labels[i] for i in rng.choice(3, size=n, replace=False)]
            pure = core.apply_gate(pure, g, *targets)
            rho = core.apply_gate(rho, g, *targets)
        rec, post = core.measure(rho, QM1, rng=rng)
    assert log.checks >= 2 * len(gates) + 1
    assert 0.0 <= rec.probability <= 1.0 and rec.outcome in (0, 1)
    np.testing.assert_allclose(pure.to_density().matrix, rho.matrix, atol=1e-12)
    core.check_state(post)


def test_validation_detects_bad_operator():
    s = core.new_state([QM1], "0")
    with core.validating():
        with pytest.raises(InvariantViolation):
            core.apply_unitary(s, 2 * np.eye(2), [QM1])
    # outside the block nothing is checked
    core.apply_unitary(s, 2 * np.eye(2), [QM1])


def test_dump_lists_nonzero_entries():
    text = core.dump(bell_state("phi+", QM1, QM2))
    assert "gg" in text and "ee" in text and "ge" not in text
