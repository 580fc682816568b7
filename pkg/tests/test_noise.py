import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmux import core, noise, protocols
from qmux.errors import ConfigurationError, LayoutError, PreconditionError
from qmux.noise import PhysicalParams

P = PhysicalParams()
QM1, QM2 = core.memory(1), core.memory(2)
PHI = protocols.bell_state("phi+", QM1, QM2)


def test_defaults():
    assert (P.L_att, P.c, P.T2, P.eta_OS, P.P_ES) == (25.0, 2e5, 1e-3, 0.99, 0.9)


@pytest.mark.parametrize(
    "field, value", [("L", -1.0), ("L_att", 0.0), ("c", -2.0), ("T2", 0.0), ("eta_OS", 1.5), ("P_ES", 0.0)]
)
def test_invalid_params_name_the_field(field, value):
    with pytest.raises(ConfigurationError, match=field):
        PhysicalParams(**{field: value})


def test_transmission_prob():
    assert noise.transmission_prob(P.at(0)) == 1.0
    assert noise.transmission_prob(P.at(25)) == pytest.approx(0.367879, abs=1e-6)
    assert noise.transmission_prob(P.at(50)) == pytest.approx(0.135335, abs=1e-6)


def test_dephase_examples():
    rho = PHI.to_density()
    same = noise.dephase(rho, QM1, 0.0, P)
    np.testing.assert_allclose(same.matrix, rho.matrix, atol=1e-15)
    gone = noise.dephase(rho, QM1, 1.0, P)
    assert core.fidelity(gone, PHI) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(PreconditionError):
        noise.dephase(rho, QM1, -1e-9, P)


@given(st.floats(min_value=0.0, max_value=200.0))
def test_pair_fidelity_matches_channel(L):
    p = P.at(L)
    rho = noise.dephase(PHI.to_density(), QM1, 3 * L / p.c, p)
    assert core.fidelity(rho, PHI) == pytest.approx(noise.pair_fidelity_qmux(p), abs=1e-12)


def test_pair_fidelity_values():
    assert noise.pair_fidelity_qmux(P.at(0)) == 1.0
    assert noise.pair_fidelity_qmux(P.at(50)) == pytest.approx((1 + math.exp(-0.75)) / 2, abs=1e-15)
    assert noise.pair_fidelity_qmux(P.at(50)) == pytest.approx(0.736183, abs=1e-6)
    assert noise.pair_fidelity_trad_second(P.at(0)) == 1.0
    exponent = 0.25 + 0.5 / math.exp(-2)
    assert exponent == pytest.approx(3.944528, abs=1e-6)
    assert noise.pair_fidelity_trad_second(P.at(50)) == pytest.approx((1 + math.exp(-exponent)) / 2, abs=1e-15)
    assert noise.pair_fidelity_trad_second(P.at(50)) == pytest.approx(0.509680, abs=1e-6)


@given(st.floats(min_value=1e-6, max_value=300.0))
def test_trad_second_pair_waits_longer(L):
    p = P.at(L)
    assert noise.pair_fidelity_trad_second(p) <= noise.pair_fidelity_qmux(p)


@given(st.floats(min_value=0.5, max_value=1.0), st.floats(min_value=0.0, max_value=1.0))
def test_dephased_fidelity_matches_channel(F, lam):
    rho = noise.dephase_with(protocols.phase_damped_pair(F), QM1, lam)
    factor = 2 * lam - 1
    assert core.fidelity(rho, PHI) == pytest.approx(noise.dephased_fidelity(F, factor), abs=1e-12)


def test_switches():
    assert noise.switch_adjusted_p0(0.3, 2, 0.99) == 0.3
    assert noise.switch_adjusted_p0(1.0, 4, 0.99) == pytest.approx(0.970299, abs=1e-12)
    for n in (2, 3, 4, 8, 16):
        assert noise.switch_adjusted_p0(0.2, n, 1.0) == 0.2
    assert noise.switch_adjusted_p0(1.0, 4, 0.5, n_switches=1) == 0.5
    with pytest.raises(ConfigurationError):
        noise.switch_count(1)
    with pytest.raises(ConfigurationError):
        noise.switch_adjusted_p0(1.0, 4, 0.5, n_switches=-1)


def _loss_input():
    """Alice's half of the two-pair entangling run, before the photon travels."""
    lay = protocols.qmux_layout(2)
    state = core.new_state(lay, "000000")
    for q in (core.memory(1), core.memory(2), core.memory(3), core.memory(4)):
        state = core.apply_gate(state, "H", q)
    state = core.nv_photon_interact(state, core.memory(1), core.polarization())
    state = core.pol_to_timebin(state, core.polarization(), core.timebin(1))
    return core.nv_photon_interact(state, core.memory(3), core.polarization())


def test_loss_mixture_limits():
    state = _loss_input()
    lossless = noise.apply_loss_mixture(state, P, p0=1.0)
    assert lossless.trace == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(lossless.heralded.matrix, state.to_density().matrix, atol=1e-15)

    lost = noise.apply_loss_mixture(state, P, p0=0.0).memory_state()
    lost = core.partial_trace(lost, [core.memory(i) for i in (1, 3, 2, 4)])
    plus = np.full(2, 1 / np.sqrt(2))
    rho24 = np.outer(np.kron(plus, plus), np.kron(plus, plus))
    np.testing.assert_allclose(lost.matrix, np.kron(np.eye(4) / 4, rho24), atol=1e-14)

    mix = noise.apply_loss_mixture(state, P.at(25))
    assert mix.p_herald == pytest.approx(math.exp(-1), abs=1e-12)
    assert mix.trace == pytest.approx(1.0, abs=1e-12)
    assert mix.memory_state().trace == pytest.approx(1.0, abs=1e-12)


def test_loss_mixture_needs_photon():
    with pytest.raises(LayoutError):
        noise.apply_loss_mixture(PHI, P)
