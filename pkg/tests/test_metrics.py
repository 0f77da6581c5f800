import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kerrpair import metrics
from kerrpair.errors import ConfigurationError, UndefinedFidelityError
from kerrpair.fock import FockBasis, DensityMatrix, ket, number


def bell(phase, dim=3):
    basis = FockBasis((dim, dim))
    psi = (ket(basis, (0, 0)) + np.exp(1j * phase) * ket(basis, (1, 1))) / math.sqrt(2)
    return DensityMatrix.from_ket(basis, psi)


@given(st.floats(-math.pi, math.pi))
def test_bell_state_has_unit_fidelity(phase):
    m = metrics.bell_fidelity(bell(phase))
    assert m.fidelity == pytest.approx(1.0, abs=1e-12)
    assert np.exp(1j * m.optimal_phase) == pytest.approx(np.exp(1j * phase), abs=1e-9)


def test_vacuum_fidelity_half():
    basis = FockBasis((3, 3))
    m = metrics.bell_fidelity(DensityMatrix.vacuum(basis))
    assert m.fidelity == pytest.approx(0.5)
    assert metrics.blockade_ratio(DensityMatrix.vacuum(basis)) == math.inf


def test_bell_fidelity_needs_two_modes():
    with pytest.raises(ConfigurationError):
        metrics.bell_fidelity(DensityMatrix.vacuum(FockBasis((2, 2, 2))))


def test_tmsv_best_fidelity():
    assert metrics.spdc_best_fidelity() == pytest.approx(27 / 32, abs=1e-9)
    assert metrics.spdc_best_tanh() == pytest.approx(0.5, abs=1e-4)
    r = math.atanh(0.5)
    assert metrics.bell_fidelity(metrics.tmsv_state(r, 40)).fidelity == pytest.approx(27 / 32, abs=1e-9)
    rng = np.random.default_rng(0)
    for t in rng.uniform(0, 0.99, 20):
        assert metrics.tmsv_bell_fidelity(t) <= metrics.SPDC_BEST_FIDELITY + 1e-12


@given(st.floats(0.01, 2.0))
def test_tmsv_blockade_ratio_is_one(r):
    assert metrics.blockade_ratio(metrics.tmsv_state(r, 8)) == pytest.approx(1.0, abs=1e-9)


def test_blockade_ratio_without_double_pairs():
    assert metrics.blockade_ratio(bell(0.3)) == 0.0
    with pytest.raises(ConfigurationError):
        metrics.blockade_ratio(bell(0.3, dim=2))


@settings(max_examples=25)
@given(st.floats(0, 2 * math.pi), st.integers(0, 1000))
def test_phase_invariance(theta, seed):
    basis = FockBasis((3, 3))
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    rho = a @ a.conj().T
    rho = DensityMatrix(basis, rho / np.trace(rho))
    u = np.diag(np.exp(1j * theta * number(basis, 1).data.diagonal()))
    rotated = DensityMatrix(basis, u @ rho.data @ u.conj().T)
    assert metrics.bell_fidelity(rotated).fidelity == pytest.approx(metrics.bell_fidelity(rho).fidelity, abs=1e-12)


def dual_bell(dim=2):
    basis = FockBasis((dim,) * 4)
    psi = (ket(basis, (0, 0, 1, 1)) + ket(basis, (1, 1, 0, 0))) / math.sqrt(2)
    return DensityMatrix.from_ket(basis, psi)


def test_postselect_perfect_dual_rail():
    ps = metrics.postselect_dualrail(dual_bell())
    assert ps.probability == pytest.approx(1.0)
    assert ps.fidelity_post == pytest.approx(1.0)


@given(st.floats(0.0, 0.95))
def test_postselection_removes_vacuum(p):
    basis = FockBasis((2,) * 4)
    vac = DensityMatrix.vacuum(basis).data
    mix = DensityMatrix(basis, p * vac + (1 - p) * dual_bell().data)
    ps = metrics.postselect_dualrail(mix, keep_state=True)
    assert ps.probability == pytest.approx(1 - p)
    assert ps.fidelity_post == pytest.approx(1.0)
    assert ps.rho_post.trace() == pytest.approx(1.0)
    raw = (1 - p)
    assert ps.fidelity_post >= raw - 1e-12


def test_postselect_vacuum_undefined():
    with pytest.raises(UndefinedFidelityError):
        metrics.postselect_dualrail(DensityMatrix.vacuum(FockBasis((2,) * 4)))


def test_dual_rail_tmsv_tradeoff_matches_state():
    for t in (0.2, 0.4):
        r = math.atanh(t)
        ps = metrics.postselect_dualrail(metrics.dualrail_tmsv_state(r, 6))
        p, f = metrics.spdc_dualrail_tradeoff(t * t)
        assert ps.probability == pytest.approx(p, abs=1e-4)
        assert ps.fidelity_post == pytest.approx(f, abs=1e-4)


def test_spdc_dualrail_curve_inverse():
    s = np.linspace(0.01, 0.95, 30)
    p, f = metrics.spdc_dualrail_tradeoff(s)
    assert np.allclose(metrics.spdc_dualrail_fidelity_at(p), f)
    assert not metrics.beats_spdc_dualrail(float(p[5]), float(f[5]) - 1e-6)
    assert metrics.beats_spdc_dualrail(float(p[5]), float(f[5]) + 1e-6)
