import numpy as np
import pytest

from kerrpair.analytics import analytic_temporal_modes
from kerrpair.cascade import cascade_window, extract_modes
from kerrpair.dynamics import ModelParams, preset, propagate, system_generator
from kerrpair.errors import ConfigurationError, DecompositionError
from kerrpair.fock import DensityMatrix, number
from kerrpair.temporal_modes import (CorrelationKernel, TimeGrid, decompose_modes, dominant_fraction,
                                     g1_correlation, read_modes_csv, reconstruct_kernel, write_modes_csv)


@pytest.fixture(scope="module")
def kernels():
    p = ModelParams.from_mhz(10, 100, 2, 0)
    grid = TimeGrid.pulsed(p.tau, cascade_window(p), 60, 180)
    return p, grid, extract_modes(p, preset("single3"), grid)


def test_grid_construction():
    g = TimeGrid.pulsed(0.2, 1.0, 10, 20)
    assert len(g) == 31
    assert np.any(np.isclose(g.times, 0.2))
    assert g.weights.sum() == pytest.approx(1.0)
    assert TimeGrid.uniform(2.0, 5).weights.sum() == pytest.approx(2.0)
    with pytest.raises(ConfigurationError):
        TimeGrid.from_times([0.0, 0.0, 1.0])
    with pytest.raises(ConfigurationError):
        TimeGrid.pulsed(2.0, 1.0)


def test_kernel_hermitian_and_reconstructed(kernels):
    _, _, found = kernels
    for kernel, modes in found.values():
        assert kernel.hermiticity_error() < 1e-12
        assert np.allclose(reconstruct_kernel(modes), kernel.data, atol=1e-10)
        assert all(m.occupation >= 0 for m in modes)
        occ = [m.occupation for m in modes]
        assert occ == sorted(occ, reverse=True)


def test_modes_are_orthonormal(kernels):
    _, grid, found = kernels
    modes = found["v"][1][:3]
    gram = np.array([[np.sum(grid.weights * np.conj(a.envelope) * b.envelope) for b in modes] for a in modes])
    assert np.allclose(gram, np.eye(3), atol=1e-10)


def test_photon_bookkeeping(kernels):
    p, grid, found = kernels
    gen = system_generator(p, preset("single3"))
    traj = propagate(DensityMatrix.vacuum(gen.basis), gen, 0.0, grid.times[-1], times=grid.times)
    for kind, mode in (("v", 0), ("u", 1)):
        kernel, modes = found[kind]
        flux = p.kappa_oc * np.sum(grid.weights * traj.expect(number(gen.basis, mode)).real)
        assert sum(m.occupation for m in modes) == pytest.approx(flux, rel=1e-6)
        assert kernel.total_photons() == pytest.approx(flux, rel=1e-6)


def test_dominant_mode_matches_analytic_envelope(kernels):
    p, grid, found = kernels
    analytic = dict(zip("vu", analytic_temporal_modes(p.g, p.kappa_o, p.tau)))
    for kind in "vu":
        v = found[kind][1][0].envelope
        a = analytic[kind](grid.times)
        theta = np.angle(np.sum(grid.weights * a * v))
        dist = np.sqrt(np.sum(grid.weights * np.abs(v - np.exp(1j * theta) * a) ** 2))
        assert dist < 0.05


def test_dominant_fraction_values():
    grid = TimeGrid.uniform(1.0, 4)
    k = CorrelationKernel(grid, np.zeros((4, 4), dtype=complex))
    assert dominant_fraction(decompose_modes(k)) == 1.0


def test_decomposition_rejects_bad_kernels():
    grid = TimeGrid.uniform(1.0, 3)
    nonherm = CorrelationKernel(grid, np.array([[1, 1, 0], [0, 1, 0], [0, 0, 1]], dtype=complex))
    with pytest.raises(DecompositionError):
        decompose_modes(nonherm)
    negative = CorrelationKernel(grid, -np.eye(3, dtype=complex))
    with pytest.raises(DecompositionError):
        decompose_modes(negative)


def test_kernel_requires_pulse_edge_on_grid():
    p = ModelParams.from_mhz(10, 100, 2, 0)
    gen = system_generator(p, preset("single3"))
    grid = TimeGrid.uniform(cascade_window(p), 37)
    with pytest.raises(ConfigurationError):
        g1_correlation(gen, DensityMatrix.vacuum(gen.basis), number(gen.basis, 0), p.kappa_oc, grid)


def test_modes_csv_roundtrip(tmp_path, kernels):
    _, grid, found = kernels
    modes = found["u"][1]
    path = tmp_path / "modes.csv"
    write_modes_csv(path, modes, n_modes=2)
    t, occ, env = read_modes_csv(path)
    assert np.allclose(t, grid.times)
    assert np.allclose(occ, [m.occupation for m in modes[:2]], rtol=1e-11)
    assert np.allclose(env, [m.envelope for m in modes[:2]], rtol=1e-10, atol=1e-12)
    assert b"\r" not in path.read_bytes()
