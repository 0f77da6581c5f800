"""Output correlation kernels and their temporal-mode decomposition.

The two-time function ``G[j, k] = kappa_c Tr[a^dag Lambda(t_j, t_k)(a rho(t_k))]``
is built by propagating the probe ``a rho(t_k)`` with superoperator step
propagators.  The probe stays inside one charge sector of the phase symmetry
``a -> a e^{i phi}, b -> b e^{-i phi}`` of each rail, so the step propagators
are only formed on that sector.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, eigh

from .errors import ConfigurationError, DecompositionError
from .dynamics import Generator, propagate, StepperConfig
from .fock import FockBasis


@dataclass(frozen=True)
class TimeGrid:
    """Sample times with quadrature weights (trapezoid rule)."""

    times: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_times(cls, times) -> "TimeGrid":
        t = np.asarray(times, dtype=float)
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("time grid must be strictly increasing with at least two points")
        dt = np.diff(t)
        w = np.zeros_like(t)
        w[:-1] += dt / 2
        w[1:] += dt / 2
        return cls(t, w)

    @classmethod
    def uniform(cls, t_end: float, n: int = 400) -> "TimeGrid":
        return cls.from_times(np.linspace(0.0, t_end, n))

    @classmethod
    def pulsed(cls, tau: float, t_end: float, n_drive: int = 100, n_tail: int = 300) -> "TimeGrid":
        """Uniform on ``[0, tau]`` and on ``[tau, t_end]`` separately, with tau a node."""
        if not 0 < tau < t_end:
            raise ConfigurationError("need 0 < tau < t_end")
        head = np.linspace(0.0, tau, n_drive + 1)
        tail = np.linspace(tau, t_end, n_tail + 1)[1:]
        return cls.from_times(np.concatenate([head, tail]))

    def __len__(self):
        return len(self.times)


@dataclass
class CorrelationKernel:
    grid: TimeGrid
    data: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def weighted(self) -> np.ndarray:
        s = np.sqrt(self.grid.weights)
        return s[:, None] * self.data * s[None, :]

    def total_photons(self) -> float:
        """Integrated flux, equal to the sum of mode occupations."""
        return float(np.sum(self.grid.weights * self.data.diagonal().real))


@dataclass
class TemporalMode:
    grid: TimeGrid
    envelope: np.ndarray
    occupation: float

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def norm(self) -> float:
        return float(np.sum(self.grid.weights * np.abs(self.envelope) ** 2))


def g1_correlation(generator: Generator, rho0, mode_operator, out_coupling: float, grid: TimeGrid,
                   stepper: StepperConfig = StepperConfig()) -> CorrelationKernel:
    """Two-time first-order correlation of the output field of one mode.

    Needs a piecewise-constant generator whose pulse edges are grid nodes.
    When the generator carries conserved charges the regression step runs on
    the charge sector of the probe only.
    """
    if not generator.is_piecewise_constant:
        raise ConfigurationError("correlation kernel needs a piecewise-constant generator")
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid.from_times(grid)
    t = grid.times
    breaks = generator.breakpoints
    for bp in breaks:
        if t[0] < bp < t[-1] and not np.any(np.isclose(t, bp, rtol=0, atol=1e-12 * max(1.0, bp))):
            raise ConfigurationError(f"pulse edge t={bp:.6g} must be a node of the time grid")

    a = mode_operator.data if hasattr(mode_operator, "data") else np.asarray(mode_operator, dtype=complex)
    traj = propagate(rho0, generator, float(t[0]), float(t[-1]), times=t, stepper=stepper)
    reached = np.any(traj.states != 0, axis=0)
    sector = generator.sector((np.abs(a) @ reached) > 0)
    mi, ni = sector.rows, sector.cols
    probe_weight = a.conj().T[ni, mi]  # Tr[a^dag X] = sum_mn (a^dag)_{nm} X_{mn}

    n = len(t)
    G = np.zeros((n, n), dtype=complex)
    Y = np.zeros((len(sector), n), dtype=complex)
    cache = {}
    for i in range(n):
        if i > 0:
            h = t[i] - t[i - 1]
            mid = 0.5 * (t[i] + t[i - 1])
            seg = sum(1 for bp in breaks if bp <= mid)
            key = (seg, round(h / max(abs(t[-1]), 1e-300), 12))
            if key not in cache:
                gen_mat = generator.rhs(t[i - 1], t[i], sector).matrix(mid).toarray()
                cache[key] = expm(gen_mat * h)
            Y[:, :i] = cache[key] @ Y[:, :i]
        Y[:, i] = sector.pack(a @ traj.states[i])
        G[i, : i + 1] = out_coupling * (probe_weight @ Y[:, : i + 1])
    lower = np.tril(G, -1)
    G = lower + lower.conj().T + np.diag(G.diagonal().real)
    return CorrelationKernel(grid, G)


def decompose_modes(kernel: CorrelationKernel, herm_tol: float = 1e-9) -> list[TemporalMode]:
    """Temporal modes of a kernel, sorted by decreasing occupation."""
    G = kernel.data
    scale = max(np.max(np.abs(G)), 1e-300)
    if kernel.hermiticity_error() > herm_tol * max(1.0, scale):
        raise DecompositionError(f"kernel not Hermitian (error {kernel.hermiticity_error():.3g})")
    K = kernel.weighted()
    K = 0.5 * (K + K.conj().T)
    vals, vecs = eigh(K)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    lam_max = max(vals[0], 0.0)
    if vals[-1] < -1e-8 * lam_max and vals[-1] < -1e-14:
        raise DecompositionError(f"kernel has negative occupation {vals[-1]:.3g}")
    vals = np.clip(vals, 0.0, None)
    sw = np.sqrt(kernel.grid.weights)
    modes = []
    for lam, y in zip(vals, vecs.T):
        v = y.conj() / sw
        k = int(np.argmax(np.abs(v)))
        if abs(v[k]) > 0:
            v = v * (abs(v[k]) / v[k])
        modes.append(TemporalMode(kernel.grid, v, float(lam)))
    return modes


def reconstruct_kernel(modes: list[TemporalMode]) -> np.ndarray:
    """``sum_i n_i conj(v_i(t_j)) v_i(t_k)``."""
    V = np.array([m.envelope for m in modes])
    n = np.array([m.occupation for m in modes])
    return (V.conj().T * n) @ V


def dominant_fraction(modes: list[TemporalMode]) -> float:
    if not modes:
        raise ConfigurationError("empty mode list")
    total = sum(m.occupation for m in modes)
    if total < 1e-12:
        return 1.0
    return float(max(m.occupation for m in modes) / total)


def write_modes_csv(path, modes: list[TemporalMode], n_modes: int | None = None) -> None:
    """Envelopes as ``t, re_1, im_1, ...`` preceded by an occupations row."""
    modes = modes[:n_modes] if n_modes else modes
    t = modes[0].times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["occupation"] + [f"{m.occupation:.12g}" for m in modes for _ in (0, 1)])
        w.writerow(["t"] + [f"{p}_{i + 1}" for i in range(len(modes)) for p in ("re", "im")])
        for k, tk in enumerate(t):
            row = [f"{tk:.12g}"]
            for m in modes:
                row += [f"{m.envelope[k].real:.12g}", f"{m.envelope[k].imag:.12g}"]
            w.writerow(row)


def read_modes_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(times, occupations, envelopes)``; envelopes has one row per mode."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    occ = np.array([float(x) for x in rows[0][1::2]])
    data = np.array([[float(x) for x in r] for r in rows[2:]])
    env = data[:, 1::2] + 1j * data[:, 2::2]
    return data[:, 0], occ, env.T
