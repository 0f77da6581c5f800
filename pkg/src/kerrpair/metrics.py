"""Bell-state fidelities, dual-rail post-selection and SPDC baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigurationError, UndefinedFidelityError
from .fock import FockBasis, DensityMatrix, projector, identity

SPDC_BEST_FIDELITY = 27.0 / 32.0


@dataclass(frozen=True)
class BellMetrics:
    fidelity: float
    optimal_phase: float
    p1: float
    p2: float
    p0: float = 1.0

    @property
    def blockade_ratio(self) -> float:
        return _ratio(self.p0, self.p1, self.p2)


@dataclass(frozen=True)
class PostSelection:
    probability: float
    fidelity_post: float
    optimal_phase: float
    rho_post: DensityMatrix | None = None


def _ratio(p0: float, p1: float, p2: float) -> float:
    # populations measured relative to the vacuum, so a geometric (squeezed) ladder gives 1
    if p1 < 1e-12:
        return math.inf
    return max(p2, 0.0) * max(p0, 0.0) / p1 ** 2


def _element(rho: DensityMatrix, left, right) -> complex:
    try:
        return rho.element(left, right)
    except KeyError:
        return 0.0


def bell_fidelity(rho: DensityMatrix) -> BellMetrics:
    """Overlap with ``(|00> + e^{i phi}|11>)/sqrt(2)`` maximised over phi."""
    if rho.basis.n_modes != 2:
        raise ConfigurationError("Bell fidelity needs a two-mode state")
    r00 = _element(rho, (0, 0), (0, 0)).real
    r11 = _element(rho, (1, 1), (1, 1)).real
    c = _element(rho, (0, 0), (1, 1))
    p2 = _element(rho, (2, 2), (2, 2)).real
    fid = 0.5 * (r00 + r11) + abs(c)
    return BellMetrics(float(fid), float(-np.angle(c)), float(r11), float(p2), float(r00))


def blockade_ratio(rho: DensityMatrix) -> float:
    """``P2 P0 / P1**2`` from the ``|00>``, ``|11>`` and ``|22>`` populations.

    Equal to 1 for any two-mode squeezed vacuum; ``inf`` when ``|11>`` is empty.
    """
    if min(rho.basis.mode_dims) < 3:
        raise ConfigurationError("blockade ratio needs capture dimension >= 3")
    m = bell_fidelity(rho)
    return m.blockade_ratio


def _vacuum_pair_projector(basis: FockBasis, m1: int, m2: int) -> np.ndarray:
    return projector(basis, {m1: 0, m2: 0}).data


def postselect_dualrail(rho: DensityMatrix, keep_state: bool = False) -> PostSelection:
    """Discard events with no optical or no microwave photon.

    Modes are ordered ``(v1, u1, v2, u2)``; fidelity is measured against
    ``(|0011> + e^{i phi}|1100>)/sqrt(2)`` with the phase optimised.
    """
    basis = rho.basis
    if basis.n_modes != 4:
        raise ConfigurationError("dual-rail post-selection needs a four-mode state")
    eye = np.eye(basis.size)
    Pi = (eye - _vacuum_pair_projector(basis, 0, 2)) @ (eye - _vacuum_pair_projector(basis, 1, 3))
    prob = float(np.trace(Pi @ rho.data).real)
    if prob < 1e-12:
        raise UndefinedFidelityError(f"post-selection probability {prob:.3g} too small")
    post = Pi @ rho.data @ Pi / prob
    post_dm = DensityMatrix(basis, post)
    a = _element(post_dm, (0, 0, 1, 1), (0, 0, 1, 1)).real
    b = _element(post_dm, (1, 1, 0, 0), (1, 1, 0, 0)).real
    c = _element(post_dm, (0, 0, 1, 1), (1, 1, 0, 0))
    fid = 0.5 * (a + b) + abs(c)
    return PostSelection(prob, float(fid), float(-np.angle(c)), post_dm if keep_state else None)


def tmsv_state(r: float, dim: int) -> DensityMatrix:
    """Two-mode squeezed vacuum truncated to ``dim`` levels per mode and renormalised."""
    if r < 0:
        raise ConfigurationError("squeezing parameter must be non-negative")
    basis = FockBasis((dim, dim))
    t = math.tanh(r)
    psi = np.zeros(basis.size, dtype=complex)
    for n in range(dim):
        psi[basis.index((n, n))] = t ** n
    psi /= np.linalg.norm(psi)
    return DensityMatrix.from_ket(basis, psi)


def tmsv_bell_fidelity(t: float) -> float:
    """Bell overlap of the untruncated TMSV with ``tanh r = t``."""
    return 0.5 * (1 - t * t) * (1 + t) ** 2


def spdc_best_fidelity() -> float:
    """Best Bell fidelity reachable by a TMSV source (27/32 at tanh r = 1/2)."""
    res = minimize_scalar(lambda t: -tmsv_bell_fidelity(t), bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-10})
    return float(-res.fun)


def spdc_best_tanh() -> float:
    res = minimize_scalar(lambda t: -tmsv_bell_fidelity(t), bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)


def dualrail_tmsv_state(r: float, dim: int) -> DensityMatrix:
    """Two independent TMSVs on ``(v1, u1)`` and ``(v2, u2)``."""
    single = tmsv_state(r, dim).data
    basis = FockBasis((dim,) * 4)
    small = FockBasis((dim, dim))
    # reorder (v1, u1, v2, u2) from the product (v1 u1) x (v2 u2)
    idx = small.size * small.indices_of(basis.states[:, :2]) + small.indices_of(basis.states[:, 2:])
    full = np.kron(single, single)
    return DensityMatrix(basis, full[np.ix_(idx, idx)])


def spdc_dualrail_tradeoff(s) -> tuple[np.ndarray, np.ndarray]:
    """``(P_post, F_post)`` of the post-selected dual-rail TMSV with ``s = tanh(r)**2``."""
    s = np.asarray(s, dtype=float)
    return s * (2 - s), 2 * (1 - s) ** 2 / (2 - s)


def spdc_dualrail_fidelity_at(p):
    """Dual-rail SPDC fidelity reached at post-selection probability ``p``."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    root = np.sqrt(1 - p)
    return 2 * (1 - p) / (1 + root)


def beats_spdc_dualrail(probability: float, fidelity: float) -> bool:
    """True when the pair ``(P, F)`` lies strictly above the SPDC trade-off curve."""
    if not 0 < probability <= 1:
        return False
    return bool(fidelity > spdc_dualrail_fidelity_at(probability))
