"""Closed-form oracles: perturbative fidelity, analytic temporal modes,
empirical loss/blockade models, steady-state photon ratios.

All rates are angular (rad/us) and times are in us.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .errors import ConfigurationError
from .optim import golden_section

SQRT2 = math.sqrt(2.0)
C_V = (math.pi - 2.0) / 8.0
C_U1 = (math.pi - SQRT2 * math.sin(math.pi / SQRT2)) / 16.0
C_U2 = C_V - C_U1
C_U3 = (1.0 + math.cos(math.pi / SQRT2)) / (8.0 * SQRT2)


@dataclass(frozen=True)
class PerturbationConstants:
    C_v: float
    C_u1: float
    C_u2: float
    C_u3: float
    eps_v: float
    eps_u: float
    xi_v: float
    xi_u: float
    mu_v: float
    mu_u: float


def perturbation_constants(g: float, kappa_c: float, kappa_i: float) -> PerturbationConstants:
    if g <= 0:
        raise ConfigurationError("g must be positive")
    kappa = kappa_c + kappa_i
    xv, xu = 2 * C_V * kappa / g, 2 * C_U1 * kappa / g
    eps_v, eps_u = xv / (1 + xv), xu / (1 + xu)
    frac = kappa_c / kappa if kappa > 0 else 1.0
    return PerturbationConstants(
        C_V, C_U1, C_U2, C_U3, eps_v, eps_u,
        frac * (1 - eps_v), frac * (1 - eps_u),
        math.sqrt(2 * kappa / (1 + xv)), math.sqrt(2 * kappa / (1 + xu)),
    )


# -- analytic temporal modes ----------------------------------------------------

@dataclass(frozen=True)
class AnalyticMode:
    """Real piecewise envelope: drive branch for t < tau, exponential ring-down after."""

    kind: str  # "v" (optical) or "u" (microwave)
    g: float
    kappa: float
    tau: float
    mu: float
    eps: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        g, tau = self.g, self.tau
        drive = np.sin(g * t)
        if self.kind == "u":
            drive = drive * np.cos(SQRT2 * g * (tau - t))
        tail = np.exp(-0.5 * self.kappa * (t - tau)) / SQRT2
        out = np.where(t < tau, drive, tail) * self.mu
        return np.where(t < 0, 0.0, out)

    def cumulative(self, t):
        """``int_0^t |env|^2``, closed form on both branches."""
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, 0.0, self.tau)
        if self.kind == "v":
            head = self.mu ** 2 * (tc / 2 - np.sin(2 * self.g * tc) / (4 * self.g))
        else:
            head = self.mu ** 2 * _sin2cos2_integral(tc, self.g, self.tau)
        tail = self.eps + (1 - self.eps) * (1 - np.exp(-self.kappa * np.clip(t - self.tau, 0.0, None)))
        return np.where(t <= self.tau, head, tail)


def _sin2cos2_integral(t, g, tau):
    """int_0^t sin^2(g s) cos^2(sqrt2 g (tau - s)) ds."""
    w = 2 * SQRT2 * g
    i_c2 = (np.sin(w * tau) - np.sin(w * (tau - t))) / w
    i_s = np.sin(2 * g * t) / (2 * g)
    k1, k2 = 2 * g * (1 - SQRT2), 2 * g * (1 + SQRT2)
    i_cross = 0.5 * (np.sin(w * tau + k1 * t) - np.sin(w * tau)) / k1 \
        + 0.5 * (np.sin(k2 * t - w * tau) + np.sin(w * tau)) / k2
    return 0.25 * (t + i_c2 - i_s - i_cross)


def analytic_temporal_modes(g: float, kappa: float, tau: float) -> tuple[AnalyticMode, AnalyticMode]:
    """Dominant optical ``v`` and microwave ``u`` envelopes at the pi/2 pulse.

    ``kappa`` is the total loss rate of each cavity (symmetric losses).
    """
    if not math.isclose(tau, math.pi / (4 * g), rel_tol=1e-9):
        raise ConfigurationError("analytic temporal modes are only defined for tau = pi/(4 g)")
    c = perturbation_constants(g, kappa, 0.0)
    return (AnalyticMode("v", g, kappa, tau, c.mu_v, c.eps_v),
            AnalyticMode("u", g, kappa, tau, c.mu_u, c.eps_u))


# -- perturbative fidelity ----------------------------------------------------

def perturbative_elements(g: float, kappa_c: float, kappa_i: float, chi_e: float) -> dict:
    """Downstream matrix elements ``<00|E|00>``, ``<11|E|11>`` and ``<00|E|11>`` to first order."""
    c = perturbation_constants(g, kappa_c, kappa_i)
    k = kappa_c + kappa_i
    ev, eu, xv, xu = c.eps_v, c.eps_u, c.xi_v, c.xi_u
    b2 = (g / chi_e) ** 2 if math.isfinite(chi_e) else 0.0
    r00 = ((1 + (1 - xv) * (1 - xu)) / 2
           + b2 / 2 * (1 - 2 * (1 - xv) * (1 - xu) + (1 - xv) ** 2 * (1 - 2 * xu / 3))
           - math.sqrt(2 * kappa_c / g) * (math.sqrt(C_V * ev * xv) * (1 - xu) + math.sqrt(C_U1 * eu * xu) * (1 - xv))
           + k / g * (C_V * (1 - xu) + C_U1 * (1 - xv) + C_U2 * (1 - xv) ** 2 * (1 - xu)
                      - (C_V - 0.25) - (C_V + 0.25) * (1 - xv) * (1 - xu)))
    r11 = (xv * xu / 2
           - b2 * xv * xu * (1 - 2 * (1 - xv) / 3)
           + math.sqrt(2 * kappa_c * xv * xu / g) * (math.sqrt(C_V * ev * xu) + math.sqrt(C_U1 * eu * xv))
           + k / g * xv * xu * (2 * C_U2 * (1 - xv) - (C_V + 0.25)))
    re = (0.5 * (1 - b2) * math.sqrt(xv * xu)
          + math.sqrt(kappa_c / (2 * g)) * (math.sqrt(C_V * ev * xu) + math.sqrt(C_U1 * eu * xv)
                                            + math.sqrt(2 * C_U3 ** 2 * eu * xv / C_U1) * (1 - xv) * (1 - 2 * xu))
          + k / g * math.sqrt(xv * xu) * (SQRT2 * C_U3 * (1 - xv) - C_V))
    im = -g * math.sqrt(xv * xu) / (2 * chi_e) if math.isfinite(chi_e) else 0.0
    return {"r00": r00, "r11": r11, "coherence": complex(re, im)}


def perturbative_fidelity(g: float, kappa_c: float, kappa_i: float, chi_e: float, exact_modulus: bool = False) -> float:
    """First-order Bell fidelity; by default the ``Re + Im**2`` expansion of ``|<00|E|11>|``."""
    el = perturbative_elements(g, kappa_c, kappa_i, chi_e)
    c = el["coherence"]
    coh = abs(c) if exact_modulus else c.real + c.imag ** 2
    return 0.5 * (el["r00"] + el["r11"]) + coh


def linearized_infidelity(g: float, kappa_c: float, kappa_i: float, chi_e: float) -> float:
    kappa = kappa_c + kappa_i
    blockade = 0.5 * (g / chi_e) ** 2 if math.isfinite(chi_e) else 0.0
    return 0.02 * kappa_c / g + 0.28 * kappa_i / g + 0.5 * kappa_i / kappa + blockade


def optimize_g(objective, g_lo: float, g_hi: float, tol: float = 1e-6):
    """Maximise ``objective(g)`` by golden section; returns ``(g, value, at_edge)``."""
    res = golden_section(lambda g: -objective(g), g_lo, g_hi, tol=tol * (g_hi - g_lo))
    return res.x, -res.fun, res.at_edge


def optimal_perturbative_fidelity(kappa_c: float, kappa_i: float, chi_e: float,
                                  g_range=(2 * math.pi * 1.0, 2 * math.pi * 50.0)):
    """Perturbative fidelity maximised over g in ``g_range``; returns ``(g, F, at_edge)``."""
    return optimize_g(lambda g: perturbative_fidelity(g, kappa_c, kappa_i, chi_e), *g_range)


# -- empirical models -------------------------------------------------------

TERM_NAMES = ("kc/g", "ki/g", "ki/k", "g2/chie2", "g2/chic2")


def term_value(name: str, g, kappa_c, kappa_i, chi_e=math.inf, chi_c=math.inf):
    g = np.asarray(g, dtype=float)
    if name == "kc/g":
        return kappa_c / g
    if name == "ki/g":
        return kappa_i / g
    if name == "ki/k":
        return kappa_i / (kappa_c + kappa_i)
    if name == "g2/chie2":
        return (g / chi_e) ** 2
    if name == "g2/chic2":
        return (g / chi_c) ** 2
    raise ConfigurationError(f"unknown model term {name!r}; choose from {TERM_NAMES}")


@dataclass(frozen=True)
class EmpiricalModel:
    terms: tuple[str, ...]
    values: tuple[float, ...]
    stderrs: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if len(set(self.terms)) != len(self.terms):
            raise ConfigurationError("model terms must be unique")
        if len(self.values) != len(self.terms):
            raise ConfigurationError("one coefficient per term")
        if not all(math.isfinite(v) for v in self.values):
            raise ConfigurationError("model coefficients must be finite")
        for t in self.terms:
            if t not in TERM_NAMES:
                raise ConfigurationError(f"unknown model term {t!r}")

    def evaluate(self, g, kappa_c, kappa_i, chi_e=math.inf, chi_c=math.inf):
        return sum(c * term_value(t, g, kappa_c, kappa_i, chi_e, chi_c) for t, c in zip(self.terms, self.values))

    def as_dict(self) -> dict:
        errs = self.stderrs or (None,) * len(self.terms)
        return {t: {"value": v, "stderr": e} for t, v, e in zip(self.terms, self.values, errs)}


SINGLE_RAIL_MODEL = EmpiricalModel(("kc/g", "ki/g", "ki/k", "g2/chie2"), (0.02, 0.36, 0.68, 0.18), (0.01, 0.07, 0.02, 0.08))
DUAL_RAIL_P_MODEL = EmpiricalModel(("ki/g", "ki/k", "g2/chic2"), (0.23, 1.51, 0.85), (0.10, 0.03, 0.16))
DUAL_RAIL_F_MODEL = EmpiricalModel(("kc/g", "ki/g", "g2/chic2"), (0.07, 0.17, 1.29), (0.01, 0.03, 0.04))


def empirical_infidelity_single(g, kappa_c, kappa_i, chi_e, model: EmpiricalModel = SINGLE_RAIL_MODEL):
    return model.evaluate(g, kappa_c, kappa_i, chi_e=chi_e)


def empirical_dualrail(g, kappa_c, kappa_i, chi_c, model_p: EmpiricalModel = DUAL_RAIL_P_MODEL,
                       model_f: EmpiricalModel = DUAL_RAIL_F_MODEL):
    """``(P_post, F_post)`` from the dual-rail empirical models."""
    return 1 - model_p.evaluate(g, kappa_c, kappa_i, chi_c=chi_c), 1 - model_f.evaluate(g, kappa_c, kappa_i, chi_c=chi_c)


def optimal_drive_single(kappa_c, kappa_i, chi_e, model: EmpiricalModel = SINGLE_RAIL_MODEL):
    """Stationary point in g of the single-rail infidelity model."""
    c = dict(zip(model.terms, model.values))
    num = c.get("kc/g", 0.0) * kappa_c + c.get("ki/g", 0.0) * kappa_i
    return (num * chi_e ** 2 / (2 * c["g2/chie2"])) ** (1.0 / 3.0)


def optimal_drive(kappa_c, kappa_i, chi_c):
    """Drive strength minimising the dual-rail infidelity model."""
    return (chi_c ** 2 * (0.07 * kappa_c + 0.17 * kappa_i) / 2.58) ** (1.0 / 3.0)


def probability_optimal_drive(kappa_i, chi_c):
    return (0.09 * chi_c ** 2 * kappa_i) ** (1.0 / 3.0)


def optimal_tau_offsets(g: float, kappa_c: float, kappa_i: float) -> tuple[float, float]:
    """Fitted optimal pulse lengths ``(tau_single, tau_dual)`` in us."""
    kappa = kappa_c + kappa_i
    loss_term = kappa_i / kappa ** 2 if kappa > 0 else 0.0
    d_single = 2 * math.pi * (0.014 * kappa_c / g ** 2 - 0.223 * kappa_i / g ** 2 - 0.006 * loss_term)
    d_dual = 2 * math.pi * (0.036 * kappa_c / g ** 2 - 0.060 * kappa_i / g ** 2)
    return math.pi / (4 * g) + d_single, math.pi / (2 * SQRT2 * g) + d_dual


# -- large-linewidth steady state ----------------------------------------------

def steady_state_ratio(n: int, delta: float, chi: float, g: float, kappa_a: float, kappa_b: float) -> float:
    """``p_{n+1}/p_n`` of the microwave mode after eliminating a lossy optical mode."""
    if kappa_a <= 0 or kappa_b <= 0:
        raise ConfigurationError("kappa_a and kappa_b must be positive")
    det = delta + 2 * chi * n
    return g ** 2 * kappa_a / (kappa_b * (det ** 2 + (kappa_a / 2) ** 2))


def cooperativity(g: float, kappa_a: float, kappa_b: float) -> float:
    return 4 * g ** 2 / (kappa_a * kappa_b)


def blockade_ratio_expansion(chi: float, g: float, kappa_a: float, kappa_b: float) -> float:
    """``p2/p1 ~ C [1 - (4 chi/kappa_a)^2]`` for resonant drive and ``kappa_a >> chi``."""
    return cooperativity(g, kappa_a, kappa_b) * (1 - (4 * chi / kappa_a) ** 2)


def effective_mode_operators(dim: int, delta: float, chi: float, g: float, kappa_a: float):
    """``(H_eff, L_a_eff)`` on a ``dim``-level microwave mode."""
    n = np.arange(dim, dtype=float)
    det = delta + 2 * chi * n
    h = np.diag(chi * n * (n - 1) - g ** 2 * (n + 1) * det / (det ** 2 + (kappa_a / 2) ** 2))
    bdag = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=-1)
    L = g * bdag @ np.diag(math.sqrt(kappa_a) / (det - 0.5j * kappa_a))
    return h.astype(complex), L


def steady_state_populations(dim: int, delta: float, chi: float, g: float, kappa_a: float, kappa_b: float) -> np.ndarray:
    """Brute-force steady state of the eliminated model; returns ``p_n``."""
    h, La = effective_mode_operators(dim, delta, chi, g, kappa_a)
    Lb = math.sqrt(kappa_b) * np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    eye = np.eye(dim)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.conj()))
    for L in (La, Lb):
        LdL = L.conj().T @ L
        sup += np.kron(L, L.conj()) - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.conj()))
    ns = null_space(sup)
    if ns.shape[1] != 1:
        raise ConfigurationError(f"steady state not unique ({ns.shape[1]} solutions)")
    rho = ns[:, 0].reshape(dim, dim)
    rho = rho / np.trace(rho)
    return np.real(np.diag(rho))


# -- microwave hybridization ----------------------------------------------------

def hybridized_modes(g1: float, delta1: float, g2: float, delta2: float) -> np.ndarray:
    """Rows give ``(b1, b2, q)`` admixtures of the dressed modes ``b1~, b2~, q~``."""
    r1, r2 = g1 / delta1, g2 / delta2
    return np.array([[1.0, 0.0, r1], [0.0, 1.0, r2], [-r1, -r2, 1.0]])


def hybridized_cross_kerr(chi_q: float, g1: float, delta1: float, g2: float, delta2: float) -> float:
    """Cross-Kerr between two cavities dressed by a common Kerr qubit (dispersive limit)."""
    return chi_q * (g1 / delta1) ** 2 * (g2 / delta2) ** 2
