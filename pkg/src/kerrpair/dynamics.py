"""Hamiltonians, jump operators and Lindblad propagation.

Rates are angular frequencies in rad/us and times are in us.  Configuration
files quote rates as ordinary frequencies in MHz; :meth:`ModelParams.from_mhz`
does the 2*pi conversion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace, asdict
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .errors import ConfigurationError, IntegrationError
from .fock import FockBasis, DensityMatrix, annihilation

TWO_PI = 2.0 * math.pi


def to_angular(nu_mhz: float) -> float:
    return TWO_PI * nu_mhz


def to_mhz(omega: float) -> float:
    return omega / TWO_PI


def tau_half(g: float) -> float:
    """Closed-system pi/2 pulse on the vacuum (single rail)."""
    return math.pi / (4.0 * g)


def tau_pi(g: float) -> float:
    """Closed-system pi pulse between vacuum and the dual-rail Bell state."""
    return math.pi / (2.0 * math.sqrt(2.0) * g)


@dataclass(frozen=True)
class ModelParams:
    g: float
    chi_e: float
    tau: float
    kappa_oc: float
    kappa_oi: float
    kappa_ec: float
    kappa_ei: float
    chi_c: float = 0.0
    n_th: float = 0.0

    def __post_init__(self):
        for name in ("g", "chi_e", "kappa_oc", "kappa_oi", "kappa_ec", "kappa_ei", "chi_c", "n_th"):
            v = getattr(self, name)
            if not (v >= 0) or (math.isinf(v) and name not in ("chi_e", "chi_c")):
                raise ConfigurationError(f"{name} must be a finite non-negative number, got {v!r}")
        if not (self.tau > 0) or math.isinf(self.tau):
            raise ConfigurationError(f"tau must be positive, got {self.tau!r}")

    @classmethod
    def symmetric(cls, g, chi_e, tau, kappa_c, kappa_i, chi_c=0.0, n_th=0.0):
        return cls(g=g, chi_e=chi_e, tau=tau, kappa_oc=kappa_c, kappa_oi=kappa_i,
                   kappa_ec=kappa_c, kappa_ei=kappa_i, chi_c=chi_c, n_th=n_th)

    @classmethod
    def from_mhz(cls, g, chi_e, kappa_c, kappa_i, tau=None, chi_c=0.0, n_th=0.0, scheme="single_rail"):
        """Symmetric-loss parameters from ordinary frequencies (MHz) and tau (us).

        ``tau=None`` selects the closed-system pulse for ``scheme``.
        """
        g_w = to_angular(g)
        if tau is None:
            if g_w <= 0:
                raise ConfigurationError("tau must be given explicitly when g = 0")
            tau = tau_half(g_w) if scheme == "single_rail" else tau_pi(g_w)
        return cls.symmetric(g_w, to_angular(chi_e), tau, to_angular(kappa_c),
                             to_angular(kappa_i), to_angular(chi_c), n_th)

    @property
    def kappa_o(self) -> float:
        return self.kappa_oc + self.kappa_oi

    @property
    def kappa_e(self) -> float:
        return self.kappa_ec + self.kappa_ei

    @property
    def kappa(self) -> float:
        """Slowest total decay rate; sets ring-down windows."""
        return min(self.kappa_o, self.kappa_e)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def scaled(self, lam: float) -> "ModelParams":
        """All rates multiplied by ``lam`` and tau divided by it."""
        return replace(self, g=self.g * lam, chi_e=self.chi_e * lam, chi_c=self.chi_c * lam,
                       kappa_oc=self.kappa_oc * lam, kappa_oi=self.kappa_oi * lam,
                       kappa_ec=self.kappa_ec * lam, kappa_ei=self.kappa_ei * lam,
                       tau=self.tau / lam)

    def to_mhz_dict(self) -> dict:
        d = asdict(self)
        out = {k: (to_mhz(v) if k not in ("tau", "n_th") else v) for k, v in d.items()}
        return out


@dataclass(frozen=True)
class Layout:
    """Placement of system and capture modes inside a basis.

    System modes come first as ``o1, e1[, o2, e2]``; the capture cavities
    ``v1, u1[, v2, u2]`` follow in the extended basis.
    """

    rails: int
    dim: int
    cap: int | None = None
    name: str = ""

    @property
    def scheme(self) -> str:
        return "single_rail" if self.rails == 1 else "dual_rail"

    @property
    def n_system(self) -> int:
        return 2 * self.rails

    def optical(self, rail: int = 0) -> int:
        return 2 * rail

    def microwave(self, rail: int = 0) -> int:
        return 2 * rail + 1

    def capture_v(self, rail: int = 0) -> int:
        return self.n_system + 2 * rail

    def capture_u(self, rail: int = 0) -> int:
        return self.n_system + 2 * rail + 1

    @property
    def capture_modes(self) -> list[int]:
        return list(range(self.n_system, 2 * self.n_system))

    @property
    def two_level(self) -> bool:
        return self.dim == 2

    def system_basis(self) -> FockBasis:
        return FockBasis((self.dim,) * self.n_system, self.cap)

    def extended_basis(self) -> FockBasis:
        return FockBasis((self.dim,) * (2 * self.n_system), self.cap)


PRESETS = {
    "single3": Layout(rails=1, dim=3, name="single3"),
    "single4": Layout(rails=1, dim=4, name="single4"),
    "dual2": Layout(rails=2, dim=2, name="dual2"),
    "dual3cap6": Layout(rails=2, dim=3, cap=6, name="dual3cap6"),
}


def preset(name: str) -> Layout:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass
class Term:
    """One operator contribution ``coef(t) * op``.

    ``conj=True`` uses the complex conjugate of ``coef(t)``.  ``window=(t_on,
    t_off)`` makes the term a square pulse, active for ``t_on < t < t_off``;
    window edges are integration breakpoints.
    """

    op: np.ndarray
    coef: Callable[[float], complex] | None = None
    window: tuple[float, float] | None = None
    conj: bool = False

    def active(self, t: float) -> bool:
        return self.window is None or self.window[0] < t < self.window[1]

    def value(self, t: float) -> complex:
        if self.coef is None:
            return 1.0
        c = self.coef(t)
        return np.conj(c) if self.conj else c

    @property
    def factors(self) -> tuple:
        """Hashable description of the coefficient as a product of factors."""
        return () if self.coef is None else ((id(self.coef), self.conj),)


@dataclass
class TDOperator:
    """Time-dependent operator as a sum of :class:`Term` objects."""

    basis: FockBasis
    terms: list[Term] = field(default_factory=list)

    def __call__(self, t: float) -> np.ndarray:
        out = np.zeros((self.basis.size, self.basis.size), dtype=complex)
        for term in self.terms:
            if term.active(t):
                out += term.value(t) * term.op
        return out

    def __add__(self, other: "TDOperator") -> "TDOperator":
        if other.basis != self.basis:
            raise ConfigurationError("time-dependent operators live on different bases")
        return TDOperator(self.basis, self.terms + other.terms)

    @property
    def breakpoints(self) -> set[float]:
        return {edge for t in self.terms if t.window for edge in t.window}

    @property
    def is_piecewise_constant(self) -> bool:
        return all(t.coef is None for t in self.terms)


@dataclass
class Generator:
    """Hamiltonian plus jump operators.

    ``charges`` optionally holds one row of integer charges per basis state,
    conserved by the dynamics (every term shifts them by a fixed amount).
    Propagation then only touches the coherences ``|m><n|`` that the initial
    state can reach.
    """

    hamiltonian: TDOperator
    jumps: list[TDOperator]
    charges: np.ndarray | None = None

    @property
    def basis(self) -> FockBasis:
        return self.hamiltonian.basis

    @property
    def breakpoints(self) -> list[float]:
        pts = set(self.hamiltonian.breakpoints)
        for j in self.jumps:
            pts |= j.breakpoints
        return sorted(pts)

    @property
    def is_piecewise_constant(self) -> bool:
        return self.hamiltonian.is_piecewise_constant and all(j.is_piecewise_constant for j in self.jumps)

    def liouvillian(self, t: float) -> np.ndarray:
        """Dense row-major superoperator at time ``t`` (small systems only)."""
        d = self.basis.size
        eye = np.eye(d)
        h_eff = self.hamiltonian(t).astype(complex)
        dissip = np.zeros((d * d, d * d), dtype=complex)
        for jump in self.jumps:
            L = jump(t)
            h_eff = h_eff - 0.5j * (L.conj().T @ L)
            dissip += np.kron(L, L.conj())
        return -1j * (np.kron(h_eff, eye) - np.kron(eye, h_eff.conj())) + dissip

    def sector(self, support: np.ndarray) -> "CoherenceSector":
        """Coherences reachable from the nonzero pattern ``support`` (d x d bool)."""
        return CoherenceSector.reachable(self, support)

    def rhs(self, t0: float, t1: float, sector: "CoherenceSector | None" = None):
        """Right-hand side valid on the open segment ``(t0, t1)``.

        Square-pulse terms are resolved once from the segment midpoint so
        evaluations at the segment ends see the segment's own generator.
        """
        if sector is None:
            sector = CoherenceSector.full(self.basis.size)
        return SectorSuperoperator(self, 0.5 * (t0 + t1), sector)


def charge_shift(op: np.ndarray, charges: np.ndarray):
    """Fixed charge change produced by ``op``, or None if it mixes sectors."""
    rows, cols = np.nonzero(op)
    if len(rows) == 0:
        return np.zeros(charges.shape[1], dtype=np.int64)
    shifts = charges[rows] - charges[cols]
    if np.any(shifts != shifts[0]):
        return None
    return shifts[0]


@dataclass
class CoherenceSector:
    """Subset of the coherences ``|m><n|`` closed under the dynamics."""

    d: int
    rows: np.ndarray
    cols: np.ndarray
    lookup: np.ndarray  # d x d, position of (m, n) in the sector or -1

    @classmethod
    def from_pairs(cls, d: int, rows, cols) -> "CoherenceSector":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        lookup = np.full((d, d), -1, dtype=np.int64)
        lookup[rows, cols] = np.arange(len(rows))
        return cls(d, rows, cols, lookup)

    @classmethod
    def full(cls, d: int) -> "CoherenceSector":
        rows, cols = np.divmod(np.arange(d * d), d)
        return cls.from_pairs(d, rows, cols)

    @classmethod
    def reachable(cls, gen: Generator, support: np.ndarray) -> "CoherenceSector":
        d = gen.basis.size
        q = gen.charges
        if q is None:
            return cls.full(d)
        ops = [t.op for t in gen.hamiltonian.terms]
        for jump in gen.jumps:
            shifts = [charge_shift(t.op, q) for t in jump.terms]
            if any(s is None for s in shifts) or any(np.any(s != shifts[0]) for s in shifts):
                return cls.full(d)
        for op in ops:
            s = charge_shift(op, q)
            if s is None or np.any(s != 0):
                return cls.full(d)
        m, n = np.nonzero(support)
        diffs = {tuple(x) for x in (q[m] - q[n])}
        qd = q[:, None, :] - q[None, :, :]
        mask = np.zeros((d, d), dtype=bool)
        for diff in diffs:
            mask |= np.all(qd == np.array(diff), axis=2)
        rows, cols = np.nonzero(mask)
        return cls.from_pairs(d, rows, cols)

    def __len__(self):
        return len(self.rows)

    def pack(self, rho: np.ndarray) -> np.ndarray:
        return rho[self.rows, self.cols]

    def unpack(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros((self.d, self.d), dtype=complex)
        out[self.rows, self.cols] = y
        return out

    def pair_operator(self, A, B) -> sp.csr_matrix:
        """Restriction of ``X -> A X B^T`` (``A`` or ``B`` None means identity)."""
        d = self.d
        A = sp.identity(d, dtype=complex, format="csc") if A is None else sp.csc_matrix(A)
        B = sp.identity(d, dtype=complex, format="csc") if B is None else sp.csc_matrix(B)
        ca = np.diff(A.indptr)[self.rows]
        cb = np.diff(B.indptr)[self.cols]
        cnt = ca * cb
        k = np.repeat(np.arange(len(self.rows)), cnt)
        start = np.concatenate([[0], np.cumsum(cnt)[:-1]])
        w = np.arange(cnt.sum()) - start[k]
        pa = A.indptr[self.rows[k]] + w // cb[k]
        pb = B.indptr[self.cols[k]] + w % cb[k]
        r = self.lookup[A.indices[pa], B.indices[pb]]
        val = A.data[pa] * B.data[pb]
        keep = r >= 0
        if np.any(np.abs(val[~keep]) > 0):
            raise ConfigurationError("dynamics leave the coherence sector; charges are not conserved")
        n = len(self.rows)
        return sp.csr_matrix((val[keep], (r[keep], k[keep])), shape=(n, n))


class SectorSuperoperator:
    """``L(t) = sum_k c_k(t) S_k`` on one coherence sector, for one time segment.

    Terms are grouped by their coefficient (a product of coupling functions
    and conjugates), so each distinct time dependence costs one sparse
    matrix-vector product per evaluation.
    """

    def __init__(self, gen: Generator, t_mid: float, sector: CoherenceSector):
        self.sector = sector
        groups: dict[tuple, list] = {}
        funcs: dict[int, Callable] = {}
        sparse_ops: dict[int, sp.csr_matrix] = {}

        def csr(op):
            if id(op) not in sparse_ops:
                sparse_ops[id(op)] = sp.csr_matrix(op)
            return sparse_ops[id(op)]

        def add(factors, A, B, scale):
            groups.setdefault(tuple(sorted(factors)), []).append((A, B, scale))

        def conj_factors(factors):
            return tuple((f, not c) for f, c in factors)

        for term in gen.hamiltonian.terms:
            if not term.active(t_mid):
                continue
            if term.coef is not None:
                funcs[id(term.coef)] = term.coef
            f = term.factors
            op = csr(term.op)
            add(f, op, None, -1j)
            add(conj_factors(f), None, op.conj(), 1j)
        for jump in gen.jumps:
            parts = [t for t in jump.terms if t.active(t_mid)]
            for p in parts:
                if p.coef is not None:
                    funcs[id(p.coef)] = p.coef
            for pj in parts:
                for pl in parts:
                    # L rho L^dag  ->  c_j conj(c_l) M_j rho M_l^dag
                    mj, ml = csr(pj.op), csr(pl.op)
                    add(pj.factors + conj_factors(pl.factors), mj, ml.conj(), 1.0)
                    # -1/2 {L^dag L, rho}: conj(c_j) c_l M_j^dag M_l
                    prod = mj.conj().T @ ml
                    fac = conj_factors(pj.factors) + pl.factors
                    add(fac, prod, None, -0.5)
                    add(conj_factors(fac), None, prod.conj(), -0.5)
        self.static = None
        self.dynamic = []
        for key, items in groups.items():
            mat = None
            for A, B, scale in items:
                m = scale * sector.pair_operator(A, B)
                mat = m if mat is None else mat + m
            mat = mat.tocsr()
            mat.eliminate_zeros()
            if not key:
                self.static = mat
            elif mat.nnz:
                self.dynamic.append((key, mat))
        if self.static is None:
            n = len(sector)
            self.static = sp.csr_matrix((n, n), dtype=complex)
        self.funcs = funcs

    def coefficient(self, key, values) -> complex:
        c = 1.0
        for f, conj in key:
            v = values[f]
            c *= np.conj(v) if conj else v
        return c

    def matrix(self, t: float) -> sp.csr_matrix:
        values = {f: fn(t) for f, fn in self.funcs.items()}
        out = self.static.copy()
        for key, mat in self.dynamic:
            out = out + self.coefficient(key, values) * mat
        return out

    def __call__(self, t, y):
        values = {f: fn(t) for f, fn in self.funcs.items()}
        out = self.static @ y
        for key, mat in self.dynamic:
            out += self.coefficient(key, values) * (mat @ y)
        return out


@dataclass(frozen=True)
class StepperConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    method: str = "DOP853"
    first_step: float | None = None


@dataclass
class Trajectory:
    basis: FockBasis
    times: np.ndarray
    states: np.ndarray  # (n_times, d, d)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k) -> DensityMatrix:
        return DensityMatrix(self.basis, self.states[k])

    @property
    def final(self) -> DensityMatrix:
        return self[-1]

    def expect(self, op) -> np.ndarray:
        data = op.data if hasattr(op, "data") else np.asarray(op)
        return np.einsum("ij,kji->k", data, self.states)


def _as_array(rho0, basis: FockBasis) -> np.ndarray:
    data = rho0.data if hasattr(rho0, "data") else np.asarray(rho0)
    data = np.asarray(data, dtype=complex)
    if data.shape != (basis.size, basis.size):
        raise ConfigurationError(f"initial state shape {data.shape} does not match basis size {basis.size}")
    return data


def propagate(rho0, generator: Generator, t0: float, t1: float, times: Sequence[float] | None = None,
              stepper: StepperConfig = StepperConfig()) -> Trajectory:
    """Integrate the master equation from ``t0`` to ``t1``.

    The map is linear, so non-Hermitian probe operators are propagated the
    same way as states.  Integration restarts at every square-pulse edge.
    ``times`` defaults to ``[t0, t1]``.
    """
    if not t1 > t0:
        raise ConfigurationError(f"need t1 > t0, got {t0!r}, {t1!r}")
    basis = generator.basis
    rho = _as_array(rho0, basis)
    sector = generator.sector(rho != 0)
    y = sector.pack(rho)
    times = np.array([t0, t1] if times is None else times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < t0 or times[-1] > t1:
        raise ConfigurationError("output times must be sorted and inside [t0, t1]")

    edges = [t0] + [b for b in generator.breakpoints if t0 < b < t1] + [t1]
    out = np.zeros((len(times), basis.size, basis.size), dtype=complex)
    filled = np.zeros(len(times), dtype=bool)
    for k in np.flatnonzero(times == t0):
        out[k] = rho
        filled[k] = True
    for a, b in zip(edges[:-1], edges[1:]):
        sel = np.flatnonzero((times > a) & (times <= b) & ~filled)
        kwargs = {}
        if stepper.first_step is not None:
            kwargs["first_step"] = min(stepper.first_step, b - a)
        t_eval = np.unique(np.append(times[sel], b))
        sol = solve_ivp(generator.rhs(a, b, sector), (a, b), y, method=stepper.method, rtol=stepper.rtol,
                        atol=stepper.atol, t_eval=t_eval, **kwargs)
        if sol.status < 0 or sol.y.shape[1] < len(t_eval):
            last = float(sol.t[-1]) if len(sol.t) else a
            raise IntegrationError(f"integration failed: {sol.message}", last)
        for k in sel:
            j = int(np.searchsorted(t_eval, times[k]))
            out[k] = sector.unpack(sol.y[:, j])
            filled[k] = True
        y = sol.y[:, -1]
    return Trajectory(basis, times, out)


def evolve(rho0, generator: Generator, t0: float, t1: float,
           stepper: StepperConfig = StepperConfig()) -> DensityMatrix:
    return propagate(rho0, generator, t0, t1, stepper=stepper).final


# -- model construction -------------------------------------------------------

def _kerr_term(basis: FockBasis, mode: int, chi: float) -> Term | None:
    """-chi * b^dag b^dag b b, or nothing for a two-level (infinite-Kerr) mode."""
    dim = basis.mode_dims[mode]
    if math.isinf(chi):
        if dim > 2:
            raise ConfigurationError("infinite self-Kerr needs a two-level microwave mode")
        return None
    n = basis.states[:, mode].astype(float)
    return Term(np.diag(-chi * n * (n - 1)).astype(complex))


def _drive_term(basis: FockBasis, o: int, e: int, g: float, tau: float) -> Term:
    a = annihilation(basis, o).data
    b = annihilation(basis, e).data
    ab = a @ b
    return Term(-g * (ab.conj().T + ab), window=(0.0, tau))


def build_entangler_hamiltonian(params: ModelParams, basis: FockBasis, optical: int = 0,
                                microwave: int = 1) -> TDOperator:
    """Square-pulse two-mode squeezing plus microwave self-Kerr.

    The drive is on for ``0 < t < tau``; the Kerr term is always on.
    """
    terms = [_drive_term(basis, optical, microwave, params.g, params.tau)]
    kerr = _kerr_term(basis, microwave, params.chi_e)
    if kerr is not None:
        terms.append(kerr)
    return TDOperator(basis, terms)


def build_dualrail_hamiltonian(params: ModelParams, basis: FockBasis,
                               modes: Sequence[int] = (0, 1, 2, 3)) -> TDOperator:
    """Two synchronously pumped entangler copies plus microwave cross-Kerr."""
    if len(modes) != 4:
        raise ConfigurationError("dual-rail Hamiltonian needs four system modes (o1, e1, o2, e2)")
    o1, e1, o2, e2 = modes
    h = build_entangler_hamiltonian(params, basis, o1, e1) + build_entangler_hamiltonian(params, basis, o2, e2)
    if params.chi_c != 0:
        n1 = basis.states[:, e1].astype(float)
        n2 = basis.states[:, e2].astype(float)
        h.terms.append(Term(np.diag(params.chi_c * n1 * n2).astype(complex)))
    return h


def standard_jumps(params: ModelParams, basis: FockBasis, rails: Sequence[tuple[int, int]] = ((0, 1),),
                   include_coupling: bool = True) -> list[TDOperator]:
    """Loss channels per rail: sqrt(kappa_o) a, sqrt(kappa_ec) b and the thermal pair.

    With ``include_coupling=False`` the output-coupling parts are left out
    (the cascade replaces them) and only intrinsic channels remain.
    """
    out = []
    for o, e in rails:
        a = annihilation(basis, o).data
        b = annihilation(basis, e).data
        rates = []
        if include_coupling:
            rates += [(params.kappa_o, a), (params.kappa_ec, b)]
        else:
            rates += [(params.kappa_oi, a)]
        rates += [(params.kappa_ei * (1.0 + params.n_th), b), (params.kappa_ei * params.n_th, b.conj().T)]
        for rate, op in rates:
            if rate > 0:
                out.append(TDOperator(basis, [Term(math.sqrt(rate) * op)]))
    return out


def system_generator(params: ModelParams, layout: Layout) -> Generator:
    """Bare (no capture cavities) generator on the layout's system basis."""
    basis = layout.system_basis()
    rails = [(layout.optical(r), layout.microwave(r)) for r in range(layout.rails)]
    if layout.rails == 1:
        h = build_entangler_hamiltonian(params, basis, *rails[0])
    else:
        h = build_dualrail_hamiltonian(params, basis, (*rails[0], *rails[1]))
    return Generator(h, standard_jumps(params, basis, rails), charges=layout_charges(layout, basis))


def layout_charges(layout: Layout, basis: FockBasis) -> np.ndarray:
    """Per-rail ``n_o + n_v - n_e - n_u``; capture modes count only if present."""
    st = basis.states
    cols = []
    for r in range(layout.rails):
        q = st[:, layout.optical(r)] - st[:, layout.microwave(r)]
        if basis.n_modes > layout.n_system:
            q = q + st[:, layout.capture_v(r)] - st[:, layout.capture_u(r)]
        cols.append(q)
    return np.stack(cols, axis=1)
