"""Capture of emitted temporal modes by downstream cavities.

Each captured mode ``v(t)`` drives an initially empty cavity through the
time-dependent coupling ``g_v(t) = -conj(v(t)) / sqrt(int_0^t |v|^2)``, which
absorbs the whole mode.  The downstream state at the end of the window is the
output state of the source.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, UndefinedFidelityError
from .fock import FockBasis, DensityMatrix, annihilation, number, partial_trace, tensor_embed
from .dynamics import (ModelParams, Layout, Generator, TDOperator, Term, StepperConfig, propagate,
                       build_entangler_hamiltonian, build_dualrail_hamiltonian, system_generator, preset,
                       layout_charges)
from .temporal_modes import TimeGrid, TemporalMode, g1_correlation, decompose_modes, dominant_fraction
from .analytics import AnalyticMode, analytic_temporal_modes, perturbation_constants
from . import metrics

DELTA = 1e-10
COMPLETENESS_TOL = 1e-3


class CaptureCoupling:
    """Downstream coupling ``g(t)`` built from an envelope and its cumulative norm."""

    def __init__(self, envelope, cumulative, g_cap: float, grid: TimeGrid | None = None,
                 source: TemporalMode | AnalyticMode | None = None, t_stop: float = math.inf):
        self.envelope = envelope
        self.cumulative = cumulative
        self.g_cap = float(g_cap)
        self.grid = grid
        self.source = source
        self.t_stop = t_stop
        self._last = (None, 0.0)

    def value(self, t: float) -> complex:
        if t < 0 or t > self.t_stop:
            return 0.0
        v = complex(self.envelope(t))
        c = float(self.cumulative(t))
        g = -v.conjugate() / math.sqrt(max(c, DELTA))
        mag = abs(g)
        if mag > self.g_cap:
            g *= self.g_cap / mag
        return g

    def __call__(self, t: float) -> complex:
        last_t, last_g = self._last
        if t != last_t:
            last_g = self.value(t)
            self._last = (t, last_g)
        return last_g

    def samples(self, times=None) -> np.ndarray:
        t = self.grid.times if times is None else np.asarray(times)
        return np.array([self.value(float(x)) for x in t])


def trapezoid_coupling(mode: TemporalMode, g_cap: float) -> np.ndarray:
    """Coupling samples on the mode grid with a trapezoid-rule cumulative norm."""
    v = mode.envelope
    t = mode.times
    dens = np.abs(v) ** 2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
    g = -v.conj() / np.sqrt(np.maximum(cum, DELTA))
    mag = np.abs(g)
    over = mag > g_cap
    g[over] *= g_cap / mag[over]
    return g


def coupling_from_mode(mode: TemporalMode, g_cap: float, breaks=()) -> CaptureCoupling:
    """Continuous coupling from a sampled mode.

    The envelope is interpolated with cubic splines on each piece between
    ``breaks`` (kinks such as the pulse edge) and the cumulative norm is the
    exact integral of a spline through ``|v|^2``, rescaled to reach one at
    the end of the grid.
    """
    if mode.norm() <= 0:
        raise ConfigurationError("cannot capture a zero-norm mode")
    t = mode.times
    v = mode.envelope
    edges = [t[0]] + [b for b in sorted(breaks) if t[0] < b < t[-1]] + [t[-1]]
    pieces = []
    offset = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (t >= lo - 1e-15) & (t <= hi + 1e-15)
        ts = t[sel]
        if len(ts) < 4:
            raise ConfigurationError("each piece of the mode grid needs at least four samples")
        env = CubicSpline(ts, v[sel])
        dens = CubicSpline(ts, np.abs(v[sel]) ** 2).antiderivative()
        pieces.append((lo, hi, env, dens, offset))
        offset += float(dens(hi) - dens(lo))
    total = offset
    starts = np.array([p[0] for p in pieces])

    def find(x):
        return pieces[max(int(np.searchsorted(starts, x, side="right")) - 1, 0)]

    def envelope(x):
        if x < t[0] or x > t[-1]:
            return 0.0
        return complex(find(x)[2](x))

    def cumulative(x):
        if x <= t[0]:
            return 0.0
        if x >= t[-1]:
            return 1.0
        lo, _, _, dens, off = find(x)
        return max((off + float(dens(x) - dens(lo))) / total, 0.0)

    return CaptureCoupling(envelope, cumulative, g_cap, mode.grid, mode, t_stop=t[-1])


def coupling_from_analytic(mode: AnalyticMode, g_cap: float, grid: TimeGrid | None = None) -> CaptureCoupling:
    return CaptureCoupling(lambda x: float(mode(x)), lambda x: float(mode.cumulative(x)), g_cap, grid, mode)


def default_g_cap(params: ModelParams) -> float:
    return 50.0 * max(params.g, params.kappa)


def _cascade_terms(basis: FockBasis, sys_mode: int, cap_mode: int, kappa_c: float, coupling: CaptureCoupling):
    """Cascade Hamiltonian pieces and the combined output jump for one channel."""
    a = annihilation(basis, sys_mode).data
    c = annihilation(basis, cap_mode).data
    s = math.sqrt(kappa_c)
    h = [Term(0.5j * s * (a.conj().T @ c), coef=coupling, conj=True),
         Term(-0.5j * s * (c.conj().T @ a), coef=coupling)]
    jump = TDOperator(basis, [Term(s * a), Term(c, coef=coupling, conj=True)])
    return h, jump


def build_cascade_generator(params: ModelParams, layout: Layout, couplings: dict) -> Generator:
    """Entangler plus capture cavities on the layout's extended basis.

    ``couplings`` maps ``("v", rail)`` / ``("u", rail)`` to a
    :class:`CaptureCoupling`; channels without an entry keep their plain
    output-coupling loss.
    """
    basis = layout.extended_basis()
    for key in couplings:
        if key[0] not in ("v", "u") or not 0 <= key[1] < layout.rails:
            raise ConfigurationError(f"unknown capture channel {key!r}")
    if layout.rails == 1:
        h = build_entangler_hamiltonian(params, basis, layout.optical(0), layout.microwave(0))
    else:
        h = build_dualrail_hamiltonian(params, basis, (layout.optical(0), layout.microwave(0),
                                                       layout.optical(1), layout.microwave(1)))
    jumps = []
    for r in range(layout.rails):
        for kind, sys_mode, cap_mode, kc in (("v", layout.optical(r), layout.capture_v(r), params.kappa_oc),
                                             ("u", layout.microwave(r), layout.capture_u(r), params.kappa_ec)):
            cp = couplings.get((kind, r))
            if kc <= 0:
                continue
            if cp is None:
                jumps.append(TDOperator(basis, [Term(math.sqrt(kc) * annihilation(basis, sys_mode).data)]))
                continue
            terms, jump = _cascade_terms(basis, sys_mode, cap_mode, kc, cp)
            h.terms.extend(terms)
            jumps.append(jump)
        a = annihilation(basis, layout.optical(r)).data
        b = annihilation(basis, layout.microwave(r)).data
        for rate, op in ((params.kappa_oi, a), (params.kappa_ei * (1 + params.n_th), b),
                         (params.kappa_ei * params.n_th, b.conj().T)):
            if rate > 0:
                jumps.append(TDOperator(basis, [Term(math.sqrt(rate) * op)]))
    return Generator(h, jumps, charges=layout_charges(layout, basis))


@dataclass
class ModeReport:
    occupations: list[float]
    dominant_fraction: float
    total_photons: float


@dataclass
class CascadeResult:
    scheme: str
    params: ModelParams
    layout: str
    rho_out: DensityMatrix
    captured_photons: list[float]
    residual_system_photons: list[float]
    t_end: float
    source: str
    modes: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    temporal_modes: dict = field(default_factory=dict, repr=False)

    @property
    def complete(self) -> bool:
        return max(self.residual_system_photons, default=0.0) < COMPLETENESS_TOL

    @property
    def dominant_fraction(self) -> float:
        fr = [m.dominant_fraction for m in self.modes.values()]
        return min(fr) if fr else float("nan")

    def metrics(self) -> dict:
        """Fidelity-type figures of merit for the scheme."""
        out = {}
        if self.scheme == "single_rail":
            bm = metrics.bell_fidelity(self.rho_out)
            out.update(F=bm.fidelity, phase=bm.optimal_phase, P1=bm.p1, P2=bm.p2,
                       blockade_ratio=bm.blockade_ratio, P_post=float("nan"))
        else:
            v1u1 = partial_trace(self.rho_out, [0, 1])
            bm = metrics.bell_fidelity(v1u1)
            out.update(P1=bm.p1, P2=bm.p2, blockade_ratio=bm.blockade_ratio)
            try:
                ps = metrics.postselect_dualrail(self.rho_out)
                out.update(F=ps.fidelity_post, P_post=ps.probability, phase=ps.optimal_phase)
            except UndefinedFidelityError:
                out.update(F=float("nan"), P_post=0.0, phase=float("nan"))
        return out

    def to_json_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "layout": self.layout,
            "source": self.source,
            "params_mhz": self.params.to_mhz_dict(),
            "t_end": self.t_end,
            "metrics": self.metrics(),
            "captured_photons": self.captured_photons,
            "residual_system_photons": self.residual_system_photons,
            "modes": {k: vars(m) for k, m in self.modes.items()},
            "flags": self.flags,
            "rho_out": {
                "mode_dims": list(self.rho_out.basis.mode_dims),
                "cap": self.rho_out.basis.cap,
                "real": self.rho_out.data.real.tolist(),
                "imag": self.rho_out.data.imag.tolist(),
            },
        }


def cascade_window(params: ModelParams, n_decay: float = 15.0) -> float:
    if params.kappa <= 0:
        raise ConfigurationError("capture needs non-zero loss on both cavities")
    return params.tau + n_decay / params.kappa


def extract_modes(params: ModelParams, layout: Layout, grid: TimeGrid,
                  stepper: StepperConfig = StepperConfig()) -> dict:
    """Dominant temporal modes of rail 0's optical and microwave outputs."""
    gen = system_generator(params, layout)
    basis = gen.basis
    rho0 = DensityMatrix.vacuum(basis)
    out = {}
    for kind, mode, kc in (("v", layout.optical(0), params.kappa_oc), ("u", layout.microwave(0), params.kappa_ec)):
        kernel = g1_correlation(gen, rho0, annihilation(basis, mode), kc, grid, stepper=stepper)
        out[kind] = (kernel, decompose_modes(kernel))
    return out


def run_cascade(params: ModelParams, layout: Layout | str = "single3", source: str = "numerical",
                n_drive: int = 100, n_tail: int = 300, n_decay: float = 15.0,
                stepper: StepperConfig = StepperConfig()) -> CascadeResult:
    """Generate, capture and read out the pair state for one parameter point."""
    if isinstance(layout, str):
        layout = preset(layout)
    t_end = cascade_window(params, n_decay)
    grid = TimeGrid.pulsed(params.tau, t_end, n_drive, n_tail)
    g_cap = default_g_cap(params)
    flags = []
    reports = {}
    mode_sets = {}
    couplings = {}
    if params.g == 0:
        pass
    elif source == "numerical":
        found = extract_modes(params, layout, grid, stepper)
        for kind, (kernel, modes) in found.items():
            reports[kind] = ModeReport([m.occupation for m in modes[:4]], dominant_fraction(modes),
                                       kernel.total_photons())
            mode_sets[kind] = modes
            if modes[0].occupation <= 1e-14:
                continue
            cp = coupling_from_mode(modes[0], g_cap, breaks=(params.tau,))
            for r in range(layout.rails):
                couplings[(kind, r)] = cp
    elif source == "analytic":
        if layout.rails != 1:
            raise ConfigurationError("analytic capture modes exist for the single-rail scheme only")
        if not (math.isclose(params.kappa_o, params.kappa_e) and math.isclose(params.kappa_oc, params.kappa_ec)):
            raise ConfigurationError("analytic capture modes assume symmetric losses")
        v, u = analytic_temporal_modes(params.g, params.kappa_o, params.tau)
        couplings[("v", 0)] = coupling_from_analytic(v, g_cap, grid)
        couplings[("u", 0)] = coupling_from_analytic(u, g_cap, grid)
    else:
        raise ConfigurationError(f"unknown coupling source {source!r}")

    gen = build_cascade_generator(params, layout, couplings)
    basis = gen.basis
    traj = propagate(DensityMatrix.vacuum(basis), gen, 0.0, t_end, stepper=stepper)
    final = traj.final
    sys_modes = list(range(layout.n_system))
    cap_modes = layout.capture_modes
    residual = [float(number(basis, m).expect(final).real) for m in sys_modes]
    captured = [float(number(basis, m).expect(final).real) for m in cap_modes]
    rho_out = partial_trace(final, cap_modes)
    tr = rho_out.trace().real
    if abs(tr - 1) > 1e-6:
        flags.append("trace_error")
    if max(residual) >= COMPLETENESS_TOL:
        flags.append("incomplete_transfer")
    for kind, rep in reports.items():
        if rep.dominant_fraction < 0.9:
            flags.append(f"multimode_{kind}")
    return CascadeResult(layout.scheme, params, layout.name, rho_out, captured, residual, t_end, source,
                         reports, flags, mode_sets)


# -- ring-down probes ----------------------------------------------------------

def _ringdown_coupling(params: ModelParams, kind: str) -> tuple[CaptureCoupling, float, float]:
    kappa = params.kappa_o if kind == "v" else params.kappa_e
    kappa_c = params.kappa_oc if kind == "v" else params.kappa_ec
    tau = math.pi / (4 * params.g)
    v, u = analytic_temporal_modes(params.g, kappa, tau)
    mode = v if kind == "v" else u
    return coupling_from_analytic(mode, math.inf), tau, kappa_c


def decay_channel_probe(left, right, params: ModelParams, side: str = "optical", dims=(4, 4),
                        n_decay: float = 30.0, stepper: StepperConfig = StepperConfig(rtol=1e-10, atol=1e-12)) -> np.ndarray:
    """Capture-cavity matrix produced by ``|left><right|`` present at the end of the pulse.

    ``left``/``right`` are ``(n_system, n_capture)`` occupations.  The drive is
    off; the capture coupling follows the analytic ring-down envelope, whose
    pre-pulse weight ``eps`` is already assumed to sit in the capture cavity.
    The microwave side uses the infinite-Kerr model in which only the
    one-photon transition feeds the capture cavity and higher levels decay
    into unmonitored channels.
    """
    if side not in ("optical", "microwave"):
        raise ConfigurationError("side must be 'optical' or 'microwave'")
    basis = FockBasis(tuple(dims))
    kind = "v" if side == "optical" else "u"
    coupling, tau, kappa_c = _ringdown_coupling(params, kind)
    kappa_i = params.kappa_oi if side == "optical" else params.kappa_ei
    kappa = kappa_c + kappa_i
    c = annihilation(basis, 1).data
    if side == "optical":
        low = annihilation(basis, 0).data
        others = [math.sqrt(kappa_i) * low] if kappa_i > 0 else []
    else:
        d = dims[0]
        proj = np.zeros((d, d))
        proj[0, 1] = 1.0
        low = _embed_first(basis, proj)
        others = [math.sqrt(kappa_i) * low] if kappa_i > 0 else []
        for n in range(2, d):
            step = np.zeros((d, d))
            step[n - 1, n] = 1.0
            others.append(math.sqrt(kappa * n) * _embed_first(basis, step))
    s = math.sqrt(kappa_c)
    h = TDOperator(basis, [Term(0.5j * s * (low.conj().T @ c), coef=coupling, conj=True),
                           Term(-0.5j * s * (c.conj().T @ low), coef=coupling)])
    jumps = [TDOperator(basis, [Term(s * low), Term(c, coef=coupling, conj=True)])]
    jumps += [TDOperator(basis, [Term(op)]) for op in others]
    gen = Generator(h, jumps)
    rho0 = np.zeros((basis.size, basis.size), dtype=complex)
    rho0[basis.index(left), basis.index(right)] = 1.0
    final = propagate(rho0, gen, tau, tau + n_decay / kappa, stepper=stepper).final
    return partial_trace(final, [1]).data


def _embed_first(basis: FockBasis, local: np.ndarray) -> np.ndarray:
    return tensor_embed(basis, local, 0).data
