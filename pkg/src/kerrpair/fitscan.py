"""Pulse and drive optimisation, parameter scans and empirical-model fits."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Callable

import numpy as np

from .errors import ConfigurationError, FitError, KerrPairError
from .dynamics import ModelParams, preset, tau_half, tau_pi, to_angular
from .cascade import run_cascade
from .analytics import EmpiricalModel, TERM_NAMES, optimal_tau_offsets, term_value
from .optim import golden_section

AXES = ("g", "kappa_c", "kappa_i", "chi_e", "chi_c", "n_th")
CSV_COLUMNS = ("scheme", "g", "kappa_c", "kappa_i", "chi_e", "chi_c", "tau", "F", "P_post", "P1", "P2",
               "dominant_fraction", "flags")
OBJECTIVES = ("fidelity", "probability", "both")
TAU_POLICIES = ("fixed", "formula", "optimize")


def ideal_tau(g: float, scheme: str) -> float:
    return tau_half(g) if scheme == "single_rail" else tau_pi(g)


def cascade_evaluator(layout: str, source: str = "numerical") -> Callable[[ModelParams], dict]:
    """Objective source running one full cascade per call."""
    def evaluate(params: ModelParams) -> dict:
        res = run_cascade(params, layout, source=source)
        out = res.metrics()
        out["dominant_fraction"] = res.dominant_fraction
        out["flags"] = list(res.flags)
        return out
    return evaluate


def _objective_value(metrics: dict, objective: str) -> float:
    if objective == "fidelity":
        return metrics["F"]
    if objective == "probability":
        return metrics["P_post"]
    raise ConfigurationError(f"cannot optimise objective {objective!r}")


@dataclass
class OptimumResult:
    x: float
    value: float
    nfev: int
    flags: list[str] = field(default_factory=list)


def _maximise(fn, lo, hi, tol, widen) -> OptimumResult:
    res = golden_section(lambda x: -fn(x), lo, hi, tol)
    nfev = res.nfev
    flags = []
    if res.at_edge:
        lo2, hi2 = widen(lo, hi)
        res = golden_section(lambda x: -fn(x), lo2, hi2, tol)
        nfev += res.nfev
        if res.at_edge:
            flags.append("bracket_edge")
        else:
            flags.append("bracket_widened")
    return OptimumResult(res.x, -res.fun, nfev, flags)


def optimize_pulse(params: ModelParams, scheme: str = "single_rail", objective: str = "fidelity",
                   evaluate: Callable[[ModelParams], dict] | None = None, layout: str | None = None,
                   rel_tol: float = 1e-4) -> OptimumResult:
    """Pulse length maximising the objective over ``[0.5, 1.5]`` of the ideal pulse.

    The search stops at an interval of ``rel_tol / g``.  A best point on the
    bracket edge widens the bracket once; a second edge hit is flagged.
    """
    if evaluate is None:
        evaluate = cascade_evaluator(layout or ("single3" if scheme == "single_rail" else "dual2"))
    t0 = ideal_tau(params.g, scheme)

    def fn(tau):
        return _objective_value(evaluate(params.with_(tau=tau)), objective)

    def widen(lo, hi):
        w = hi - lo
        return max(lo - w / 2, 0.05 * t0), hi + w / 2

    return _maximise(fn, 0.5 * t0, 1.5 * t0, rel_tol / params.g, widen)


def resolve_tau(params: ModelParams, scheme: str, policy: str, objective: str = "fidelity",
                evaluate=None, layout=None) -> tuple[float, list[str]]:
    if policy == "fixed":
        return ideal_tau(params.g, scheme), []
    if policy == "formula":
        single, dual = optimal_tau_offsets(params.g, params.kappa_oc, params.kappa_oi)
        tau = single if scheme == "single_rail" else dual
        if tau <= 0:
            return ideal_tau(params.g, scheme), ["tau_formula_nonpositive"]
        return tau, []
    if policy == "optimize":
        obj = "probability" if (scheme == "dual_rail" and objective != "fidelity") else "fidelity"
        res = optimize_pulse(params, scheme, obj, evaluate, layout)
        return res.x, res.flags
    raise ConfigurationError(f"unknown tau policy {policy!r}")


def optimize_drive(params: ModelParams, scheme: str = "single_rail", objective: str = "fidelity",
                   tau_policy: str = "fixed", evaluate: Callable[[ModelParams], dict] | None = None,
                   layout: str | None = None, g_range_mhz=(2.0, 50.0), rel_tol: float = 1e-3) -> OptimumResult:
    """Drive strength maximising the objective; ``params.g`` is ignored.

    Returns the optimum as an angular rate.
    """
    if evaluate is None:
        evaluate = cascade_evaluator(layout or ("single3" if scheme == "single_rail" else "dual2"))

    def fn(g):
        p = params.with_(g=g, tau=ideal_tau(g, scheme))
        tau, _ = resolve_tau(p, scheme, tau_policy, objective, evaluate, layout)
        return _objective_value(evaluate(p.with_(tau=tau)), objective)

    lo, hi = to_angular(g_range_mhz[0]), to_angular(g_range_mhz[1])

    def widen(a, b):
        w = b - a
        return max(a - w / 2, 0.1 * a), b + w / 2

    return _maximise(fn, lo, hi, rel_tol * (hi - lo), widen)


# -- scans ---------------------------------------------------------------------

@dataclass(frozen=True)
class ScanSpec:
    """Cartesian scan; axis values and ``fixed`` rates are in MHz.

    Axes nest in the order given, the last axis varying fastest.
    """

    scheme: str
    axes: dict
    fixed: dict = field(default_factory=dict)
    objective: str = "fidelity"
    tau_policy: str = "fixed"
    layout: str | None = None
    source: str = "numerical"

    def __post_init__(self):
        if self.scheme not in ("single_rail", "dual_rail"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.objective not in OBJECTIVES:
            raise ConfigurationError(f"unknown objective {self.objective!r}")
        if self.tau_policy not in TAU_POLICIES:
            raise ConfigurationError(f"unknown tau policy {self.tau_policy!r}")
        if not self.axes:
            raise ConfigurationError("scan needs at least one axis")
        for name, values in list(self.axes.items()) + [(k, [v]) for k, v in self.fixed.items()]:
            if name not in AXES:
                raise ConfigurationError(f"unknown scan axis {name!r}; choose from {AXES}")
            if len(values) == 0:
                raise ConfigurationError(f"axis {name!r} is empty")
        overlap = set(self.axes) & set(self.fixed)
        if overlap:
            raise ConfigurationError(f"parameters both scanned and fixed: {sorted(overlap)}")
        missing = {"g", "kappa_c", "kappa_i"} - set(self.axes) - set(self.fixed)
        if self.scheme == "single_rail":
            missing |= {"chi_e"} - set(self.axes) - set(self.fixed)
        else:
            missing |= {"chi_c"} - set(self.axes) - set(self.fixed)
        if missing:
            raise ConfigurationError(f"scan leaves rates unspecified: {sorted(missing)}")

    @property
    def layout_name(self) -> str:
        return self.layout or ("single3" if self.scheme == "single_rail" else "dual2")

    @property
    def size(self) -> int:
        return int(np.prod([len(v) for v in self.axes.values()]))

    def points(self) -> list[dict]:
        names = list(self.axes)
        out = []
        for combo in itertools.product(*(self.axes[n] for n in names)):
            pt = dict(self.fixed)
            pt.update(zip(names, combo))
            out.append(pt)
        return out


def params_from_point(point: dict, scheme: str) -> ModelParams:
    chi_e = point.get("chi_e", math.inf)
    return ModelParams.from_mhz(g=point["g"], chi_e=chi_e, kappa_c=point["kappa_c"], kappa_i=point["kappa_i"],
                                chi_c=point.get("chi_c", 0.0), n_th=point.get("n_th", 0.0), scheme=scheme)


def evaluate_point(spec: ScanSpec, point: dict) -> dict:
    """One scan row; failures are captured in ``flags`` instead of raised."""
    row = {"scheme": spec.scheme, "g": point["g"], "kappa_c": point["kappa_c"], "kappa_i": point["kappa_i"],
           "chi_e": point.get("chi_e", math.inf), "chi_c": point.get("chi_c", 0.0), "tau": math.nan,
           "F": math.nan, "P_post": math.nan, "P1": math.nan, "P2": math.nan,
           "dominant_fraction": math.nan, "flags": []}
    try:
        evaluate = cascade_evaluator(spec.layout_name, spec.source)
        params = params_from_point(point, spec.scheme)
        tau, flags = resolve_tau(params, spec.scheme, spec.tau_policy, spec.objective, evaluate, spec.layout_name)
        metrics = evaluate(params.with_(tau=tau))
        row.update(tau=tau, F=metrics["F"], P_post=metrics["P_post"], P1=metrics["P1"], P2=metrics["P2"],
                   dominant_fraction=metrics["dominant_fraction"], flags=flags + metrics["flags"])
    except (KerrPairError, ValueError, ArithmeticError) as exc:
        row["flags"] = [f"error:{type(exc).__name__}:{exc}"]
    return row


def _evaluate_star(args):
    return evaluate_point(*args)


def run_scan(spec: ScanSpec, workers: int = 1, progress: Callable[[int, dict], None] | None = None) -> list[dict]:
    """Evaluate every grid point; rows come back in grid order whatever the worker count."""
    jobs = [(spec, pt) for pt in spec.points()]
    rows = []
    if workers <= 1 or len(jobs) <= 1:
        for i, job in enumerate(jobs):
            rows.append(_evaluate_star(job))
            if progress:
                progress(i, rows[-1])
        return rows
    with Pool(processes=workers) as pool:
        for i, row in enumerate(pool.imap(_evaluate_star, jobs, chunksize=1)):
            rows.append(row)
            if progress:
                progress(i, row)
    return rows


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (list, tuple)):
        return ";".join(str(v) for v in x)
    return f"{x:.12g}"


def write_scan_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def read_scan_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                if k in ("scheme",):
                    row[k] = v
                elif k == "flags":
                    row[k] = [f for f in v.split(";") if f]
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


# -- fitting ---------------------------------------------------------------------

@dataclass
class FitResult:
    terms: tuple[str, ...]
    coefficients: np.ndarray
    stderrs: np.ndarray
    residuals: np.ndarray
    residual_norm: float
    condition_number: float
    n_records: int

    def to_model(self) -> EmpiricalModel:
        return EmpiricalModel(tuple(self.terms), tuple(float(c) for c in self.coefficients),
                              tuple(float(s) for s in self.stderrs))

    def as_dict(self) -> dict:
        return {"terms": list(self.terms), "coefficients": self.coefficients.tolist(),
                "stderrs": self.stderrs.tolist(), "residual_norm": self.residual_norm,
                "condition_number": self.condition_number, "n_records": self.n_records}


def design_matrix(records: list[dict], terms) -> np.ndarray:
    cols = []
    for t in terms:
        if t not in TERM_NAMES:
            raise ConfigurationError(f"unknown model term {t!r}")
        cols.append([float(term_value(t, r["g"], r["kappa_c"], r["kappa_i"], r.get("chi_e", math.inf),
                                      r.get("chi_c", math.inf))) for r in records])
    return np.array(cols).T


def fit_model(records: list[dict], terms, response: str = "infidelity") -> FitResult:
    """Unweighted least squares of ``1 - F`` (or ``1 - P_post``) on model terms.

    Rows with a non-finite response are skipped.  Standard errors come from
    the residual variance and ``(X^T X)^{-1}`` via the QR factor.
    """
    key = {"infidelity": "F", "probability": "P_post"}.get(response)
    if key is None:
        raise ConfigurationError("response must be 'infidelity' or 'probability'")
    good = [r for r in records if np.isfinite(r.get(key, math.nan))]
    terms = tuple(terms)
    n, p = len(good), len(terms)
    if n <= p:
        raise FitError(f"need more records ({n}) than terms ({p})")
    X = design_matrix(good, terms)
    y = 1.0 - np.array([r[key] for r in good])
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if np.any(diag <= np.finfo(float).eps * max(X.shape) * diag.max()):
        raise FitError("design matrix is rank deficient")
    coef = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ coef
    dof = n - p
    s2 = float(resid @ resid) / dof
    r_inv = np.linalg.inv(R)
    cov = s2 * (r_inv @ r_inv.T)
    return FitResult(terms, coef, np.sqrt(np.clip(np.diag(cov), 0.0, None)), resid,
                     float(np.linalg.norm(resid)), float(np.linalg.cond(X)), n)
