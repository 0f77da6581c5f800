"""Command-line interface: ``kerrpair {simulate,scan,fit,figures,analytic}``.

Every run reads one JSON document.  Rates are ordinary frequencies in MHz and
pulse lengths are in microseconds.  Unknown keys are rejected and physical
rates have no defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analytics, metrics
from .cascade import run_cascade
from .dynamics import PRESETS, ModelParams, StepperConfig, to_angular, to_mhz
from .errors import ConfigurationError, KerrPairError
from .fitscan import (ScanSpec, cascade_evaluator, fit_model, ideal_tau, optimize_drive, optimize_pulse,
                      read_scan_csv, resolve_tau, run_scan, write_scan_csv)
from .temporal_modes import write_modes_csv

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2
FIGURE_IDS = ("2c", "2d", "2e", "2f", "3b", "3c", "3d", "3e", "3f", "3g", "3h")


# -- config helpers ------------------------------------------------------------

def _rate(value, name: str, allow_inf: bool = False) -> float:
    if isinstance(value, str) and value.lower() in ("inf", "infinity") and allow_inf:
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"field '{name}' must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ConfigurationError(f"field '{name}' must be a finite non-negative number")
    return value


def _check_keys(block: dict, allowed, required, where: str) -> None:
    if not isinstance(block, dict):
        raise ConfigurationError(f"'{where}' must be a JSON object")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown field(s) in '{where}': {', '.join(unknown)}")
    missing = [k for k in required if k not in block]
    if missing:
        raise ConfigurationError(f"missing required field '{where}.{missing[0]}'")


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    if set(cfg) >= {"config", "result"}:
        # a previous result document: replay its resolved configuration
        cfg = cfg["config"]
    return cfg


def jsonable(obj, exact: bool = False):
    """Plain-JSON copy; non-finite floats become the strings ``inf``/``-inf``/``nan``.

    Floats are rounded to 12 significant digits unless ``exact``.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v, exact) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v, exact) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist(), exact)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return x if exact else float(f"{x:.12g}")
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path: Path, data) -> None:
    # the embedded run configuration keeps full precision so it replays exactly
    doc = {k: jsonable(v, exact=(k == "config")) for k, v in data.items()}
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _stepper(block) -> StepperConfig:
    block = block or {}
    _check_keys(block, ("rtol", "atol", "method"), (), "stepper")
    return StepperConfig(**block)


PARAM_KEYS = ("g", "kappa_c", "kappa_i", "chi_e", "chi_c", "n_th", "tau")


def _params(block: dict, scheme: str, need_g: bool = True) -> dict:
    required = ["kappa_c", "kappa_i", "chi_e"] + (["g"] if need_g else [])
    if scheme == "dual_rail":
        required.append("chi_c")
    _check_keys(block, PARAM_KEYS, required, "params")
    out = {}
    for k, v in block.items():
        if k == "tau":
            out[k] = None if v is None else _rate(v, "params.tau")
        else:
            out[k] = _rate(v, f"params.{k}", allow_inf=k in ("chi_e", "chi_c"))
    out.setdefault("chi_c", 0.0)
    out.setdefault("n_th", 0.0)
    out.setdefault("tau", None)
    return out


def _scheme(cfg: dict) -> str:
    scheme = cfg.get("scheme")
    if scheme not in ("single_rail", "dual_rail"):
        raise ConfigurationError("field 'scheme' must be 'single_rail' or 'dual_rail'")
    return scheme


def _layout_name(cfg: dict, scheme: str, override: str | None) -> str:
    name = override or cfg.get("preset") or ("single3" if scheme == "single_rail" else "dual2")
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}")
    if PRESETS[name].scheme != scheme:
        raise ConfigurationError(f"preset {name!r} does not match scheme {scheme!r}")
    return name


def _workers(arg: int | None, cfg: dict) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("KERRPAIR_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"KERRPAIR_WORKERS must be an integer, got {env!r}") from None
    return max(1, int(cfg.get("workers", 1)))


# -- simulate ------------------------------------------------------------------

SIMULATE_KEYS = ("scheme", "preset", "params", "source", "tau_policy", "optimize_g", "g_range",
                 "grid", "stepper", "write_modes", "objective")


def cmd_simulate(cfg: dict, out: Path, preset_override=None, workers=None) -> int:
    _check_keys(cfg, SIMULATE_KEYS, ("scheme", "params"), "config")
    scheme = _scheme(cfg)
    layout = _layout_name(cfg, scheme, preset_override)
    optimize_g = bool(cfg.get("optimize_g", False))
    p = _params(cfg["params"], scheme, need_g=not optimize_g)
    source = cfg.get("source", "numerical")
    objective = cfg.get("objective", "fidelity")
    policy = cfg.get("tau_policy", "fixed" if p["tau"] is None else "given")
    g_range = tuple(cfg.get("g_range", (2.0, 50.0)))
    grid = cfg.get("grid", {})
    _check_keys(grid, ("n_drive", "n_tail", "n_decay"), (), "grid")
    stepper = _stepper(cfg.get("stepper"))
    run_kw = dict(source=source, stepper=stepper, **grid)

    def evaluate(params):
        res = run_cascade(params, layout, **run_kw)
        m = res.metrics()
        m.update(dominant_fraction=res.dominant_fraction, flags=list(res.flags))
        return m

    flags = []
    base = dict(p, g=p.get("g", 1.0))
    tau0 = p["tau"] if p["tau"] is not None else None
    params = ModelParams.from_mhz(base["g"], p["chi_e"], p["kappa_c"], p["kappa_i"], tau=tau0,
                                  chi_c=p["chi_c"], n_th=p["n_th"], scheme=scheme)
    if optimize_g:
        tp = "fixed" if policy == "given" else policy
        opt = optimize_drive(params, scheme, objective, tp, evaluate, layout, g_range_mhz=g_range)
        flags += opt.flags
        params = params.with_(g=opt.x, tau=ideal_tau(opt.x, scheme))
    if policy != "given":
        tau, tflags = resolve_tau(params, scheme, policy, objective, evaluate, layout)
        flags += tflags
        params = params.with_(tau=tau)
    res = run_cascade(params, layout, **run_kw)
    flags += res.flags
    resolved = {"scheme": scheme, "preset": layout, "source": source, "objective": objective,
                "tau_policy": "given", "optimize_g": False, "g_range": list(g_range),
                "params": {"g": to_mhz(params.g), "kappa_c": p["kappa_c"], "kappa_i": p["kappa_i"],
                           "chi_e": p["chi_e"], "chi_c": p["chi_c"], "n_th": p["n_th"], "tau": params.tau},
                "grid": grid, "stepper": {"rtol": stepper.rtol, "atol": stepper.atol, "method": stepper.method},
                "write_modes": bool(cfg.get("write_modes", True))}
    body = res.to_json_dict()
    body["flags"] = flags
    _write_json(out / "result.json", {"config": resolved, "result": body})
    if resolved["write_modes"]:
        for kind, modes in res.temporal_modes.items():
            write_modes_csv(out / f"modes_{kind}.csv", modes, n_modes=4)
    m = body["metrics"]
    print(f"F={m['F']:.6f} P_post={m['P_post']:.6f} P1={m['P1']:.6f} P2={m['P2']:.3e} "
          f"g={to_mhz(params.g):.6g}MHz tau={params.tau:.6g}us flags={','.join(flags) or '-'}")
    return EXIT_FLAGGED if flags else EXIT_OK


# -- scan / fit ----------------------------------------------------------------

SCAN_KEYS = ("scheme", "preset", "axes", "fixed", "objective", "tau_policy", "source", "workers")


def _scan_spec(cfg: dict, preset_override=None) -> ScanSpec:
    _check_keys(cfg, SCAN_KEYS, ("scheme", "axes"), "scan")
    scheme = _scheme(cfg)
    layout = _layout_name(cfg, scheme, preset_override)
    axes = {}
    for name, values in cfg["axes"].items():
        if not isinstance(values, list):
            raise ConfigurationError(f"axis '{name}' must be a list")
        axes[name] = [_rate(v, f"axes.{name}", allow_inf=name in ("chi_e", "chi_c")) for v in values]
    fixed = {k: _rate(v, f"fixed.{k}", allow_inf=k in ("chi_e", "chi_c")) for k, v in cfg.get("fixed", {}).items()}
    return ScanSpec(scheme, axes, fixed, cfg.get("objective", "fidelity"), cfg.get("tau_policy", "fixed"),
                    layout, cfg.get("source", "numerical"))


def _execute_scan(spec: ScanSpec, workers: int) -> list[dict]:
    print(f"scan: {spec.size} grid points on {workers} worker(s)", flush=True)

    def progress(i, row):
        print(f"  [{i + 1}/{spec.size}] g={row['g']:g} F={row['F']:.6f} {';'.join(row['flags'])}", flush=True)

    return run_scan(spec, workers, progress)


def cmd_scan(cfg: dict, out: Path, preset_override=None, workers=None) -> int:
    spec = _scan_spec(cfg, preset_override)
    rows = _execute_scan(spec, _workers(workers, cfg))
    write_scan_csv(rows, out / "scan.csv")
    return EXIT_FLAGGED if any(r["flags"] for r in rows) else EXIT_OK


def cmd_fit(cfg: dict, out: Path, preset_override=None, workers=None, base_dir: Path = Path(".")) -> int:
    _check_keys(cfg, ("scan_csv", "scan", "terms", "response", "workers"), ("terms",), "config")
    if ("scan_csv" in cfg) == ("scan" in cfg):
        raise ConfigurationError("give exactly one of 'scan_csv' or 'scan'")
    if "scan" in cfg:
        rows = _execute_scan(_scan_spec(cfg["scan"], preset_override), _workers(workers, cfg))
        write_scan_csv(rows, out / "scan.csv")
        source = str(out / "scan.csv")
    else:
        path = Path(cfg["scan_csv"])
        source = str(path if path.is_absolute() else base_dir / path)
        rows = read_scan_csv(source)
    response = cfg.get("response", "infidelity")
    fit = fit_model(rows, cfg["terms"], response)
    _write_json(out / "fit.json", {"config": dict(cfg, response=response), "scan_source": source,
                                   "fit": fit.as_dict()})
    for t, c, s in zip(fit.terms, fit.coefficients, fit.stderrs):
        print(f"{t:>10s} = {c:.6g} +/- {s:.3g}")
    return EXIT_OK


# -- analytic ------------------------------------------------------------------

def _args(block: dict, names, op: str, inf_ok=()) -> list[float]:
    _check_keys(block, names, names, f"args ({op})")
    return [_rate(block[n], f"args.{n}", allow_inf=n in inf_ok) for n in names]


def analytic_operation(op: str, args: dict) -> dict:
    """Evaluate a closed-form quantity; rates in ``args`` are in MHz."""
    w = to_angular
    if op == "constants":
        out = {"C_v": analytics.C_V, "C_u1": analytics.C_U1, "C_u2": analytics.C_U2, "C_u3": analytics.C_U3}
        if args:
            g, kc, ki = _args(args, ("g", "kappa_c", "kappa_i"), op)
            c = analytics.perturbation_constants(w(g), w(kc), w(ki))
            out.update({k: getattr(c, k) for k in ("eps_v", "eps_u", "xi_v", "xi_u", "mu_v", "mu_u")})
        return out
    if op == "spdc-best":
        _check_keys(args, (), (), "args")
        return {"fidelity": metrics.spdc_best_fidelity(), "tanh_r": metrics.spdc_best_tanh()}
    if op == "gstar":
        kc, ki, cc = _args(args, ("kappa_c", "kappa_i", "chi_c"), op)
        return {"g_star": analytics.optimal_drive(kc, ki, cc), "g_prob": analytics.probability_optimal_drive(ki, cc)}
    if op == "gstar-single":
        kc, ki, ce = _args(args, ("kappa_c", "kappa_i", "chi_e"), op)
        return {"g_star": analytics.optimal_drive_single(kc, ki, ce)}
    if op == "perturbative":
        g, kc, ki, ce = _args(args, ("g", "kappa_c", "kappa_i", "chi_e"), op, inf_ok=("chi_e",))
        el = analytics.perturbative_elements(w(g), w(kc), w(ki), w(ce))
        return {"fidelity": analytics.perturbative_fidelity(w(g), w(kc), w(ki), w(ce)),
                "r00": el["r00"], "r11": el["r11"], "coherence_re": el["coherence"].real,
                "coherence_im": el["coherence"].imag}
    if op == "perturbative-opt":
        kc, ki, ce = _args(args, ("kappa_c", "kappa_i", "chi_e"), op, inf_ok=("chi_e",))
        g, f, edge = analytics.optimal_perturbative_fidelity(w(kc), w(ki), w(ce))
        return {"g": to_mhz(g), "fidelity": f, "at_edge": edge}
    if op == "empirical-single":
        g, kc, ki, ce = _args(args, ("g", "kappa_c", "kappa_i", "chi_e"), op, inf_ok=("chi_e",))
        return {"fidelity": 1 - float(analytics.empirical_infidelity_single(g, kc, ki, ce))}
    if op == "empirical-dual":
        g, kc, ki, cc = _args(args, ("g", "kappa_c", "kappa_i", "chi_c"), op, inf_ok=("chi_c",))
        p, f = analytics.empirical_dualrail(g, kc, ki, cc)
        return {"P_post": float(p), "F_post": float(f), "beats_spdc": metrics.beats_spdc_dualrail(p, f)}
    if op == "tau-offsets":
        g, kc, ki = _args(args, ("g", "kappa_c", "kappa_i"), op)
        s, d = analytics.optimal_tau_offsets(w(g), w(kc), w(ki))
        return {"tau_single": s, "tau_dual": d, "tau_half": ideal_tau(w(g), "single_rail"),
                "tau_pi": ideal_tau(w(g), "dual_rail")}
    if op == "steady-state-ratio":
        n = args.get("n")
        rest = {k: v for k, v in args.items() if k != "n"}
        if not isinstance(n, int) or n < 0:
            raise ConfigurationError("field 'args.n' must be a non-negative integer")
        d, c, g, ka, kb = _args(rest, ("delta", "chi", "g", "kappa_a", "kappa_b"), op)
        return {"ratio": analytics.steady_state_ratio(n, w(d), w(c), w(g), w(ka), w(kb)),
                "cooperativity": analytics.cooperativity(w(g), w(ka), w(kb))}
    if op == "spdc-dualrail":
        (s,) = _args(args, ("s",), op)
        p, f = metrics.spdc_dualrail_tradeoff(s)
        return {"P_post": float(p), "F_post": float(f)}
    raise ConfigurationError(f"unknown analytic operation {op!r}; choose from {', '.join(ANALYTIC_OPS)}")


ANALYTIC_OPS = ("constants", "spdc-best", "gstar", "gstar-single", "perturbative", "perturbative-opt",
                "empirical-single", "empirical-dual", "tau-offsets", "steady-state-ratio", "spdc-dualrail")


def cmd_analytic(cfg: dict, out: Path | None, operation: str | None = None) -> int:
    _check_keys(cfg, ("operation", "args"), (), "config")
    op = operation or cfg.get("operation")
    if op is None:
        raise ConfigurationError("missing required field 'operation'")
    result = analytic_operation(op, cfg.get("args", {}))
    doc = {"operation": op, "args": cfg.get("args", {}), "result": result}
    print(json.dumps(jsonable(doc), indent=2))
    if out is not None:
        _write_json(out / "analytic.json", doc)
    return EXIT_OK


# -- figures -------------------------------------------------------------------

FIGURE_DEFAULTS = {
    "2c": {"kappa_c": 2.0, "chi_e": 100.0, "kappa_i": [0.0, 0.1, 0.2], "g": [5.0, 10.0, 15.0]},
    "2d": {"sets": [[2.0, 0.0, 100.0], [2.0, 0.1, 100.0], [2.0, 0.2, 50.0]],
           "g": list(np.linspace(2.0, 40.0, 77))},
    "2e": {"kappa_c": 2.0, "kappa_i": [0.0, 0.1, 0.2], "chi_e": [25.0, 50.0, 100.0], "numerical": True},
    "2f": {"g": 10.0, "kappa_c": 2.0, "kappa_i": 0.0, "chi_e": [25.0, 50.0, 100.0]},
    "3b": {"tanh_r": list(np.linspace(0.0, 0.99, 100))},
    "3c": {"kappa_c": 2.0, "kappa_i": 0.5, "chi_c": 200.0, "g": [10.0]},
    "3d": {"kappa_c": 2.0, "kappa_i": [0.5], "chi_c": 200.0, "g": [6.0, 10.0, 14.0], "tau_policy": "formula"},
    "3e": {"g": 10.0, "kappa_c": 2.0, "kappa_i": 0.5, "chi_c": 200.0,
           "tau_factor": [0.8, 0.9, 1.0, 1.1, 1.2]},
    "3f": {"kappa_c": 2.0, "kappa_i": [0.5], "chi_c": 200.0, "g": [6.0, 10.0, 14.0], "tau_policy": "formula"},
    "3g": {"ki_over_kc": list(np.round(np.linspace(0.0, 1.5, 31), 6)),
           "chic_over_kc": list(np.round(np.linspace(1.0, 30.0, 59), 6))},
}
FIGURE_DEFAULTS["3h"] = FIGURE_DEFAULTS["3g"]


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else f"{float(v):.12g}" for v in r])


def _single(g, kc, ki, ce, tau=None):
    return ModelParams.from_mhz(g, ce, kc, ki, tau=tau)


def _dual(g, kc, ki, cc, tau=None):
    return ModelParams.from_mhz(g, math.inf, kc, ki, tau=tau, chi_c=cc, scheme="dual_rail")


def _crossover_surface(s: dict):
    rows, boundary = [], []
    for r in s["ki_over_kc"]:
        edge = math.nan
        for c in s["chic_over_kc"]:
            g = analytics.optimal_drive(1.0, r, c)
            p, f = analytics.empirical_dualrail(g, 1.0, r, c)
            beats = metrics.beats_spdc_dualrail(float(p), float(f))
            rows.append((r, c, g, p, f, int(beats)))
            if beats and math.isnan(edge):
                edge = c
        boundary.append((r, edge))
    return rows, boundary


def crossover_boundary(ki_over_kc) -> float:
    """Smallest ``chi_c/kappa_c`` on a fine grid where the model beats dual-rail SPDC."""
    _, b = _crossover_surface({"ki_over_kc": [ki_over_kc], "chic_over_kc": list(np.arange(0.5, 60.0, 0.05))})
    return b[0][1]


def make_figure(fid: str, settings: dict, out: Path) -> list[str]:
    """Write the data series of one figure; returns the flags raised."""
    if fid not in FIGURE_IDS:
        raise ConfigurationError(f"unknown figure id {fid!r}; choose from {', '.join(FIGURE_IDS)}")
    s = dict(FIGURE_DEFAULTS[fid])
    _check_keys(settings, s.keys(), (), f"settings.{fid}")
    s.update(settings)
    flags = []
    path = out / f"fig{fid}.csv"
    if fid == "2c":
        rows = []
        for ki in s["kappa_i"]:
            for g in s["g"]:
                p = _single(g, s["kappa_c"], ki, s["chi_e"])
                res = optimize_pulse(p, "single_rail")
                flags += res.flags
                pred, _ = analytics.optimal_tau_offsets(p.g, p.kappa_oc, p.kappa_oi)
                t0 = ideal_tau(p.g, "single_rail")
                rows.append((ki, g, t0, res.x, res.x - t0, pred - t0, res.value))
        _write_rows(path, ("kappa_i", "g", "tau_ideal", "tau_star", "delta_tau", "delta_tau_formula", "F_star"), rows)
    elif fid == "2d":
        rows = []
        for kc, ki, ce in s["sets"]:
            gs = analytics.optimal_drive_single(kc, ki, ce)
            for g in list(s["g"]) + [gs]:
                rows.append((kc, ki, ce, g, 1 - float(analytics.empirical_infidelity_single(g, kc, ki, ce)),
                             int(g == gs)))
        _write_rows(path, ("kappa_c", "kappa_i", "chi_e", "g", "F", "is_g_star"), rows)
    elif fid == "2e":
        rows = []
        kc = s["kappa_c"]
        for ki in s["kappa_i"]:
            for ce in s["chi_e"]:
                g, fp, _ = analytics.optimal_perturbative_fidelity(to_angular(kc), to_angular(ki), to_angular(ce))
                rows.append(("perturbative", ki, ce, to_mhz(g), fp))
                if s["numerical"]:
                    gs = analytics.optimal_drive_single(kc, ki, ce)
                    p = _single(gs, kc, ki, ce)
                    tau, _ = resolve_tau(p, "single_rail", "formula")
                    res = run_cascade(p.with_(tau=tau), "single3")
                    flags += res.flags
                    rows.append(("numerical", ki, ce, gs, res.metrics()["F"]))
        for ce in s["chi_e"]:
            rows.append(("spdc", 0.0, ce, 0.0, metrics.SPDC_BEST_FIDELITY))
        _write_rows(path, ("series", "kappa_i", "chi_e", "g", "F"), rows)
    elif fid == "2f":
        rows = [("tmsv", 0.0, math.nan, math.nan, metrics.blockade_ratio(metrics.tmsv_state(math.pi / 4, 8)))]
        for ce in s["chi_e"]:
            res = run_cascade(_single(s["g"], s["kappa_c"], s["kappa_i"], ce), "single3")
            flags += res.flags
            m = res.metrics()
            rows.append(("cascade", ce, m["P1"], m["P2"], m["blockade_ratio"]))
        _write_rows(path, ("series", "chi_e", "P1", "P2", "ratio"), rows)
    elif fid == "3b":
        t = np.asarray(s["tanh_r"], dtype=float)
        p, f = metrics.spdc_dualrail_tradeoff(t ** 2)
        _write_rows(path, ("tanh_r", "P_post", "F_post"), zip(t, p, f))
    elif fid == "3c":
        rows = []
        for g in s["g"]:
            p = _dual(g, s["kappa_c"], s["kappa_i"], s["chi_c"])
            res = optimize_pulse(p, "dual_rail", "probability")
            flags += res.flags
            _, pred = analytics.optimal_tau_offsets(p.g, p.kappa_oc, p.kappa_oi)
            t0 = ideal_tau(p.g, "dual_rail")
            rows.append((g, t0, res.x, res.x - t0, pred - t0, res.value))
        _write_rows(path, ("g", "tau_ideal", "tau_star", "delta_tau", "delta_tau_formula", "P_star"), rows)
    elif fid in ("3d", "3f"):
        rows = []
        ev = cascade_evaluator("dual2")
        for ki in s["kappa_i"]:
            for g in s["g"]:
                p = _dual(g, s["kappa_c"], ki, s["chi_c"])
                tau, tf = resolve_tau(p, "dual_rail", s["tau_policy"], "probability", ev, "dual2")
                m = ev(p.with_(tau=tau))
                flags += tf + m["flags"]
                rows.append((ki, g, tau, m["P_post"], m["F"]))
        _write_rows(path, ("kappa_i", "g", "tau", "P_post", "F_post"), rows)
    elif fid == "3e":
        rows = []
        ev = cascade_evaluator("dual2")
        base = _dual(s["g"], s["kappa_c"], s["kappa_i"], s["chi_c"])
        for fac in s["tau_factor"]:
            m = ev(base.with_(tau=fac * base.tau))
            flags += m["flags"]
            rows.append((fac, fac * base.tau, m["P_post"], m["F"]))
        _write_rows(path, ("tau_factor", "tau", "P_post", "F_post"), rows)
    else:
        rows, boundary = _crossover_surface(s)
        col = "F_post" if fid == "3g" else "P_post"
        keep = 4 if fid == "3g" else 3
        _write_rows(path, ("ki_over_kc", "chic_over_kc", "g_star", col, "beats_spdc"),
                    [(r[0], r[1], r[2], r[keep], r[5]) for r in rows])
        _write_rows(out / f"fig{fid}_boundary.csv", ("ki_over_kc", "chic_over_kc_min"), boundary)
    return sorted(set(flags))


def cmd_figures(cfg: dict, out: Path) -> int:
    _check_keys(cfg, ("figures", "settings"), ("figures",), "config")
    settings = cfg.get("settings", {})
    unknown = sorted(set(settings) - set(cfg["figures"]))
    if unknown:
        raise ConfigurationError(f"settings given for figures not requested: {', '.join(unknown)}")
    flagged = False
    for fid in cfg["figures"]:
        fl = make_figure(str(fid), settings.get(fid, {}), out)
        print(f"figure {fid}: written{' flags=' + ','.join(fl) if fl else ''}", flush=True)
        flagged |= bool(fl)
    return EXIT_FLAGGED if flagged else EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kerrpair", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "scan", "fit", "figures", "analytic"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name != "analytic", help="JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory (created if missing)")
        sp.add_argument("--workers", type=int, default=None, help="parallel cascade runs (scan, fit)")
        sp.add_argument("--preset", choices=sorted(PRESETS), default=None, help="truncation preset")
        if name == "analytic":
            sp.add_argument("operation", nargs="?", choices=ANALYTIC_OPS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        out = Path(args.out) if args.out else None
        if args.command != "analytic":
            out = out or Path("kerrpair_out")
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.preset, args.workers)
        if args.command == "scan":
            return cmd_scan(cfg, out, args.preset, args.workers)
        if args.command == "fit":
            return cmd_fit(cfg, out, args.preset, args.workers, base_dir=Path(args.config).parent)
        if args.command == "figures":
            return cmd_figures(cfg, out)
        return cmd_analytic(cfg, out, args.operation)
    except (KerrPairError, ValueError, TypeError) as exc:
        print(f"kerrpair: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
