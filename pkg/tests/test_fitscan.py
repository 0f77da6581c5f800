import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from kerrpair import analytics, fitscan
from kerrpair.cascade import run_cascade
from kerrpair.dynamics import ModelParams
from kerrpair.errors import ConfigurationError, FitError
from kerrpair.fock import DensityMatrix, FockBasis
from kerrpair.metrics import bell_fidelity

TERMS = ("kc/g", "ki/g", "ki/k", "g2/chie2")


def synthetic_records(coefs, seed=0, n=40):
    rng = np.random.default_rng(seed)
    recs = []
    for _ in range(n):
        r = dict(g=rng.uniform(5, 30), kappa_c=rng.uniform(0.5, 5), kappa_i=rng.uniform(0, 1.5),
                 chi_e=rng.uniform(40, 200), chi_c=math.inf)
        infid = sum(c * analytics.term_value(t, r["g"], r["kappa_c"], r["kappa_i"], r["chi_e"])
                    for t, c in zip(TERMS, coefs))
        r["F"] = 1.0 - float(infid)
        recs.append(r)
    return recs


@settings(max_examples=20)
@given(st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4), st.integers(0, 10_000))
def test_noiseless_recovery(coefs, seed):
    fit = fitscan.fit_model(synthetic_records(coefs, seed), TERMS)
    assert np.allclose(fit.coefficients, coefs, atol=1e-9, rtol=0)
    assert fit.residual_norm < 1e-9


def test_residuals_orthogonal_to_design():
    recs = synthetic_records((0.02, 0.36, 0.68, 0.18))
    rng = np.random.default_rng(3)
    for r in recs:
        r["F"] += rng.normal(scale=1e-3)
    fit = fitscan.fit_model(recs, TERMS)
    X = fitscan.design_matrix(recs, TERMS)
    assert np.max(np.abs(X.T @ fit.residuals)) < 1e-10
    assert np.all(fit.stderrs > 0)
    model = fit.to_model()
    assert model.values == pytest.approx(tuple(fit.coefficients))


def test_fit_errors():
    recs = synthetic_records((0.1, 0.2, 0.3, 0.4), n=3)
    with pytest.raises(FitError):
        fitscan.fit_model(recs, TERMS)
    # kc/g and ki/g collinear when kappa_i tracks kappa_c
    recs = synthetic_records((0.1, 0.2, 0.3, 0.4))
    for r in recs:
        r["kappa_i"] = 0.5 * r["kappa_c"]
    with pytest.raises(FitError):
        fitscan.fit_model(recs, ("kc/g", "ki/g"))
    with pytest.raises(ConfigurationError):
        fitscan.fit_model(recs, ("nope",))
    with pytest.raises(ConfigurationError):
        fitscan.fit_model(recs, TERMS, response="phase")


def test_fit_skips_failed_rows():
    recs = synthetic_records((0.1, 0.2, 0.3, 0.4))
    recs.append(dict(recs[0], F=math.nan))
    assert fitscan.fit_model(recs, TERMS).n_records == len(recs) - 1


def test_scan_spec_validation():
    with pytest.raises(ConfigurationError):
        fitscan.ScanSpec("single_rail", {"gamma": [1]}, {"kappa_c": 1, "kappa_i": 0, "chi_e": 100})
    with pytest.raises(ConfigurationError):
        fitscan.ScanSpec("single_rail", {"g": [1]}, {"kappa_c": 1, "kappa_i": 0})
    with pytest.raises(ConfigurationError):
        fitscan.ScanSpec("single_rail", {"g": [1]}, {"g": 1, "kappa_c": 1, "kappa_i": 0, "chi_e": 1})
    with pytest.raises(ConfigurationError):
        fitscan.ScanSpec("single_rail", {"g": []}, {"kappa_c": 1, "kappa_i": 0, "chi_e": 1})
    with pytest.raises(ConfigurationError):
        fitscan.ScanSpec("triple_rail", {"g": [1]}, {})
    spec = fitscan.ScanSpec("single_rail", {"g": [1, 2], "chi_e": [50, 100, 150]}, {"kappa_c": 1, "kappa_i": 0})
    pts = spec.points()
    assert spec.size == 6 == len(pts)
    assert [p["chi_e"] for p in pts[:3]] == [50, 100, 150]
    assert spec.layout_name == "single3"


def test_single_point_scan_matches_cascade():
    spec = fitscan.ScanSpec("single_rail", {"g": [10.0]}, {"kappa_c": 2.0, "kappa_i": 0.0, "chi_e": 100.0})
    row = fitscan.run_scan(spec)[0]
    res = run_cascade(ModelParams.from_mhz(10, 100, 2, 0), "single3")
    assert row["F"] == res.metrics()["F"]
    assert row["tau"] == res.params.tau
    assert row["flags"] == res.flags


def test_scan_deterministic_across_workers(tmp_path):
    spec = fitscan.ScanSpec("single_rail", {"g": [8.0, 12.0]}, {"kappa_c": 2.0, "kappa_i": 0.2, "chi_e": 100.0},
                            tau_policy="fixed", source="analytic")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    fitscan.write_scan_csv(fitscan.run_scan(spec, workers=1), a)
    fitscan.write_scan_csv(fitscan.run_scan(spec, workers=2), b)
    assert a.read_bytes() == b.read_bytes()
    rows = fitscan.read_scan_csv(a)
    assert [r["g"] for r in rows] == [8.0, 12.0]
    assert all(0.5 < r["F"] < 1 for r in rows)


def test_scan_records_errors_as_flags():
    spec = fitscan.ScanSpec("dual_rail", {"g": [10.0]}, {"kappa_c": 2.0, "kappa_i": 0.0, "chi_c": 200.0},
                            source="analytic")
    row = fitscan.run_scan(spec)[0]
    assert math.isnan(row["F"])
    assert row["flags"][0].startswith("error:ConfigurationError")


def test_scan_csv_roundtrip(tmp_path):
    rows = [dict(scheme="single_rail", g=10.0, kappa_c=2.0, kappa_i=0.1, chi_e=math.inf, chi_c=0.0, tau=0.0125,
                 F=0.123456789012345, P_post=math.nan, P1=0.4, P2=1e-5, dominant_fraction=0.97,
                 flags=["multimode_u", "incomplete"])]
    path = tmp_path / "s.csv"
    fitscan.write_scan_csv(rows, path)
    back = fitscan.read_scan_csv(path)[0]
    assert back["flags"] == ["multimode_u", "incomplete"]
    assert back["chi_e"] == math.inf and math.isnan(back["P_post"])
    assert back["F"] == pytest.approx(rows[0]["F"], rel=1e-11)
    assert b"\r" not in path.read_bytes()


# -- optimisers -------------------------------------------------------------------

def closed_pair_evaluator(params):
    # blockaded pair source without loss: |00> <-> |11> Rabi oscillation
    h = params.g * np.array([[0, 1], [1, 0]], dtype=complex)
    amp = expm(-1j * h * params.tau) @ np.array([1, 0], dtype=complex)
    basis = FockBasis((2, 2))
    psi = np.zeros(4, dtype=complex)
    psi[0], psi[3] = amp
    m = bell_fidelity(DensityMatrix.from_ket(basis, psi))
    return {"F": m.fidelity, "P_post": math.nan}


@pytest.mark.parametrize("g_mhz", [3.0, 10.0, 25.0])
def test_pulse_optimum_closed_system(g_mhz):
    p = ModelParams.from_mhz(g_mhz, math.inf, 0.0, 0.0)
    res = fitscan.optimize_pulse(p, evaluate=closed_pair_evaluator, rel_tol=1e-6)
    assert res.x == pytest.approx(math.pi / (4 * p.g), rel=1e-4)
    assert res.value == pytest.approx(1.0, abs=1e-9)
    assert not res.flags
    doubled = fitscan.optimize_pulse(p.with_(g=2 * p.g), evaluate=closed_pair_evaluator, rel_tol=1e-6)
    assert doubled.x == pytest.approx(res.x / 2, rel=1e-4)


def test_pulse_bracket_edge_flag():
    p = ModelParams.from_mhz(10.0, math.inf, 0.0, 0.0)
    res = fitscan.optimize_pulse(p, evaluate=lambda q: {"F": q.tau})
    assert res.flags == ["bracket_edge"]
    widened = fitscan.optimize_pulse(p, evaluate=lambda q: {"F": -(q.tau - 1.7 * math.pi / (4 * q.g)) ** 2})
    assert widened.flags == ["bracket_widened"]


def test_drive_optimum_matches_closed_form():
    kc, ki, chi = 2.0, 0.1, 100.0

    def model(params):
        # the empirical model is homogeneous of degree zero in the rates
        return {"F": 1 - float(analytics.empirical_infidelity_single(params.g, params.kappa_oc, params.kappa_oi,
                                                                     params.chi_e))}

    res = fitscan.optimize_drive(ModelParams.from_mhz(10.0, chi, kc, ki), evaluate=model, rel_tol=1e-6)
    expected = analytics.optimal_drive_single(kc, ki, chi) * 2 * math.pi
    assert res.x == pytest.approx(expected, rel=1e-3)


def test_tau_policies():
    p = ModelParams.from_mhz(10.0, 100.0, 2.0, 0.5)
    tau, flags = fitscan.resolve_tau(p, "single_rail", "fixed")
    assert tau == pytest.approx(math.pi / (4 * p.g)) and not flags
    tau_f, _ = fitscan.resolve_tau(p, "single_rail", "formula")
    assert tau_f == pytest.approx(analytics.optimal_tau_offsets(p.g, p.kappa_oc, p.kappa_oi)[0])
    with pytest.raises(ConfigurationError):
        fitscan.resolve_tau(p, "single_rail", "guess")
