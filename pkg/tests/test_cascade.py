import math

import numpy as np
import pytest

from kerrpair.analytics import perturbation_constants
from kerrpair.cascade import cascade_window, decay_channel_probe, run_cascade
from kerrpair.dynamics import ModelParams
from kerrpair.errors import ConfigurationError

from oracles import MICROWAVE_TABLE, OPTICAL_TABLE, expected_matrix

PROBE_PARAMS = [ModelParams.from_mhz(10, 100, 2, 0), ModelParams.from_mhz(8, 100, 1.5, 0.4)]


@pytest.mark.parametrize("params", PROBE_PARAMS, ids=["lossless", "lossy"])
@pytest.mark.parametrize("entry", sorted(OPTICAL_TABLE), ids=str)
def test_optical_ringdown_table(params, entry):
    c = perturbation_constants(params.g, params.kappa_oc, params.kappa_oi)
    got = decay_channel_probe(*entry, params, "optical", dims=(4, 4))
    assert np.max(np.abs(got - expected_matrix(OPTICAL_TABLE[entry], c.xi_v, c.eps_v, 4))) < 1e-6


@pytest.mark.parametrize("params", PROBE_PARAMS, ids=["lossless", "lossy"])
@pytest.mark.parametrize("entry", sorted(MICROWAVE_TABLE), ids=str)
def test_microwave_ringdown_table(params, entry):
    c = perturbation_constants(params.g, params.kappa_ec, params.kappa_ei)
    got = decay_channel_probe(*entry, params, "microwave", dims=(4, 4))
    assert np.max(np.abs(got - expected_matrix(MICROWAVE_TABLE[entry], c.xi_u, c.eps_u, 4))) < 1e-6


def test_probe_rejects_unknown_side():
    with pytest.raises(ConfigurationError):
        decay_channel_probe((0, 0), (0, 0), PROBE_PARAMS[0], side="thermal")


@pytest.fixture(scope="module")
def table_point():
    return run_cascade(ModelParams.from_mhz(10, 100, 2, 0), "single3")


def test_cascade_output_state(table_point):
    res = table_point
    rho = res.rho_out
    assert rho.trace().real == pytest.approx(1.0, abs=1e-6)
    assert rho.hermiticity_error() < 1e-8
    assert rho.min_eigenvalue() > -1e-6
    assert res.complete and not res.flags
    m = res.metrics()
    assert m["F"] == pytest.approx(0.991, abs=2e-3)
    assert m["blockade_ratio"] < 1e-2
    assert res.dominant_fraction > 0.9


def test_captured_photons_match_mode_occupations(table_point):
    res = table_point
    for kind, captured in zip("vu", res.captured_photons):
        assert captured == pytest.approx(res.modes[kind].occupations[0], abs=2e-3)


def test_json_dict_roundtrip_fields(table_point):
    d = table_point.to_json_dict()
    assert d["scheme"] == "single_rail"
    assert len(d["rho_out"]["real"]) == 9
    assert d["params_mhz"]["g"] == pytest.approx(10.0)


def test_analytic_capture_close_to_numerical(table_point):
    res = run_cascade(ModelParams.from_mhz(10, 100, 2, 0), "single3", source="analytic")
    assert res.metrics()["F"] == pytest.approx(table_point.metrics()["F"], abs=5e-3)


def test_undriven_system_gives_vacuum():
    res = run_cascade(ModelParams.from_mhz(0, 100, 2, 0, tau=0.05), "single3")
    assert res.metrics()["F"] == pytest.approx(0.5, abs=1e-9)
    assert res.metrics()["blockade_ratio"] == math.inf


def test_cascade_argument_errors():
    p = ModelParams.from_mhz(10, 100, 2, 0)
    with pytest.raises(ConfigurationError):
        run_cascade(p, "single3", source="magic")
    with pytest.raises(ConfigurationError):
        cascade_window(p.with_(kappa_oc=0.0, kappa_oi=0.0))
    with pytest.raises(ConfigurationError):
        run_cascade(p, "dual2", source="analytic")
