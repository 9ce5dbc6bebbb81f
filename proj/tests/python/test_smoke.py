import json

import numpy as np
import pytest

import mvtlab


def test_three_version_identity_holds_exactly():
    report = mvtlab.verify_identity(mvtlab.Scenario.fixture("three_version"))
    assert report["pass"]
    assert report["lhs"] == pytest.approx(-1.4, abs=1e-12)
    assert report["abs_diff"] <= 1e-10


def test_direct_effect_breaks_chain_at_independence_and_redefinition_repairs_it():
    base = mvtlab.Scenario.fixture("discrete_reflective")
    broken = base.with_violation("direct_indicator_effect", [0], 0.3)
    assert not mvtlab.verify_identity(broken)["pass"]
    chain = mvtlab.derivation_chain(broken, 2, 1)
    assert chain["first_break"] == "independence"
    assert chain["break_index"] == 2
    fixed = broken.redefine("include_indicators")
    assert mvtlab.verify_identity(fixed)["abs_diff"] <= 1e-10


def test_scenario_json_round_trip():
    s = mvtlab.Scenario.fixture("structural_reflective")
    again = mvtlab.Scenario.from_json(s.to_json())
    assert again == s
    assert again.hash == s.hash
    assert "three_version" in mvtlab.fixture_names()


def test_sampling_is_reproducible_by_seed():
    s = mvtlab.Scenario.fixture("structural_reflective")
    a = mvtlab.sample(s, 500, 11)
    b = mvtlab.sample(s, 500, 11)
    c = mvtlab.sample(s, 500, 12)
    assert a.keys() == b.keys()
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])
    assert not np.array_equal(a["Y"], c["Y"])


def test_factor_fit_recovers_exact_loadings():
    lam = np.array([0.9, 0.8, 0.7, 0.6])
    cov = np.outer(lam, lam) + np.diag(1 - lam**2)
    fit = mvtlab.fit_one_factor(cov)
    np.testing.assert_allclose(fit["loadings"], lam, atol=1e-7)
    assert fit["rmsr"] < 1e-8
    assert not fit["heywood"]


def test_library_errors_surface_as_mvtlab_error():
    with pytest.raises(mvtlab.Error, match="NonPSDInput"):
        mvtlab.fit_one_factor(np.array([[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    with pytest.raises(mvtlab.Error, match="InvalidParameter"):
        mvtlab.Scenario.fixture("no_such_fixture")


def test_proportionality_test_on_reflective_data():
    s = mvtlab.Scenario.fixture("structural_reflective")
    data = mvtlab.sample(s, 3000, 5)
    covariates = [k for k in data if k.startswith("C_")]
    out = mvtlab.proportionality_test(data, "Y", covariates, seed=1)
    assert out["df"] == 3
    assert 0.0 <= out["p_value"] <= 1.0


def test_longitudinal_oracle():
    s = mvtlab.Scenario.fixture("two_wave_confounding")
    slopes = mvtlab.analytic_bias(s, 0)
    assert slopes["naive"] == pytest.approx(0.1, abs=1e-12)
    assert slopes["current_plus_prior"] == pytest.approx(0.0, abs=1e-12)


def test_run_config_writes_identical_reports(tmp_path):
    config = json.dumps({"kind": "scenario_battery", "battery": {"count": 5}, "seed": 3})
    first = mvtlab.run_config(config, out_dir=str(tmp_path / "a"))
    second = mvtlab.run_config(config, out_dir=str(tmp_path / "b"))
    assert first["pass"]
    assert first["config_hash"] == second["config_hash"]
    for x, y in zip(first["files"], second["files"]):
        assert open(x, "rb").read() == open(y, "rb").read()
