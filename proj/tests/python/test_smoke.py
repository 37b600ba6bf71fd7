import json
import math
import os
import pathlib

import numpy as np
import pytest

import wqgamm

FIXTURE_CONFIG = pathlib.Path(
    os.environ.get("WQGAMM_FIXTURE_CONFIG", pathlib.Path(__file__).parents[2] / "data/synthetic/run.conf")
)
SCHEMA = pathlib.Path(
    os.environ.get("WQGAMM_SCHEMA", pathlib.Path(__file__).parents[2] / "schemas/report.schema.json")
)


def test_aaic():
    assert wqgamm.aaic(100, 1.0, 5) == 10.0
    assert wqgamm.aaic(200, math.e, 3) == pytest.approx(206.0)
    with pytest.raises(wqgamm.Error):
        wqgamm.aaic(10, 0.0, 1)


def test_simulated_frame_and_basis():
    frame = wqgamm.simulate(seed=3, n=400)
    assert len(frame) == 400
    assert frame.valid_count() == 400
    assert {"temp", "cond", "do", "elevation", "time_days"} <= set(frame.covariates)
    design, penalty = wqgamm.tprs_basis(frame.covariates["temp"], 7)
    assert design.shape == (400, 6)
    assert penalty.shape == (6, 6)
    assert np.allclose(design.sum(axis=0), 0.0, atol=1e-8)
    assert np.allclose(penalty, penalty.T)


def test_vif_sentinel():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=200), rng.normal(size=200)
    out = dict(wqgamm.vif([("a", a.tolist()), ("b", b.tolist()), ("a2", a.tolist())]))
    assert math.isinf(out["a"]) and math.isinf(out["a2"])
    assert math.isfinite(out["b"])


def test_arma_loglik_matches_statsmodels():
    statsmodels = pytest.importorskip("statsmodels.tsa.arima.model")
    rng = np.random.default_rng(2)
    n = 300
    eps = rng.normal(scale=0.5, size=n + 100)
    y = np.zeros(n + 100)
    for t in range(2, n + 100):
        y[t] = 1.2 * y[t - 1] - 0.5 * y[t - 2] + eps[t] + 0.4 * eps[t - 1]
    y = y[100:]
    y[[10, 11, 50, 200]] = np.nan
    ours = wqgamm.arma_loglik(list(y), [1.2, -0.5], [0.4], 0.25)
    model = statsmodels.ARIMA(y, order=(2, 0, 1), trend="n")
    ref = model.loglike(np.array([1.2, -0.5, 0.4, 0.25]))
    assert ours == pytest.approx(ref, rel=1e-6)


def test_fit_gam_and_order_selection():
    frame = wqgamm.simulate(seed=4, n=1500)
    gam = wqgamm.fit_gam(frame, ["temp", "cond", "noise"])
    names = [t["covariate"] for t in gam["terms"]]
    assert "temp" in names and "cond" in names
    assert gam["stepwise"][0]["action"] == "start"
    sel = wqgamm.select_order([None if i % 97 == 0 else v for i, v in enumerate(frame.response)], 1, 1)
    assert len(sel["grid"]) == 4


def test_run_config_writes_a_schema_valid_report(tmp_path):
    jsonschema = pytest.importorskip("jsonschema")
    report = wqgamm.run_config(FIXTURE_CONFIG, tmp_path)
    schema = json.loads(SCHEMA.read_text())
    jsonschema.validate(report, schema)
    on_disk = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(on_disk, schema)
    assert on_disk == report
    assert report["gamm"]["de_total"] >= 0.95
    assert (tmp_path / "summary.svg").exists()
    assert (tmp_path / "diel.svg").exists()
    assert len(list((tmp_path / "smooths").glob("*.svg"))) == len(report["gam"]["terms"])


def test_empty_input_is_a_data_error(tmp_path):
    (tmp_path / "empty.csv").write_text("")
    (tmp_path / "run.conf").write_text("[input]\nwide = empty.csv\n")
    with pytest.raises(wqgamm.DataError, match="ingest"):
        wqgamm.load_frame(str(tmp_path / "run.conf"))
