import math

import numpy as np
import pytest

import cnnide


def test_simulate_shapes_and_flow():
    out = cnnide.simulate(n=16, T=5, amplitude=1.0, direction_deg=0.0, seed=3)
    assert out["frames"].shape == (5, 16, 16)
    assert out["flow_x"].shape == (4, 16, 16)
    # one cell per step eastward on the unit square
    assert np.allclose(out["flow_x"], 1.0 / 16)
    assert np.allclose(out["flow_y"], 0.0)
    peak_cols = [np.unravel_index(np.argmax(f), f.shape)[1] for f in out["frames"]]
    assert np.all(np.diff(peak_cols) == 1)


def test_transition_rows_and_shift():
    n = 16
    w = 1.0 / n
    K = cnnide.transition_matrix(np.full(n * n, 1e-5), np.full(n * n, w), np.zeros(n * n))
    assert K.shape == (n * n, n * n)
    e = np.zeros(n * n)
    e[7 * n + 5] = 1.0
    assert np.argmax(K @ e) == 7 * n + 6


def test_scores():
    assert cnnide.crps_ensemble([0.0, 2.0], 1.0) == pytest.approx(0.5)
    assert cnnide.quantile([1.0, 2.0, 3.0, 4.0, 5.0], 0.05) == pytest.approx(1.2)
    lo, hi = np.array([-1.0]), np.array([1.0])
    assert cnnide.interval_score_90(lo, hi, np.array([-1.5])) == pytest.approx(12.0)
    assert cnnide.coverage_90(lo, hi, np.array([0.3])) == 1.0
    assert cnnide.gaspari_cohn(0.0, 0.15) == 1.0
    assert cnnide.gaspari_cohn(0.3, 0.15) == 0.0


def test_errors_carry_codes():
    with pytest.raises(cnnide.CnnideError) as info:
        cnnide.RunConfig("bogus = 1\n")
    assert info.value.code == "ConfigError"
    with pytest.raises(cnnide.CnnideError) as info:
        cnnide.read_sequence("/nonexistent/file.ideq")
    assert info.value.code == "FileError"


def test_sequence_round_trip(tmp_path):
    frames = np.random.default_rng(0).normal(size=(3, 8, 8))
    path = str(tmp_path / "f.ideq")
    cnnide.write_sequence(path, frames)
    back, records = cnnide.read_sequence(path)
    assert np.array_equal(back, frames)
    assert records == [(0.0, 1.0)] * 3


def test_pipeline_end_to_end(tmp_path):
    cfg = cnnide.RunConfig(
        "grid.n = 8\nmodel.r = 4\nmodel.filters = 4, 8\nmodel.patch = 3\ntrain.batch = 4\n"
        "train.max_epochs = 2\nenkf.n_members = 8\nsim.T = 40\nsim.forcing_rho = 0.1\nobs.fraction = 0.5\n"
    )
    d = str(tmp_path)
    cnnide.pipeline.simulate(cfg, d + "/sim")
    epochs = cnnide.pipeline.train(cfg, [d + "/sim/frames.ideq"], d + "/ck1")
    assert 1 <= len(epochs) <= 2
    sigma2, rho = cnnide.pipeline.fit_residuals(cfg, d + "/ck1", [d + "/sim/frames.ideq"], d + "/ck2")
    assert sigma2 > 0 and rho > 0
    cnnide.pipeline.filter(cfg, d + "/ck2", d + "/sim/obs.csv", d + "/filt", steps=5)
    cnnide.pipeline.forecast(cfg, d + "/ck2", d + "/filt/state", 2, d + "/fc")
    scores = cnnide.pipeline.evaluate(
        cfg, d + "/sim/frames.ideq", [d + "/filt/forecast", d + "/filt/persistence"], d + "/eval"
    )
    assert set(scores) == {"cnn-ide", "persistence"}
    assert all(math.isfinite(s["rmspe"]) for s in scores.values())
    flow = cnnide.pipeline.extract_flow(cfg, d + "/ck2", d + "/sim/frames.ideq")
    assert flow.startswith("pixel_row,pixel_col,theta1")
    assert flow.count("\n") == 65
