"""Open-loop evaluation tests.

The pivotal oracle: feeding the evaluator the plant's true parameters on
a lag-free log must reproduce the log exactly, because commanded-input
replay then reapplies the very inputs that generated it.
"""

import csv
import json

import numpy as np
import pytest

from racedyn.estimator import AppliedInput, NetworkConfig
from racedyn.evaluation import (
    evaluate_open_loop,
    max_abs_err,
    rmse,
    write_error_trace_csv,
    write_report_json,
    write_window_csv,
)
from racedyn.generate import (
    GeneratorConfig,
    generate,
    tabletop_geometry,
    tabletop_params,
    without_actuator_lag,
)
from racedyn.guard import sim_profile
from racedyn.telemetry import TelemetrySeries


class ConstantLatentNetwork:
    """Test double: ignores features and always emits fixed latents."""

    def __init__(self, config, latents):
        self.config = config
        self.latents = np.asarray(latents, dtype=float)

    def forward(self, features, train=False):
        return np.tile(self.latents, (features.shape[0], 1)), None


def latents_for(params, bounds):
    """Inverse of the bound projection for strictly interior parameters."""
    frac = (params - bounds.lo) / (bounds.hi - bounds.lo)
    return np.log(frac / (1.0 - frac))


CONFIG = NetworkConfig(history_len=12, gru_layers=1, gru_hidden=4,
                       dense_widths=(4,))


@pytest.fixture(scope="module")
def lag_free_series():
    return generate(without_actuator_lag(
        GeneratorConfig(track="stadium", laps=2, seed=3)))


@pytest.fixture(scope="module")
def truth_network():
    bounds = sim_profile()
    z = latents_for(tabletop_params().to_vector(), bounds)
    return ConstantLatentNetwork(CONFIG, z)


class TestMetrics:
    def test_rmse_and_max_abs(self):
        pred = np.array([[1.0, 2.0], [3.0, 5.0]])
        truth = np.array([[1.0, 1.0], [3.0, 1.0]])
        assert rmse(pred, truth) == pytest.approx(np.sqrt((1 + 16) / 4))
        assert np.allclose(rmse(pred, truth, axis=0),
                           [0.0, np.sqrt((1 + 16) / 2)])
        assert max_abs_err(pred, truth) == 4.0


class TestTrueParameters:
    def test_near_perfect_replay(self, lag_free_series, truth_network):
        """True parameters + commanded replay on a lag-free log leave only
        the round-trip error of inverting the bound projection."""
        report = evaluate_open_loop(truth_network, sim_profile(),
                                    lag_free_series, tabletop_geometry(),
                                    horizon=50)
        assert report.excluded == 0
        assert report.ade < 1e-9
        assert report.fde < 1e-9
        assert np.all(report.state_rmse < 1e-9)
        # The constant-velocity baseline drifts off every corner.
        assert report.baseline_ade > 1000 * max(report.ade, 1e-12)
        assert report.baseline_ade > 0.01

    def test_window_accounting(self, lag_free_series, truth_network):
        n = len(lag_free_series)
        report = evaluate_open_loop(truth_network, sim_profile(),
                                    lag_free_series, tabletop_geometry(),
                                    horizon=50)
        assert report.windows + report.excluded == n - 12 - 50 + 1
        assert report.step_pos_err.shape == (report.windows, 50)
        assert report.step_state_err.shape == (report.windows, 50, 3)
        half = evaluate_open_loop(truth_network, sim_profile(),
                                  lag_free_series, tabletop_geometry(),
                                  horizon=50, stride=2)
        assert half.windows == -(-report.windows // 2)

    def test_feedback_channel_replay_also_exact(self, lag_free_series,
                                                truth_network):
        # With the actuator lag disabled both channels carry the same
        # inputs, so either replay choice reproduces the log.
        report = evaluate_open_loop(truth_network, sim_profile(),
                                    lag_free_series, tabletop_geometry(),
                                    horizon=20,
                                    applied=AppliedInput.FEEDBACK)
        assert report.ade < 1e-9


class TestWrongParameters:
    def test_wrong_params_score_worse_than_truth(self, lag_free_series,
                                                 truth_network):
        bounds = sim_profile()
        softer = tabletop_params().to_vector().copy()
        softer[2] *= 0.7     # weaken the front tire grip
        softer[6] *= 0.7
        wrong = ConstantLatentNetwork(CONFIG, latents_for(softer, bounds))
        good = evaluate_open_loop(truth_network, bounds, lag_free_series,
                                  tabletop_geometry(), horizon=30)
        bad = evaluate_open_loop(wrong, bounds, lag_free_series,
                                 tabletop_geometry(), horizon=30)
        assert bad.ade > 100 * max(good.ade, 1e-12)
        assert bad.fde > bad.ade   # open-loop error grows with the horizon

    def test_unstable_corner_parameters_are_excluded(self, lag_free_series):
        """Box-corner parameters blow up the explicit integration on most
        windows; those windows are dropped and counted, and the survivors
        still produce finite aggregates."""
        bounds = sim_profile()
        z = np.zeros(17)
        z[[0, 1, 2, 4, 5, 6, 12]] = 40.0  # stiffness and thrust to the top
        z[16] = -40.0                      # inertia to the bottom
        wild = ConstantLatentNetwork(CONFIG, z)
        report = evaluate_open_loop(wild, bounds, lag_free_series,
                                    tabletop_geometry(), horizon=50)
        total = len(lag_free_series) - 12 - 50 + 1
        assert report.windows + report.excluded == total
        assert report.excluded > 0.5 * total
        assert report.windows > 0
        assert np.isfinite(report.ade) and np.isfinite(report.fde)
        assert np.all(np.isfinite(report.state_rmse))

    def test_too_short_series_rejected(self, truth_network):
        t = np.arange(20) * 0.02
        data = np.zeros((20, 11))
        data[:, 0] = t
        data[:, 4] = 1.5
        series = TelemetrySeries(data=data, rate_hz=50.0)
        with pytest.raises(ValueError, match="too short"):
            evaluate_open_loop(truth_network, sim_profile(), series,
                               tabletop_geometry(), horizon=50)


@pytest.fixture(scope="module")
def report(lag_free_series, truth_network):
    return evaluate_open_loop(truth_network, sim_profile(), lag_free_series,
                              tabletop_geometry(), horizon=10, stride=5)


class TestArtifacts:
    def test_json_fields(self, report, tmp_path):
        path = tmp_path / "report.json"
        write_report_json(report, path)
        loaded = json.loads(path.read_text())
        assert loaded["horizon"] == 10
        assert loaded["windows"] == report.windows
        assert set(loaded["state_rmse"]) == {"vx", "vy", "omega"}
        assert loaded["parameter_count"] > 0
        assert loaded["n_samples"] == report.windows
        assert loaded["horizon_ms"] == pytest.approx(1000.0 * 10 / 50.0)
        assert loaded["mode"] in ("full", "nominal_load", "load_transfer_only")
        assert loaded["baseline"]["ade"] == pytest.approx(report.baseline_ade)

    def test_window_csv_rows(self, report, tmp_path):
        path = tmp_path / "windows.csv"
        write_window_csv(report, path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["window", "start", "ade", "fde"]
        assert len(rows) == 1 + report.windows
        assert float(rows[1][2]) == pytest.approx(report.window_ade[0])

    def test_error_trace_rows(self, report, tmp_path):
        path = tmp_path / "trace.csv"
        write_error_trace_csv(report, path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["window", "start", "step", "pos_err",
                           "vx_err", "vy_err", "omega_err"]
        assert len(rows) == 1 + report.windows * report.horizon
        # Steps are 1-based within each window.
        assert rows[1][2] == "1"
        assert rows[report.horizon][2] == str(report.horizon)
