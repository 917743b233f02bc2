"""Open-loop rollout evaluation of a trained estimator.

For every evaluation window the network estimates one parameter vector,
the model then rolls forward a fixed horizon replaying the logged
commanded inputs, and the predicted motion is scored against the log:
average and final displacement error per window, per-component state
errors across all steps, and a constant-velocity baseline for scale.
Windows whose rollout leaves the numerically sane region are excluded
and counted rather than poisoning the averages.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .estimator import AppliedInput, Network, estimate_params, parameter_count
from .guard import ParamBounds
from .physics import DIVERGENCE_LIMIT, PARAM_NAMES, PhysicsMode, \
    VehicleGeometry, pose_batch, step_batch
from .telemetry import TelemetrySeries, make_windows


def rmse(pred, truth, axis=None) -> np.ndarray:
    """Root-mean-square error, optionally along an axis."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    return np.sqrt(np.mean((pred - truth) ** 2, axis=axis))


def max_abs_err(pred, truth, axis=None) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    return np.max(np.abs(pred - truth), axis=axis)


@dataclass
class OpenLoopReport:
    """Aggregated open-loop accuracy over one telemetry series."""

    horizon: int
    history_len: int
    windows: int                 # windows that stayed finite
    excluded: int                # windows dropped for divergence
    ade: float                   # mean over windows of mean position error
    fde: float                   # mean over windows of final position error
    state_rmse: np.ndarray       # (3,) vx, vy, omega over all kept steps
    state_max_abs: np.ndarray    # (3,)
    baseline_ade: float          # constant-velocity reference
    baseline_fde: float
    parameter_count: int
    horizon_ms: float
    mode: PhysicsMode
    window_starts: np.ndarray    # (W,) start row of each kept window
    window_ade: np.ndarray       # (W,)
    window_fde: np.ndarray       # (W,)
    step_pos_err: np.ndarray     # (W, H) displacement error per step
    step_state_err: np.ndarray   # (W, H, 3) signed state errors

    def to_dict(self) -> dict:
        names = ("vx", "vy", "omega")
        return {
            "horizon": self.horizon,
            "horizon_ms": self.horizon_ms,
            "history_len": self.history_len,
            "n_samples": self.windows,
            "windows": self.windows,
            "excluded": self.excluded,
            "ade": self.ade,
            "fde": self.fde,
            "state_rmse": dict(zip(names, map(float, self.state_rmse))),
            "state_max_abs": dict(zip(names, map(float, self.state_max_abs))),
            "baseline": {"ade": self.baseline_ade, "fde": self.baseline_fde},
            "parameter_count": self.parameter_count,
            "mode": self.mode.name.lower(),
        }


def _displacement_rollout(states0, poses0, controls, params, geom, dt, mode):
    """Roll (W,) windows forward H steps; returns predicted poses/states
    stacked (W, H, 3) plus a per-window alive mask."""
    w, h = controls.shape[:2]
    states = states0.copy()
    poses = poses0.copy()
    alive = np.ones(w, dtype=bool)
    out_states = np.empty((w, h, 3))
    out_poses = np.empty((w, h, 3))
    for k in range(h):
        next_states, _ = step_batch(states, controls[:, k, :], params, geom,
                                    dt, mode)
        poses = pose_batch(poses, states, dt)
        states = next_states
        bad = ~np.all(np.abs(states) <= DIVERGENCE_LIMIT, axis=-1)
        alive &= ~bad
        states[~alive] = 0.0          # keep later vector steps finite
        out_states[:, k, :] = states
        out_poses[:, k, :] = poses
    return out_states, out_poses, alive


def evaluate_open_loop(network: Network, bounds: ParamBounds,
                       series: TelemetrySeries, geom: VehicleGeometry,
                       horizon: int = 50,
                       mode: PhysicsMode = PhysicsMode.FULL,
                       stride: int = 1,
                       applied: AppliedInput = AppliedInput.COMMAND,
                       params_vec=None, history_len: int = None
                       ) -> OpenLoopReport:
    """Score one series; see the module docstring for the protocol.

    Passing ``params_vec`` (with ``network=None``) scores a fixed physics
    parameterization instead of an estimator; ``history_len`` then sets
    the window alignment (default 1).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if params_vec is None and network is None:
        raise ValueError("need a network or a fixed parameter vector")
    if params_vec is not None:
        tau = 1 if history_len is None else history_len
    else:
        tau = network.config.history_len
    usable = [w for w in make_windows(series, tau, stride)
              if w.start + tau + horizon <= len(series)]
    if not usable:
        raise ValueError(
            f"series too short: need at least {tau + horizon + 1} records "
            f"for history {tau} and horizon {horizon}")

    starts = np.array([w.start for w in usable], dtype=int)
    lasts = starts + tau - 1
    if params_vec is not None:
        params = np.broadcast_to(np.asarray(params_vec, dtype=float),
                                 (len(usable), 17)).copy()
        model_size = len(PARAM_NAMES)
    else:
        features = np.stack([w.features for w in usable])
        params = estimate_params(network, bounds, features)
        model_size = parameter_count(network.config)

    if applied is AppliedInput.COMMAND:
        channel = series.commanded_controls()
    else:
        channel = series.feedback_controls()
    idx = lasts[:, None] + np.arange(horizon)[None, :]
    controls = channel[idx]                       # (W, H, 2)

    states0 = series.states()[lasts]
    poses0 = series.poses()[lasts]
    dt = series.dt
    pred_states, pred_poses, alive = _displacement_rollout(
        states0, poses0, controls, params, geom, dt, mode)

    truth_states = series.states()[idx + 1]
    truth_poses = series.poses()[idx + 1]

    # Constant-velocity baseline: freeze the window's last body rates.
    base_states = np.repeat(states0[:, None, :], horizon, axis=1)
    base_poses = np.empty_like(pred_poses)
    bp = poses0.copy()
    for k in range(horizon):
        bp = pose_batch(bp, states0, dt)
        base_poses[:, k, :] = bp

    def pos_err(poses):
        d = poses[..., :2] - truth_poses[..., :2]
        return np.hypot(d[..., 0], d[..., 1])

    per_step = pos_err(pred_poses)[alive]         # (W', H)
    base_step = pos_err(base_poses)[alive]
    state_err = (pred_states - truth_states)[alive]

    if per_step.shape[0] == 0:
        raise ValueError("every evaluation window diverged")

    window_ade = per_step.mean(axis=1)
    window_fde = per_step[:, -1]
    return OpenLoopReport(
        horizon=horizon,
        history_len=tau,
        windows=int(alive.sum()),
        excluded=int((~alive).sum()),
        ade=float(window_ade.mean()),
        fde=float(window_fde.mean()),
        state_rmse=np.sqrt(np.mean(state_err ** 2, axis=(0, 1))),
        state_max_abs=np.max(np.abs(state_err), axis=(0, 1)),
        baseline_ade=float(base_step.mean(axis=1).mean()),
        baseline_fde=float(base_step[:, -1].mean()),
        parameter_count=model_size,
        horizon_ms=1000.0 * horizon / series.rate_hz,
        mode=mode,
        window_starts=starts[alive],
        window_ade=window_ade,
        window_fde=window_fde,
        step_pos_err=per_step,
        step_state_err=state_err,
    )


def write_report_json(report: OpenLoopReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_window_csv(report: OpenLoopReport, path) -> None:
    """Per-window summary: start row, average and final displacement."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "start", "ade", "fde"])
        for i, (start, ade, fde) in enumerate(zip(
                report.window_starts, report.window_ade, report.window_fde)):
            writer.writerow([i, int(start), repr(float(ade)),
                             repr(float(fde))])


def write_error_trace_csv(report: OpenLoopReport, path) -> None:
    """Per-step error trace: one row per (window, rollout step)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "start", "step", "pos_err",
                         "vx_err", "vy_err", "omega_err"])
        for i, start in enumerate(report.window_starts):
            for k in range(report.horizon):
                err = report.step_state_err[i, k]
                writer.writerow([
                    i, int(start), k + 1,
                    repr(float(report.step_pos_err[i, k])),
                    repr(float(err[0])), repr(float(err[1])),
                    repr(float(err[2])),
                ])
