"""Closed-loop racing with the estimator in the loop.

Each control step estimates the car's physical parameters from the last
few telemetry rows (or uses a fixed parameter vector), then solves a
short-horizon tracking problem on that model: single-shooting gradient
descent with box projection and an Armijo line search, warm-started from
the previous plan and seeded so it is never worse than a zero plan or a
geometric-driver plan.  The race runner drives the true plant with the
optimized commands, times laps at interpolated start-line crossings,
counts lane violations without stopping for them, and turns divergence
into an aborted result instead of an exception.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .driving import PursuitConfig, pure_pursuit_steer, reference_speed, \
    throttle_for_speed
from .errors import DivergedError
from .estimator import Network, estimate_params
from .guard import ParamBounds
from .physics import (
    DIVERGENCE_LIMIT,
    TRACE_COLUMNS,
    ModelParams,
    PhysicsMode,
    Pose,
    VehicleGeometry,
    pose_batch,
    pose_batch_vjp,
    step_batch,
    step_batch_vjp,
)
from .telemetry import TelemetrySeries
from .tracks import TrackDefinition


@dataclass(frozen=True)
class NmpcConfig:
    """Horizon, cost weights, and solver effort of the racing planner."""

    horizon: int = 15
    iterations: int = 8            # projected-gradient outer iterations
    initial_step: float = 0.4
    backtracks: int = 6            # halvings per line search
    armijo: float = 1e-4
    tolerance: float = 1e-4        # relative cost decrease to stop at
    w_pos: float = 60.0            # squared position tracking
    w_speed: float = 2.0           # squared forward-speed tracking
    w_terminal: float = 120.0      # extra position weight on the last step
    w_boundary: float = 400.0      # hinge on lateral excursion
    boundary_free_fraction: float = 0.7   # of half-width, penalty-free
    r_throttle: float = 0.05
    r_steer: float = 0.5
    r_dthrottle: float = 0.1       # slew penalties anchor on the previous
    r_dsteer: float = 1.0          # applied command
    max_steer: float = 0.40
    speed_scale: float = 1.0       # multiplies the reference speed profile

    def __post_init__(self):
        if self.horizon < 1 or self.iterations < 1:
            raise ValueError("horizon and iterations must be >= 1")
        if self.initial_step <= 0 or self.max_steer <= 0:
            raise ValueError("initial_step and max_steer must be positive")
        if min(self.w_pos, self.w_speed, self.w_terminal, self.w_boundary,
               self.r_throttle, self.r_steer, self.r_dthrottle,
               self.r_dsteer) < 0:
            raise ValueError("cost weights must be nonnegative")


def plan_references(track: TrackDefinition, profile: np.ndarray, s0: float,
                    horizon: int, dt: float, speed_scale: float = 1.0):
    """March a reference point down the centerline at profile speed.

    Returns (positions (H, 2), speeds (H,), normals (H, 2)): where the
    car should be after each of the next H steps, how fast it should be
    going there, and the left-pointing unit normal of the centerline at
    each reference point (used to measure lateral excursion linearly).
    """
    positions = np.empty((horizon, 2))
    speeds = np.empty(horizon)
    normals = np.empty((horizon, 2))
    s = float(s0)
    for k in range(horizon):
        v = speed_scale * float(profile[int(track.vertex_index(s))])
        s += v * dt
        positions[k] = track.point_at(s)
        speeds[k] = speed_scale * float(profile[int(track.vertex_index(s))])
        tx, ty = track.tangent_at(s)
        normals[k] = (-ty, tx)
    return positions, speeds, normals


def _clip_plan(plan: np.ndarray, config: NmpcConfig) -> np.ndarray:
    out = plan.copy()
    out[:, 0] = np.clip(out[:, 0], -1.0, 1.0)
    out[:, 1] = np.clip(out[:, 1], -config.max_steer, config.max_steer)
    return out


def _rollout(plan, state, pose, params, geom, dt, mode, with_cache=False):
    h = plan.shape[0]
    states = np.empty((h + 1, 3))
    poses = np.empty((h + 1, 3))
    states[0] = state
    poses[0] = pose
    caches = [] if with_cache else None
    # Overflow in a candidate rollout is an answer, not an accident: the
    # finiteness check below turns it into an infinite cost.
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(h):
            out = step_batch(states[k], plan[k], params, geom, dt, mode,
                             with_cache=with_cache)
            if with_cache:
                caches.append(out[2])
            poses[k + 1] = pose_batch(poses[k], states[k], dt)
            states[k + 1] = out[0]
    ok = bool(np.all(np.isfinite(states))
              and np.all(np.abs(states) <= DIVERGENCE_LIMIT))
    return states, poses, caches, ok


def plan_cost_and_grad(plan, state, pose, params, ref_pos, ref_speed,
                       ref_normal, lane_free, u_prev, geom: VehicleGeometry,
                       dt: float, config: NmpcConfig, mode: PhysicsMode,
                       with_grad: bool = True):
    """Tracking cost of a control plan and its gradient through the
    physics reverse pass.  Diverged rollouts cost infinity.

    The cost sums squared position and speed tracking errors, a hinge on
    the linearized lateral excursion beyond ``lane_free`` meters, control
    effort, and control slew anchored on the previously applied command.
    """
    h = plan.shape[0]
    states, poses, caches, ok = _rollout(plan, state, pose, params, geom,
                                         dt, mode, with_cache=with_grad)
    if not ok:
        return np.inf, None

    pos_w = np.full(h, config.w_pos)
    pos_w[-1] += config.w_terminal
    dp = poses[1:, :2] - ref_pos
    dv = states[1:, 0] - ref_speed
    lat = np.sum(ref_normal * dp, axis=1)
    hinge = np.maximum(np.abs(lat) - lane_free, 0.0)
    du = np.diff(np.vstack([u_prev, plan]), axis=0)
    cost = float(np.sum(pos_w * np.sum(dp * dp, axis=1))
                 + config.w_speed * np.sum(dv * dv)
                 + config.w_boundary * np.sum(hinge * hinge)
                 + config.r_throttle * np.sum(plan[:, 0] ** 2)
                 + config.r_steer * np.sum(plan[:, 1] ** 2)
                 + config.r_dthrottle * np.sum(du[:, 0] ** 2)
                 + config.r_dsteer * np.sum(du[:, 1] ** 2))
    if not with_grad:
        return cost, None

    g_plan = np.zeros_like(plan)
    g_plan[:, 0] += 2.0 * config.r_throttle * plan[:, 0]
    g_plan[:, 1] += 2.0 * config.r_steer * plan[:, 1]
    slew = np.array([2.0 * config.r_dthrottle, 2.0 * config.r_dsteer])
    g_plan += slew * du
    g_plan[:-1] -= slew * du[1:]

    g_dp = 2.0 * pos_w[:, None] * dp \
        + (2.0 * config.w_boundary * hinge * np.sign(lat))[:, None] \
        * ref_normal
    g_state = np.zeros(3)
    g_pose = np.zeros(3)
    for k in range(h - 1, -1, -1):
        g_pose_k1 = g_pose.copy()
        g_pose_k1[:2] += g_dp[k]
        g_state_k1 = g_state.copy()
        g_state_k1[0] += 2.0 * config.w_speed * dv[k]

        g_pose, g_state_from_pose = pose_batch_vjp(poses[k], states[k], dt,
                                                   g_pose_k1)
        g_state_dyn, g_u, _ = step_batch_vjp(caches[k], g_state_k1)
        g_plan[k] += g_u
        g_state = g_state_from_pose + g_state_dyn
    return cost, g_plan


@dataclass(frozen=True, eq=False)
class NmpcSolution:
    """An optimized plan plus its predicted rollout and solve stats."""

    plan: np.ndarray           # (H, 2) commands, within input bounds
    states: np.ndarray         # (H + 1, 3) predicted body states
    poses: np.ndarray          # (H + 1, 3) predicted poses
    cost: float
    iterations: int            # outer iterations actually executed
    converged: bool            # False only when the iteration cap hit
    ref_positions: np.ndarray  # (H, 2)
    ref_speeds: np.ndarray     # (H,)

    @property
    def control(self) -> np.ndarray:
        return self.plan[0]


def nmpc_solve(state, pose, params, track: TrackDefinition,
               profile: np.ndarray, s0: float, u_prev,
               warm_plan, fallback_plan, geom: VehicleGeometry, dt: float,
               config: NmpcConfig,
               mode: PhysicsMode = PhysicsMode.FULL) -> NmpcSolution:
    """Optimize a control plan over the horizon.

    The search starts from the best of the shifted previous plan, the
    supplied fallback, and the all-zero plan; projected-gradient steps
    only ever replace the plan when an Armijo test certifies a decrease,
    so the returned plan is never worse than any seed.  Raises
    DivergedError when every seed's rollout is non-finite.
    """
    ref_pos, ref_speed, ref_normal = plan_references(
        track, profile, s0, config.horizon, dt, config.speed_scale)
    lane_free = config.boundary_free_fraction * track.half_width

    def cost_of(plan, with_grad=True):
        return plan_cost_and_grad(plan, state, pose, params, ref_pos,
                                  ref_speed, ref_normal, lane_free, u_prev,
                                  geom, dt, config, mode, with_grad)

    candidates = []
    for seed in (warm_plan, fallback_plan,
                 np.zeros((config.horizon, 2))):
        if seed is not None:
            plan = _clip_plan(np.asarray(seed, dtype=float), config)
            value, grad = cost_of(plan)
            if np.isfinite(value):
                candidates.append((value, plan, grad))
    if not candidates:
        raise DivergedError(0, "every seed plan diverged in rollout")
    cost, plan, grad = min(candidates, key=lambda c: c[0])

    step = config.initial_step
    iterations = 0
    converged = True
    for outer in range(config.iterations):
        gnorm2 = float(np.sum(grad * grad))
        if gnorm2 == 0.0:
            break
        iterations = outer + 1
        accepted = False
        cost_before = cost
        for _ in range(config.backtracks):
            trial = _clip_plan(plan - step * grad, config)
            dproj = plan - trial
            if not np.any(dproj):
                break          # every component pinned at its bound
            decrease = config.armijo * float(np.sum(grad * dproj))
            trial_cost, trial_grad = cost_of(trial)
            if trial_cost <= cost - decrease:
                plan, cost, grad = trial, trial_cost, trial_grad
                step *= 1.5
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break              # stationary up to line-search resolution
        if cost_before - cost <= config.tolerance * max(1.0, cost_before):
            break              # progress below the convergence tolerance
    else:
        converged = False

    states, poses, _, _ = _rollout(plan, state, pose, params, geom, dt, mode)
    return NmpcSolution(plan=plan, states=states, poses=poses, cost=cost,
                        iterations=iterations, converged=converged,
                        ref_positions=ref_pos, ref_speeds=ref_speed)


@dataclass(frozen=True, eq=False)
class LapResult:
    """Timing, cleanliness, and traces of one completed lap."""

    index: int
    time: float                # s, interpolated at the start line
    steps: int
    violations: int            # steps spent outside the lane
    mean_vx: float
    mean_vy: float
    mean_omega: float
    trajectory: np.ndarray     # (steps, 11) telemetry rows of this lap
    forces: np.ndarray         # (steps, 7) TRACE_COLUMNS per step

    @property
    def clean(self) -> bool:
        return self.violations == 0

    def summary(self) -> dict:
        return {
            "index": self.index,
            "time": self.time,
            "steps": self.steps,
            "violations": self.violations,
            "mean_vx": self.mean_vx,
            "mean_vy": self.mean_vy,
            "mean_omega": self.mean_omega,
        }


@dataclass(eq=False)
class RaceResult:
    """Outcome of a multi-lap run, aborted or complete."""

    laps: list
    series: TelemetrySeries
    forces: np.ndarray         # (N, 7) per recorded step
    total_violations: int
    handoff_step: Optional[int]   # first planner step; None = never
    aborted: bool = False
    abort_reason: Optional[str] = None

    @property
    def lap_times(self) -> list:
        return [lap.time for lap in self.laps]

    @property
    def completed(self) -> int:
        return len(self.laps)


def lane_violations(track: TrackDefinition, positions: np.ndarray) -> int:
    """Count rows of (N, 2) positions lying outside the lane."""
    positions = np.asarray(positions, dtype=float)
    return int(sum(track.nearest(p).distance > track.half_width
                   for p in positions))


def run_race(track: TrackDefinition, geom: VehicleGeometry,
             plant_params: ModelParams, *,
             network: Optional[Network] = None,
             bounds: Optional[ParamBounds] = None,
             model_params=None,
             controller: str = "nmpc",
             laps: int = 3, dt: float = 0.02,
             nmpc: NmpcConfig = NmpcConfig(),
             pursuit: PursuitConfig = PursuitConfig(),
             mode: PhysicsMode = PhysicsMode.FULL,
             v_max: float = 2.0, a_lat: float = 5.0,
             a_long: float = 3.0) -> RaceResult:
    """Race the true plant with a planner driving an estimated model.

    The planner's model comes either from ``network``/``bounds`` (the
    parameters are re-estimated every step from the last ``history_len``
    telemetry rows, with the geometric driver covering the warm-up until
    that buffer fills) or from a fixed ``model_params`` vector (planning
    starts immediately).  ``controller="pursuit"`` skips planning and
    races on the geometric driver alone, for like-for-like lap-time
    comparisons.  The car takes a flying start on the line; commands act
    on the plant directly, so the feedback and command channels of the
    returned telemetry coincide.  Lane violations are counted but never
    stop the race; a divergent plant or a totally lost car aborts it and
    the result reports the reason.
    """
    if laps < 1:
        raise ValueError("laps must be at least 1")
    if controller not in ("nmpc", "pursuit"):
        raise ValueError("controller must be 'nmpc' or 'pursuit'")
    planning = controller == "nmpc"
    if planning and model_params is None \
            and (network is None or bounds is None):
        raise ValueError("planner needs model_params or network and bounds")
    fixed_model = None if model_params is None \
        else np.asarray(model_params, dtype=float)
    tau = network.config.history_len if network is not None else 0

    profile = track.speed_profile(v_max, a_lat, a_long)
    pvec = plant_params.to_vector()
    start = track.point_at(0.0)
    pose = np.array([start[0], start[1], float(track.heading_at(0.0))])
    state = np.array([0.9 * float(profile[0]), 0.0, 0.0])

    rows, traces, history = [], [], []
    lap_marks = [0.0]              # interpolated crossing times, t=0 start
    lap_start_rows = [0]
    lap_violations = [0]
    done = []
    warm_plan = None
    u_prev = np.zeros(2)
    handoff_step = None
    aborted, reason = False, None
    min_lap_steps = max(int(0.5 * track.total_length / (v_max * dt)), 10)
    max_steps = int(np.ceil(laps * track.total_length / (0.3 * dt))) + 500

    k = 0
    while len(done) < laps:
        if k >= max_steps:
            aborted, reason = True, f"step budget exhausted at step {k}"
            break
        near = track.nearest(pose[:2])
        if near.distance > 4.0 * track.half_width:
            aborted, reason = True, f"left the course at step {k}"
            break
        if near.distance > track.half_width:
            lap_violations[-1] += 1

        fallback = _fallback_plan(Pose(*pose), state, near.s, track, profile,
                                  plant_params, geom, pursuit, nmpc, dt)
        use_planner = planning and (fixed_model is not None
                                    or len(history) >= tau)
        if use_planner:
            if handoff_step is None:
                handoff_step = k
            if fixed_model is not None:
                est = fixed_model
            else:
                window = np.asarray(history[-tau:], dtype=float)[None, ...]
                est = estimate_params(network, bounds, window)[0]
            try:
                sol = nmpc_solve(state, pose, est, track, profile, near.s,
                                 u_prev, warm_plan, fallback, geom, dt,
                                 nmpc, mode)
            except DivergedError:
                aborted = True
                reason = f"planner found no finite plan at step {k}"
                break
            control = sol.plan[0]
            warm_plan = np.vstack([sol.plan[1:], sol.plan[-1]])
        else:
            control = fallback[0]

        rows.append(np.concatenate([[k * dt], pose, state,
                                    control, control]))
        history.append(np.concatenate([state, control, control]))

        next_state, trace = step_batch(state, control, pvec, geom, dt, mode)
        traces.append(trace)
        if not np.all(np.isfinite(next_state)) \
                or np.any(np.abs(next_state) > DIVERGENCE_LIMIT):
            aborted, reason = True, f"plant diverged at step {k}"
            k += 1
            break

        next_pose = pose_batch(pose, state, dt)
        eta = track.start_crossing(pose[:2], next_pose[:2])
        u_prev = control
        state, pose = next_state, next_pose
        k += 1
        if eta is not None and k - lap_start_rows[-1] >= min_lap_steps:
            crossing_time = (k - 1 + eta) * dt
            span = np.array(rows[lap_start_rows[-1]:])
            done.append(LapResult(
                index=len(done),
                time=crossing_time - lap_marks[-1],
                steps=k - lap_start_rows[-1],
                violations=lap_violations[-1],
                mean_vx=float(np.mean(span[:, 4])),
                mean_vy=float(np.mean(span[:, 5])),
                mean_omega=float(np.mean(span[:, 6])),
                trajectory=span,
                forces=np.array(traces[lap_start_rows[-1]:]),
            ))
            lap_marks.append(crossing_time)
            lap_start_rows.append(k)
            lap_violations.append(0)

    starts = tuple(s for s in lap_start_rows if s < len(rows)) or (0,)
    series = TelemetrySeries(data=np.array(rows), rate_hz=1.0 / dt,
                             lap_starts=starts)
    return RaceResult(laps=done, series=series,
                      forces=np.array(traces),
                      total_violations=sum(l.violations for l in done),
                      handoff_step=handoff_step,
                      aborted=aborted, abort_reason=reason)


def _fallback_plan(p: Pose, state, s0: float, track: TrackDefinition,
                   profile: np.ndarray, plant_params: ModelParams,
                   geom: VehicleGeometry, pursuit: PursuitConfig,
                   nmpc: NmpcConfig, dt: float) -> np.ndarray:
    """Constant geometric-driver command repeated over the horizon."""
    steer = pure_pursuit_steer(p, float(state[0]), track, geom, pursuit,
                               s_hint=s0)
    v_target = nmpc.speed_scale * reference_speed(track, profile, s0,
                                                  float(state[0]), pursuit)
    throttle = throttle_for_speed(float(state[0]), v_target,
                                  plant_params.drivetrain, pursuit)
    plan = np.tile([throttle, np.clip(steer, -nmpc.max_steer,
                                      nmpc.max_steer)], (nmpc.horizon, 1))
    return plan


RACE_TRACE_COLUMNS = ("t", "lap", "x", "y", "theta", "vx", "vy", "omega",
                      "throttle", "steer") + TRACE_COLUMNS


def write_race_json(path, result: RaceResult) -> None:
    """Summarize a race as JSON: per-lap numbers, totals, abort status."""
    doc = {
        "laps": [lap.summary() for lap in result.laps],
        "completed": result.completed,
        "total_violations": result.total_violations,
        "lap_times": result.lap_times,
        "handoff_step": result.handoff_step,
        "aborted": result.aborted,
        "abort_reason": result.abort_reason,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_race_trace_csv(path, result: RaceResult) -> None:
    """Plot-ready per-step trace: pose, speeds, commands, and forces."""
    data = result.series.data
    n = data.shape[0]
    lap_of = np.zeros(n, dtype=int)
    starts = list(result.series.lap_starts) + [n]
    for i in range(len(starts) - 1):
        lap_of[starts[i]:starts[i + 1]] = i
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(RACE_TRACE_COLUMNS) + "\n")
        for i in range(n):
            row = [repr(float(data[i, 0])), str(lap_of[i])]
            row += [repr(float(v)) for v in data[i, 1:9]]
            row += [repr(float(v)) for v in result.forces[i]]
            fh.write(",".join(row) + "\n")


def write_raceline_csv(path, track: TrackDefinition,
                       profile: np.ndarray) -> None:
    """Centerline vertices with their reference speeds."""
    pts = track.centerline
    s = 0.0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("s,x,y,v_ref\n")
        for i in range(pts.shape[0]):
            if i > 0:
                s += float(np.hypot(*(pts[i] - pts[i - 1])))
            fh.write(f"{s!r},{float(pts[i, 0])!r},{float(pts[i, 1])!r},"
                     f"{float(profile[i])!r}\n")
