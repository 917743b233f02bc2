"""Closed-loop telemetry generation.

A pure-pursuit driver laps a closed circuit on the full load-transfer
physics, the commanded inputs optionally pass through a first-order
actuator lag and carry a small exploration dither, and every step is
logged in the telemetry schema.  Lap boundaries come from interpolated
start-line crossings and are attached to the series for lap-based splits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                       # Python < 3.11
    import tomli as tomllib

from . import tomlwriter
from .driving import PursuitConfig, pure_pursuit_steer, reference_speed, \
    throttle_for_speed
from .errors import DivergedError, OffTrackError
from .physics import (
    DIVERGENCE_LIMIT,
    BodyState,
    DrivetrainCoeffs,
    ModelParams,
    PacejkaCoeffs,
    PhysicsMode,
    Pose,
    VehicleGeometry,
    pose_batch,
    step_batch,
)
from .telemetry import TelemetrySeries
from .tracks import TrackDefinition, bundled_track


def tabletop_geometry() -> VehicleGeometry:
    """Geometry of the bundled tabletop-scale car (about 1:43)."""
    return VehicleGeometry(m=0.041, lf=0.029, lr=0.033, hcg=0.02,
                           load_floor=0.002)


def tabletop_params() -> ModelParams:
    """Ground-truth parameters of the bundled tabletop-scale car.

    Tire curves sit in the soft region of the admissible box so the
    explicit-Euler plant is well behaved at 50 Hz in the speed range the
    bundled circuits ask for.
    """
    return ModelParams(
        front=PacejkaCoeffs(b=6.0, c=0.8, d=0.16, e=-0.6,
                            sh=0.0035, sv=0.0008),
        rear=PacejkaCoeffs(b=7.0, c=0.75, d=0.18, e=-0.9,
                           sh=-0.0028, sv=-0.0006),
        drivetrain=DrivetrainCoeffs(cm1=0.287, cm2=0.0545,
                                    cr0=0.0518, cr2=0.00035),
        iz=2.78e-5,
    )


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the closed-loop data generator."""

    track: str = "stadium"
    laps: int = 6
    rate_hz: float = 50.0
    v_max: float = 2.0
    a_lat: float = 5.0             # lateral budget for the speed profile
    a_long: float = 3.0            # braking/accel budget for the profile
    actuator_tau: float = 0.05     # s; 0 applies commands instantly
    throttle_noise: float = 0.04   # std of command dither
    steer_noise: float = 0.02      # rad std of command dither
    seed: int = 0
    mode: PhysicsMode = PhysicsMode.FULL
    pursuit: PursuitConfig = PursuitConfig()

    def __post_init__(self):
        if self.laps < 0:
            raise ValueError("laps must be non-negative")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if self.actuator_tau < 0:
            raise ValueError("actuator_tau must be non-negative")


def without_actuator_lag(config: GeneratorConfig) -> GeneratorConfig:
    """Copy of a config whose plant applies commands instantly, so the
    feedback and command channels of the log coincide exactly."""
    return replace(config, actuator_tau=0.0)


def generate(config: GeneratorConfig, track: TrackDefinition = None,
             geom: VehicleGeometry = None,
             params: ModelParams = None) -> TelemetrySeries:
    """Drive the configured laps and return the telemetry log.

    Each record holds the pre-step pose and body state together with the
    controls applied during that step, so a record's feedback inputs
    explain the transition to the next record.  A zero-lap request yields
    an empty series.
    """
    track = bundled_track(config.track) if track is None else track
    geom = tabletop_geometry() if geom is None else geom
    params = tabletop_params() if params is None else params

    dt = 1.0 / config.rate_hz
    if config.laps == 0:
        return TelemetrySeries(data=np.empty((0, 11)), rate_hz=config.rate_hz)

    profile = track.speed_profile(config.v_max, config.a_lat, config.a_long)
    rng = np.random.default_rng(config.seed)
    pvec = params.to_vector()

    # Flying start on the line, aligned with the lane, at the local
    # reference speed: the plant model has no stable crawl regime, so a
    # standing start is not meaningful for this car.
    start = track.point_at(0.0)
    pose = np.array([start[0], start[1], track.heading_at(0.0)])
    state = np.array([0.9 * profile[0], 0.0, 0.0])
    feedback = None                # first command seeds the actuator state

    max_steps = int(np.ceil(config.laps * track.total_length / (0.3 * dt))) + 500
    rows = []
    lap_starts = [0]
    laps_done = 0
    min_lap_steps = max(int(0.5 * track.total_length / (config.v_max * dt)), 10)

    k = 0
    while laps_done < config.laps:
        if k >= max_steps:
            raise OffTrackError(k, "driver failed to finish the requested laps")
        position = pose[:2]
        near = track.nearest(position)
        if near.distance > 4.0 * track.half_width:
            raise OffTrackError(k)

        p = Pose(*pose)
        v_target = reference_speed(track, profile, near.s, state[0],
                                   config.pursuit)
        steer_cmd = pure_pursuit_steer(p, state[0], track, geom,
                                       config.pursuit, s_hint=near.s)
        throttle_cmd = throttle_for_speed(state[0], v_target,
                                          params.drivetrain, config.pursuit)
        command = np.array([
            np.clip(throttle_cmd
                    + config.throttle_noise * rng.standard_normal(), -1, 1),
            np.clip(steer_cmd
                    + config.steer_noise * rng.standard_normal(),
                    -config.pursuit.max_steer, config.pursuit.max_steer),
        ])
        if feedback is None or config.actuator_tau == 0:
            feedback = command.copy()
        else:
            blend = min(dt / config.actuator_tau, 1.0)
            feedback = feedback + blend * (command - feedback)

        rows.append(np.concatenate([[k * dt], pose, state, feedback, command]))

        next_state, _ = step_batch(state, feedback, pvec, geom, dt,
                                   config.mode)
        next_pose = pose_batch(pose, state, dt)
        if not np.all(np.abs(next_state) <= DIVERGENCE_LIMIT):
            raise DivergedError(k)

        eta = track.start_crossing(pose[:2], next_pose[:2])
        state, pose = next_state, next_pose
        k += 1
        if eta is not None and k - lap_starts[-1] >= min_lap_steps:
            laps_done += 1
            if laps_done < config.laps:
                lap_starts.append(k)

    return TelemetrySeries(data=np.array(rows), rate_hz=config.rate_hz,
                           lap_starts=tuple(lap_starts))


def write_params_toml(path, params) -> None:
    """Persist a parameter set as a [params] table, one key per name."""
    if isinstance(params, ModelParams):
        params = params.to_vector()
    vec = np.asarray(params, dtype=float).reshape(-1)
    model = ModelParams.from_vector(vec)   # validates shape and values
    tomlwriter.dump({"params": model.to_dict()}, path)


def load_params_toml(path) -> ModelParams:
    """Read a [params] table written by write_params_toml."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    if "params" not in doc or not isinstance(doc["params"], dict):
        raise ValueError(f"{path}: missing [params] table")
    return ModelParams.from_dict(doc["params"])
