"""Geometric driver: pure-pursuit steering and proportional speed hold.

This driver plays two roles: it pilots the plant when generating training
telemetry, and it warms up the race loop until the estimator has a full
history window.  Steering aims the front axle at a point a speed-scaled
lookahead distance down the centerline; throttle combines a drag
feedforward with a proportional speed correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .physics import ControlInput, DrivetrainCoeffs, Pose, VehicleGeometry, \
    wrap_angle
from .tracks import TrackDefinition


@dataclass(frozen=True)
class PursuitConfig:
    """Tuning of the geometric driver."""

    lookahead: float = 0.20        # base lookahead distance, m
    lookahead_gain: float = 0.05   # extra lookahead per m/s of speed
    max_steer: float = 0.40        # rad
    speed_gain: float = 1.6        # throttle per m/s of speed error
    preview_time: float = 0.15     # s of travel for the speed lookup

    def __post_init__(self):
        if self.lookahead <= 0 or self.max_steer <= 0:
            raise ValueError("lookahead and max_steer must be positive")


def pure_pursuit_steer(pose: Pose, vx: float, track: TrackDefinition,
                       geom: VehicleGeometry,
                       config: PursuitConfig = PursuitConfig(),
                       s_hint: float = None) -> float:
    """Steer angle aiming at a lookahead point on the centerline."""
    s = track.nearest((pose.x, pose.y)).s if s_hint is None else s_hint
    ld = config.lookahead + config.lookahead_gain * max(vx, 0.0)
    target = track.point_at(s + ld)
    alpha = wrap_angle(np.arctan2(target[1] - pose.y, target[0] - pose.x)
                       - pose.theta)
    steer = np.arctan(2.0 * geom.wheelbase * np.sin(alpha) / ld)
    return float(np.clip(steer, -config.max_steer, config.max_steer))


def drag_feedforward(v: float, drivetrain: DrivetrainCoeffs) -> float:
    """Throttle that exactly cancels rolling and aerodynamic drag at v."""
    gain = drivetrain.cm1 - drivetrain.cm2 * v
    if gain <= 1e-9:
        return 1.0
    return (drivetrain.cr0 + drivetrain.cr2 * v * v) / gain


def throttle_for_speed(vx: float, v_target: float,
                       drivetrain: DrivetrainCoeffs,
                       config: PursuitConfig = PursuitConfig()) -> float:
    """Feedforward plus proportional correction, clipped to the actuator."""
    t = drag_feedforward(v_target, drivetrain) \
        + config.speed_gain * (v_target - vx)
    return float(np.clip(t, -1.0, 1.0))


def reference_speed(track: TrackDefinition, profile: np.ndarray, s: float,
                    vx: float,
                    config: PursuitConfig = PursuitConfig()) -> float:
    """Speed target read slightly ahead to absorb actuator lag."""
    lead = max(vx, 0.0) * config.preview_time
    idx = int(track.vertex_index(s + lead))
    return float(profile[idx])


def pure_pursuit(pose: Pose, vx: float, track: TrackDefinition,
                 profile: np.ndarray, geom: VehicleGeometry,
                 drivetrain: DrivetrainCoeffs,
                 config: PursuitConfig = PursuitConfig(),
                 s_hint: float = None) -> ControlInput:
    """One complete driver command: lookahead steering plus speed hold."""
    s = track.nearest((pose.x, pose.y)).s if s_hint is None else s_hint
    steer = pure_pursuit_steer(pose, vx, track, geom, config, s_hint=s)
    v_target = reference_speed(track, profile, s, vx, config)
    throttle = throttle_for_speed(vx, v_target, drivetrain, config)
    return ControlInput(throttle=throttle, steer=steer)
