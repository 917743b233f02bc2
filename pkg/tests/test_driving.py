"""Geometric driver: steering law, speed law, and the combined command."""

import numpy as np
import pytest

from racedyn.driving import (
    PursuitConfig,
    drag_feedforward,
    pure_pursuit,
    pure_pursuit_steer,
    reference_speed,
    throttle_for_speed,
)
from racedyn.physics import DrivetrainCoeffs, Pose
from racedyn.tracks import TrackDefinition, make_stadium

# Chord-polygon circle fine enough that arc-length bookkeeping is exact
# to ~1e-6 relative for the closed-form comparisons below.
CIRCLE_R = 0.5
CIRCLE_N = 2000


def circle_track(radius=CIRCLE_R, n=CIRCLE_N):
    phi = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    pts = np.column_stack([radius * np.cos(phi), radius * np.sin(phi)])
    return TrackDefinition(name="circle", half_width=0.14, centerline=pts)


class TestSteering:
    def test_straight_ahead_gives_zero_steer(self, scale_geom):
        track = make_stadium()
        # Middle of the bottom straight, heading along it.
        s = 0.9
        x, y = track.point_at(s)
        steer = pure_pursuit_steer(Pose(x=x, y=y, theta=0.0), 1.5, track,
                                   scale_geom, s_hint=s)
        assert abs(steer) < 1e-9

    def test_left_turn_steers_positive(self, scale_geom):
        track = circle_track()   # counter-clockwise: always turning left
        s = 1.0
        x, y = track.point_at(s)
        theta = float(track.heading_at(s))
        steer = pure_pursuit_steer(Pose(x=x, y=y, theta=theta), 1.0, track,
                                   scale_geom, s_hint=s)
        assert steer > 0.01

    def test_matches_circle_geometry(self, scale_geom):
        # On a circle of radius R, the lookahead point ld down the arc sits
        # at chord angle ld/(2R) off the tangent, so the steering law gives
        # delta = arctan(2 L sin(ld / 2R) / ld) exactly.  The pose uses the
        # analytic circle tangent; the polygon only supplies the lookahead
        # point, to ~1e-6 relative.
        track = circle_track()
        s = 0.3
        x, y = track.point_at(s)
        theta = float(np.arctan2(y, x) + np.pi / 2)
        for ld in (0.15, 0.30, 0.60):
            config = PursuitConfig(lookahead=ld, lookahead_gain=0.0)
            steer = pure_pursuit_steer(Pose(x=x, y=y, theta=theta), 1.0,
                                       track, scale_geom, config, s_hint=s)
            expect = np.arctan(2 * scale_geom.wheelbase
                               * np.sin(ld / (2 * CIRCLE_R)) / ld)
            assert steer == pytest.approx(expect, rel=1e-3)

    def test_doubling_lookahead_reduces_steer(self, scale_geom):
        track = circle_track()
        s = 0.3
        x, y = track.point_at(s)
        pose = Pose(x=x, y=y, theta=float(track.heading_at(s)))
        mags = []
        for ld in (0.15, 0.30, 0.60):
            config = PursuitConfig(lookahead=ld, lookahead_gain=0.0)
            mags.append(abs(pure_pursuit_steer(pose, 1.0, track, scale_geom,
                                               config, s_hint=s)))
        assert mags[0] > mags[1] > mags[2]

    def test_steer_clipped_to_max(self, scale_geom):
        track = circle_track(radius=0.05, n=400)   # violently tight
        s = 0.0
        x, y = track.point_at(s)
        pose = Pose(x=x, y=y, theta=float(track.heading_at(s)) + 1.0)
        config = PursuitConfig(lookahead=0.3, max_steer=0.25)
        steer = pure_pursuit_steer(pose, 1.0, track, scale_geom, config)
        assert abs(steer) <= 0.25


class TestSpeedLaw:
    DRIVE = DrivetrainCoeffs(cm1=0.287, cm2=0.0545, cr0=0.0518, cr2=0.00035)

    def test_drag_feedforward_at_rest(self):
        assert drag_feedforward(0.0, self.DRIVE) == pytest.approx(
            self.DRIVE.cr0 / self.DRIVE.cm1)

    def test_feedforward_holds_speed_exactly(self):
        v = 1.5
        t = drag_feedforward(v, self.DRIVE)
        frx = (self.DRIVE.cm1 - self.DRIVE.cm2 * v) * t \
            - self.DRIVE.cr0 - self.DRIVE.cr2 * v * v
        assert frx == pytest.approx(0.0, abs=1e-15)

    def test_proportional_correction_signs(self):
        hold = throttle_for_speed(1.5, 1.5, self.DRIVE)
        assert throttle_for_speed(1.0, 1.5, self.DRIVE) > hold
        assert throttle_for_speed(2.0, 1.5, self.DRIVE) < hold

    def test_throttle_clipped(self):
        assert throttle_for_speed(0.0, 50.0, self.DRIVE) == 1.0
        assert throttle_for_speed(50.0, 0.0, self.DRIVE) == -1.0

    def test_reference_speed_previews_ahead(self):
        track = make_stadium()
        profile = np.arange(track.centerline.shape[0], dtype=float)
        config = PursuitConfig(preview_time=0.5)
        slow = reference_speed(track, profile, 1.0, 0.0, config)
        fast = reference_speed(track, profile, 1.0, 2.0, config)
        assert fast > slow   # faster car reads the profile further ahead


class TestCombinedCommand:
    def test_matches_components_and_bounds(self, scale_geom):
        track = make_stadium()
        profile = track.speed_profile(2.0, 5.0)
        s = 2.5
        x, y = track.point_at(s)
        pose = Pose(x=x, y=y, theta=float(track.heading_at(s)) + 0.1)
        cmd = pure_pursuit(pose, 1.2, track, profile, scale_geom,
                           TestSpeedLaw.DRIVE, s_hint=s)
        assert cmd.steer == pure_pursuit_steer(pose, 1.2, track, scale_geom,
                                               s_hint=s)
        v_t = reference_speed(track, profile, s, 1.2)
        assert cmd.throttle == throttle_for_speed(1.2, v_t,
                                                  TestSpeedLaw.DRIVE)
        assert -1.0 <= cmd.throttle <= 1.0
        assert abs(cmd.steer) <= PursuitConfig().max_steer
