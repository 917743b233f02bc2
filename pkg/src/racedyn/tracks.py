"""Closed-circuit track geometry: arclength parametrization, nearest-point
queries, curvature-limited speed profiles, and start-line crossing tests.

A track is a closed polyline centerline (the last vertex connects back to
the first) with a constant half-width.  Two ready-made circuits for the
tabletop-scale car ship with the package: a stadium (two straights joined
by half-circle ends) and a lobed road course with varying curvature.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                       # Python < 3.11
    import tomli as tomllib

from . import tomlwriter

BUNDLED_TRACKS = ("stadium", "clover")


@dataclass(frozen=True)
class NearestPoint:
    """Result of a nearest-centerline query."""

    distance: float   # unsigned distance to the centerline
    lateral: float    # signed offset, positive to the left of travel
    s: float          # arclength of the closest centerline point
    segment: int      # index of the closest segment


@dataclass(frozen=True)
class TrackDefinition:
    """Closed centerline with constant half-width."""

    name: str
    half_width: float
    centerline: np.ndarray                 # (N, 2); closes implicitly

    def __post_init__(self):
        pts = np.array(self.centerline, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValueError("centerline must be (N, 2) with N >= 3")
        if not np.all(np.isfinite(pts)):
            raise ValueError("centerline must be finite")
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]                 # tolerate an explicitly closed loop
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        seg = np.roll(pts, -1, axis=0) - pts
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 0):
            raise ValueError("centerline has coincident consecutive points")
        pts.setflags(write=False)
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "_seg", seg)
        object.__setattr__(self, "_seg_len", lengths)
        object.__setattr__(self, "_cum_s",
                           np.concatenate([[0.0], np.cumsum(lengths)]))

    # -- arclength parametrization ------------------------------------

    @property
    def total_length(self) -> float:
        return float(self._cum_s[-1])

    def wrap_s(self, s) -> np.ndarray:
        return np.asarray(s, dtype=float) % self.total_length

    def vertex_index(self, s):
        """Index of the segment containing arclength s."""
        s = self.wrap_s(s)
        return np.minimum(np.searchsorted(self._cum_s, s, side="right") - 1,
                          len(self._seg_len) - 1)

    def point_at(self, s):
        """Centerline position at arclength s (wraps around the loop)."""
        s = self.wrap_s(s)
        idx = self.vertex_index(s)
        frac = (s - self._cum_s[idx]) / self._seg_len[idx]
        return self.centerline[idx] + frac[..., None] * self._seg[idx]

    def tangent_at(self, s):
        """Unit travel direction at arclength s."""
        idx = self.vertex_index(s)
        return self._seg[idx] / self._seg_len[idx][..., None]

    def heading_at(self, s):
        t = self.tangent_at(s)
        return np.arctan2(t[..., 1], t[..., 0])

    # -- queries -------------------------------------------------------

    def nearest(self, point) -> NearestPoint:
        """Closest centerline point to an (x, y) position."""
        q = np.asarray(point, dtype=float)
        rel = q - self.centerline
        t = np.clip(np.einsum("ij,ij->i", rel, self._seg)
                    / self._seg_len ** 2, 0.0, 1.0)
        closest = self.centerline + t[:, None] * self._seg
        diff = q - closest
        dist2 = np.einsum("ij,ij->i", diff, diff)
        i = int(np.argmin(dist2))
        tangent = self._seg[i] / self._seg_len[i]
        lateral = float(tangent[0] * diff[i, 1] - tangent[1] * diff[i, 0])
        return NearestPoint(
            distance=float(np.sqrt(dist2[i])),
            lateral=lateral,
            s=float(self._cum_s[i] + t[i] * self._seg_len[i]),
            segment=i,
        )

    def lateral_offset(self, point) -> float:
        return self.nearest(point).lateral

    def inside(self, point) -> bool:
        return self.nearest(point).distance <= self.half_width

    # -- curvature and reference speed ---------------------------------

    def curvature(self) -> np.ndarray:
        """Unsigned curvature at each vertex (inverse circumradius of each
        consecutive vertex triple)."""
        p = self.centerline
        a = p - np.roll(p, 1, axis=0)
        b = np.roll(p, -1, axis=0) - p
        c = np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)
        cross = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
        la = np.hypot(a[:, 0], a[:, 1])
        lb = np.hypot(b[:, 0], b[:, 1])
        lc = np.hypot(c[:, 0], c[:, 1])
        return 2.0 * cross / np.maximum(la * lb * lc, 1e-12)

    def speed_profile(self, v_max: float, a_lat: float,
                      a_long: float = None) -> np.ndarray:
        """Per-vertex reference speed from a lateral-acceleration budget.

        Corner speed is sqrt(a_lat / curvature) capped at v_max; when
        a_long is given, backward and forward passes around the loop limit
        braking and acceleration between vertices.
        """
        if v_max <= 0 or a_lat <= 0:
            raise ValueError("v_max and a_lat must be positive")
        kappa = self.curvature()
        v = np.minimum(v_max, np.sqrt(a_lat / np.maximum(kappa, 1e-9)))
        if a_long is not None:
            n = len(v)
            ds = self._seg_len
            for _ in range(2):               # second lap settles the wrap
                for i in range(n - 1, -1, -1):   # braking limit
                    nxt = (i + 1) % n
                    v[i] = min(v[i], np.sqrt(v[nxt] ** 2 + 2 * a_long * ds[i]))
                for i in range(n):               # acceleration limit
                    prev = (i - 1) % n
                    v[i] = min(v[i], np.sqrt(v[prev] ** 2
                                             + 2 * a_long * ds[prev]))
        return v

    # -- start/finish line ---------------------------------------------

    def start_crossing(self, p_prev, p_curr):
        """Fraction along p_prev->p_curr where the start line is crossed
        in the direction of travel, or None.

        The start line is the normal to the centerline at s=0, live only
        within the lane and a small neighborhood of the start point, so
        far-away passes on other parts of the circuit never trigger it.
        """
        p0 = self.centerline[0]
        tangent = self._seg[0] / self._seg_len[0]
        d_prev = float(np.dot(np.asarray(p_prev, float) - p0, tangent))
        d_curr = float(np.dot(np.asarray(p_curr, float) - p0, tangent))
        if not (d_prev < 0.0 <= d_curr):
            return None
        eta = d_prev / (d_prev - d_curr)
        at = np.asarray(p_prev, float) + eta * (np.asarray(p_curr, float)
                                                - np.asarray(p_prev, float))
        lateral = tangent[0] * (at[1] - p0[1]) - tangent[1] * (at[0] - p0[0])
        window = max(4.0 * self.half_width, 0.05 * self.total_length)
        if abs(lateral) > 2.0 * self.half_width \
                or float(np.hypot(*(at - p0))) > window:
            return None
        return float(eta)


# ---------------------------------------------------------------------------
# serialization


def write_track(track: TrackDefinition, path) -> None:
    tomlwriter.dump({
        "track": {
            "name": track.name,
            "half_width": float(track.half_width),
            "x": [float(v) for v in track.centerline[:, 0]],
            "y": [float(v) for v in track.centerline[:, 1]],
        }
    }, path)


def _track_from_document(doc: dict) -> TrackDefinition:
    try:
        table = doc["track"]
        name = table["name"]
        half_width = float(table["half_width"])
        xs, ys = table["x"], table["y"]
    except KeyError as missing:
        raise ValueError(f"track file is missing key {missing}") from None
    if len(xs) != len(ys):
        raise ValueError("track x and y lists differ in length")
    return TrackDefinition(name=name, half_width=half_width,
                           centerline=np.column_stack([xs, ys]))


def load_track(path) -> TrackDefinition:
    with open(path, "rb") as fh:
        return _track_from_document(tomllib.load(fh))


def bundled_track(name: str) -> TrackDefinition:
    """One of the circuits shipped with the package."""
    if name not in BUNDLED_TRACKS:
        raise ValueError(f"unknown track {name!r}; "
                         f"bundled tracks: {', '.join(BUNDLED_TRACKS)}")
    ref = resources.files("racedyn.data.tracks") / f"{name}.toml"
    with ref.open("rb") as fh:
        return _track_from_document(tomllib.load(fh))


# ---------------------------------------------------------------------------
# parametric constructors (used to build the bundled circuits)


def make_stadium(straight: float = 1.8, radius: float = 0.45,
                 half_width: float = 0.14, points: int = 320,
                 name: str = "stadium") -> TrackDefinition:
    """Two straights joined by half-circle ends, centered on the origin."""
    if straight <= 0 or radius <= 0:
        raise ValueError("straight and radius must be positive")
    arc = np.pi * radius
    total = 2 * straight + 2 * arc
    s = np.linspace(0.0, total, points, endpoint=False)
    pts = np.empty((points, 2))
    for i, si in enumerate(s):
        if si < straight:                          # bottom straight, +x
            pts[i] = (si - straight / 2, -radius)
        elif si < straight + arc:                  # right end, CCW
            phi = (si - straight) / radius
            pts[i] = (straight / 2 + radius * np.sin(phi),
                      -radius * np.cos(phi))
        elif si < 2 * straight + arc:              # top straight, -x
            u = si - straight - arc
            pts[i] = (straight / 2 - u, radius)
        else:                                      # left end, CCW
            phi = (si - 2 * straight - arc) / radius
            pts[i] = (-straight / 2 - radius * np.sin(phi),
                      radius * np.cos(phi))
    return TrackDefinition(name=name, half_width=half_width, centerline=pts)


def make_clover(base_radius: float = 0.85, half_width: float = 0.14,
                points: int = 360, name: str = "clover") -> TrackDefinition:
    """Lobed closed course with smoothly varying curvature."""
    phi = np.linspace(0.0, 2 * np.pi, points, endpoint=False)
    r = base_radius * (1.0 + 0.22 * np.cos(2 * phi) + 0.10 * np.sin(3 * phi))
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    return TrackDefinition(name=name, half_width=half_width, centerline=pts)
