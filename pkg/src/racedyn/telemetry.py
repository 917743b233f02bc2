"""Telemetry series, CSV persistence, and training-window extraction.

A series is a uniform-rate log of pose, body velocities, and two control
channels per wheel input: what the actuators reported (feedback) and what
the controller asked for (commanded).  The distinction matters because
actuators lag; models that see both channels can learn that lag.

CSV layout: one comment line `# schema_version=1 rate_hz=<r>`, a header
row, then one row per sample with columns exactly CSV_COLUMNS.  Floats are
written with repr, so a write/load cycle reproduces every value bit-exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, OrderingError, SchemaError
from .physics import BodyState, Pose

SCHEMA_VERSION = 1

CSV_COLUMNS = ("t", "x", "y", "theta", "vx", "vy", "omega",
               "throttle_fb", "steer_fb", "throttle_cmd", "steer_cmd")

# per-step model input features, in window column order
FEATURE_COLUMNS = ("vx", "vy", "omega", "throttle_fb", "steer_fb",
                   "throttle_cmd", "steer_cmd")

_STATE_SLICE = slice(4, 7)       # vx, vy, omega within CSV_COLUMNS
_POSE_SLICE = slice(1, 4)        # x, y, theta
_FEEDBACK_SLICE = slice(7, 9)
_COMMAND_SLICE = slice(9, 11)
_FEATURE_SLICE = slice(4, 11)


@dataclass(frozen=True)
class TelemetryRecord:
    """One sample of a telemetry series."""

    t: float
    x: float
    y: float
    theta: float
    vx: float
    vy: float
    omega: float
    throttle_fb: float
    steer_fb: float
    throttle_cmd: float
    steer_cmd: float

    @property
    def state(self) -> BodyState:
        return BodyState(vx=self.vx, vy=self.vy, omega=self.omega)

    @property
    def pose(self) -> Pose:
        return Pose(x=self.x, y=self.y, theta=self.theta)

    def as_row(self) -> np.ndarray:
        return np.array([getattr(self, c) for c in CSV_COLUMNS], dtype=float)


@dataclass(frozen=True)
class TelemetrySeries:
    """Uniform-rate telemetry log backed by one (N, 11) array.

    lap_starts marks record indices where a new lap begins; it is runtime
    metadata from the generator and is not persisted to CSV.
    """

    data: np.ndarray
    rate_hz: float
    lap_starts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(CSV_COLUMNS):
            raise ValueError(f"data must be (N, {len(CSV_COLUMNS)})")
        if not np.all(np.isfinite(data)):
            raise ValueError("telemetry values must be finite")
        t = data[:, 0]
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        object.__setattr__(self, "data", data)
        data.setflags(write=False)
        object.__setattr__(self, "lap_starts", tuple(int(i) for i in self.lap_starts))

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i: int) -> TelemetryRecord:
        row = self.data[i]
        return TelemetryRecord(*(float(v) for v in row))

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz

    def column(self, name: str) -> np.ndarray:
        return self.data[:, CSV_COLUMNS.index(name)]

    def states(self) -> np.ndarray:
        return self.data[:, _STATE_SLICE]

    def poses(self) -> np.ndarray:
        return self.data[:, _POSE_SLICE]

    def features(self) -> np.ndarray:
        return self.data[:, _FEATURE_SLICE]

    def feedback_controls(self) -> np.ndarray:
        return self.data[:, _FEEDBACK_SLICE]

    def commanded_controls(self) -> np.ndarray:
        return self.data[:, _COMMAND_SLICE]

    def slice(self, start: int, stop: int, lap_starts=()) -> "TelemetrySeries":
        return TelemetrySeries(data=self.data[start:stop].copy(),
                               rate_hz=self.rate_hz, lap_starts=lap_starts)

    @classmethod
    def from_arrays(cls, t, poses, states, feedback, commanded, rate_hz,
                    lap_starts=()) -> "TelemetrySeries":
        cols = [np.asarray(t, dtype=float).reshape(-1, 1),
                np.asarray(poses, dtype=float).reshape(len(t), 3),
                np.asarray(states, dtype=float).reshape(len(t), 3),
                np.asarray(feedback, dtype=float).reshape(len(t), 2),
                np.asarray(commanded, dtype=float).reshape(len(t), 2)]
        return cls(data=np.hstack(cols), rate_hz=rate_hz, lap_starts=lap_starts)


def write_csv(series: TelemetrySeries, path) -> None:
    """Write a series in the versioned CSV layout."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION} rate_hz={series.rate_hz!r}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in series.data:
            writer.writerow([repr(float(v)) for v in row])


def load_csv(path) -> TelemetrySeries:
    """Read a versioned telemetry CSV, checking schema, order, and values.

    Raises SchemaError for version or column mismatches, DataError for
    non-finite or unparsable values (with the 1-based data row), and
    OrderingError when timestamps fail to increase strictly.
    """
    with open(path, "r", newline="") as fh:
        first = fh.readline()
        if not first.startswith("# schema_version="):
            raise SchemaError("missing schema_version comment line")
        try:
            head = dict(part.split("=", 1) for part in first[2:].split())
            version = int(head["schema_version"])
            rate_hz = float(head.get("rate_hz", "nan"))
        except (ValueError, KeyError):
            raise SchemaError("malformed schema_version comment line") from None
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {version}")
        if not math.isfinite(rate_hz) or rate_hz <= 0:
            raise SchemaError("missing or invalid rate_hz in header")

        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("missing column header row") from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"missing column {missing[0]!r}")
        extra = [c for c in header if c not in CSV_COLUMNS]
        if extra:
            raise SchemaError(f"unexpected column {extra[0]!r}")
        order = [header.index(c) for c in CSV_COLUMNS]

        rows = []
        prev_t = -np.inf
        for i, raw in enumerate(reader, start=1):
            if len(raw) != len(CSV_COLUMNS):
                raise SchemaError(f"row {i} has {len(raw)} fields, "
                                  f"expected {len(CSV_COLUMNS)}")
            try:
                row = [float(raw[j]) for j in order]
            except ValueError:
                raise DataError(i, f"unparsable value in data row {i}") from None
            if not all(math.isfinite(v) for v in row):
                raise DataError(i, f"non-finite value in data row {i}")
            if row[0] <= prev_t:
                raise OrderingError(i, f"timestamp not increasing at data row {i}")
            prev_t = row[0]
            rows.append(row)

    data = np.array(rows, dtype=float) if rows else np.empty((0, len(CSV_COLUMNS)))
    return TelemetrySeries(data=data, rate_hz=rate_hz)


@dataclass(frozen=True)
class SampleWindow:
    """History window of features plus the next-step supervision target.

    start indexes the first record of the window in its source series; the
    target is the body state one step after the window's last record.
    """

    features: np.ndarray       # (history_len, 7)
    target: np.ndarray         # (3,)
    current_state: np.ndarray  # (3,) state at the window's last record
    feedback: np.ndarray       # (2,) feedback control at the last record
    command: np.ndarray        # (2,) commanded control at the last record
    start: int


def make_windows(series: TelemetrySeries, history_len: int, stride: int = 1):
    """Slice a series into overlapping training windows.

    A series of length N yields (N - history_len) windows at stride 1; a
    series shorter than history_len + 1 yields none.
    """
    if history_len < 1:
        raise ValueError("history_len must be at least 1")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    feats = series.features()
    states = series.states()
    out = []
    for start in range(0, len(series) - history_len, stride):
        last = start + history_len - 1
        out.append(SampleWindow(
            features=feats[start:start + history_len],
            target=states[last + 1],
            current_state=states[last],
            feedback=feats[last, 3:5],
            command=feats[last, 5:7],
            start=start,
        ))
    return out


@dataclass(frozen=True)
class WindowBatch:
    """Stacked windows ready for the batched estimator and physics kernels."""

    features: np.ndarray        # (B, history_len, 7)
    targets: np.ndarray         # (B, 3)
    current_states: np.ndarray  # (B, 3)
    feedback: np.ndarray        # (B, 2)
    command: np.ndarray         # (B, 2)
    starts: np.ndarray          # (B,)

    def __len__(self) -> int:
        return self.features.shape[0]

    def select(self, idx) -> "WindowBatch":
        return WindowBatch(self.features[idx], self.targets[idx],
                           self.current_states[idx], self.feedback[idx],
                           self.command[idx], self.starts[idx])

    @classmethod
    def from_windows(cls, windows) -> "WindowBatch":
        if not windows:
            raise ValueError("cannot batch zero windows")
        return cls(
            features=np.stack([w.features for w in windows]),
            targets=np.stack([w.target for w in windows]),
            current_states=np.stack([w.current_state for w in windows]),
            feedback=np.stack([w.feedback for w in windows]),
            command=np.stack([w.command for w in windows]),
            starts=np.array([w.start for w in windows], dtype=int),
        )

    @classmethod
    def from_series(cls, series: TelemetrySeries, history_len: int,
                    stride: int = 1) -> "WindowBatch":
        return cls.from_windows(make_windows(series, history_len, stride))


@dataclass(frozen=True)
class ByFraction:
    """Split a series at a record boundary: first `train_fraction` of the
    records train, the rest test.  Windows never straddle the boundary."""

    train_fraction: float

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")

    def boundary(self, series: TelemetrySeries) -> int:
        return int(round(self.train_fraction * len(series)))


@dataclass(frozen=True)
class ByLap:
    """Split a series after `train_laps` full laps; requires lap metadata."""

    train_laps: int

    def boundary(self, series: TelemetrySeries) -> int:
        if not series.lap_starts:
            raise ValueError("series carries no lap metadata; use ByFraction")
        if not 0 < self.train_laps < len(series.lap_starts):
            raise ValueError(
                f"train_laps must be in [1, {len(series.lap_starts) - 1}] "
                f"for a series with {len(series.lap_starts)} lap marks")
        return int(series.lap_starts[self.train_laps])


def split(series: TelemetrySeries, policy):
    """Split into (train, test) series at the policy's record boundary."""
    k = policy.boundary(series)
    if k <= 0 or k >= len(series):
        raise ValueError("split boundary leaves an empty side")
    train_laps = tuple(i for i in series.lap_starts if i < k)
    test_laps = tuple(i - k for i in series.lap_starts if i >= k)
    return (series.slice(0, k, lap_starts=train_laps),
            series.slice(k, len(series), lap_starts=test_laps))
