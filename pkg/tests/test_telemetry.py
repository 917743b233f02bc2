"""Telemetry container, CSV format, windowing, and split-policy tests."""

import numpy as np
import pytest

from racedyn.errors import DataError, OrderingError, SchemaError
from racedyn.telemetry import (
    CSV_COLUMNS,
    ByFraction,
    ByLap,
    TelemetrySeries,
    WindowBatch,
    load_csv,
    make_windows,
    split,
    write_csv,
)


def make_series(n=50, rate_hz=50.0, seed=0, lap_starts=()):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate_hz
    poses = rng.normal(size=(n, 3))
    states = rng.normal(size=(n, 3)) + np.array([1.5, 0.0, 0.0])
    feedback = rng.uniform(-1, 1, size=(n, 2))
    commanded = feedback + rng.normal(scale=0.01, size=(n, 2))
    return TelemetrySeries.from_arrays(t, poses, states, feedback, commanded,
                                       rate_hz, lap_starts=lap_starts)


class TestSeries:
    def test_accessor_layout(self):
        s = make_series(5)
        assert s.data.shape == (5, 11)
        assert np.array_equal(s.states(), s.data[:, 4:7])
        assert np.array_equal(s.poses(), s.data[:, 1:4])
        assert np.array_equal(s.features(), s.data[:, 4:11])
        assert np.array_equal(s.feedback_controls(), s.data[:, 7:9])
        assert np.array_equal(s.commanded_controls(), s.data[:, 9:11])
        assert s.dt == pytest.approx(0.02)

    def test_record_round_trip(self):
        s = make_series(3)
        rec = s[1]
        assert np.array_equal(rec.as_row(), s.data[1])
        assert rec.state.vx == s.data[1, 4]
        assert rec.pose.theta == s.data[1, 3]

    def test_rejects_bad_shapes_and_values(self):
        with pytest.raises(ValueError):
            TelemetrySeries(data=np.zeros((4, 10)), rate_hz=50.0)
        bad = np.zeros((2, 11))
        bad[1, 0] = 1.0
        bad[0, 5] = np.nan
        with pytest.raises(ValueError, match="finite"):
            TelemetrySeries(data=bad, rate_hz=50.0)
        dup = np.zeros((2, 11))           # equal timestamps
        with pytest.raises(ValueError, match="increasing"):
            TelemetrySeries(data=dup, rate_hz=50.0)
        with pytest.raises(ValueError, match="rate_hz"):
            TelemetrySeries(data=np.zeros((0, 11)), rate_hz=0.0)

    def test_data_is_read_only(self):
        s = make_series(4)
        with pytest.raises(ValueError):
            s.data[0, 0] = 99.0


class TestCsvRoundTrip:
    def test_bit_exact(self, tmp_path):
        s = make_series(40, rate_hz=50.0, seed=3)
        path = tmp_path / "log.csv"
        write_csv(s, path)
        back = load_csv(path)
        assert back.rate_hz == s.rate_hz
        assert np.array_equal(back.data, s.data)   # exact, not approximate

    def test_header_line_format(self, tmp_path):
        s = make_series(2)
        path = tmp_path / "log.csv"
        write_csv(s, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# schema_version=1 rate_hz=50.0"
        assert lines[1] == ",".join(CSV_COLUMNS)

    def test_reordered_columns_load_correctly(self, tmp_path):
        s = make_series(6, seed=5)
        path = tmp_path / "log.csv"
        write_csv(s, path)
        lines = path.read_text().splitlines()
        header = lines[1].split(",")
        perm = list(reversed(range(len(header))))
        shuffled = [lines[0], ",".join(header[j] for j in perm)]
        for line in lines[2:]:
            cells = line.split(",")
            shuffled.append(",".join(cells[j] for j in perm))
        path2 = tmp_path / "shuffled.csv"
        path2.write_text("\n".join(shuffled) + "\n")
        assert np.array_equal(load_csv(path2).data, s.data)

    def test_empty_data_section(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("# schema_version=1 rate_hz=50.0\n"
                        + ",".join(CSV_COLUMNS) + "\n")
        assert len(load_csv(path)) == 0


def write_lines(tmp_path, lines):
    path = tmp_path / "bad.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


GOOD_HEAD = ["# schema_version=1 rate_hz=50.0", ",".join(CSV_COLUMNS)]
GOOD_ROW = ",".join(["0.0"] + ["0.1"] * 10)
NEXT_ROW = ",".join(["0.02"] + ["0.1"] * 10)


class TestCsvErrors:
    def test_missing_comment_line(self, tmp_path):
        with pytest.raises(SchemaError, match="schema_version"):
            load_csv(write_lines(tmp_path, GOOD_HEAD[1:] + [GOOD_ROW]))

    def test_unsupported_version(self, tmp_path):
        lines = ["# schema_version=2 rate_hz=50.0", GOOD_HEAD[1], GOOD_ROW]
        with pytest.raises(SchemaError, match="schema_version 2"):
            load_csv(write_lines(tmp_path, lines))

    def test_malformed_header_values(self, tmp_path):
        lines = ["# schema_version=one rate_hz=50.0", GOOD_HEAD[1]]
        with pytest.raises(SchemaError, match="malformed"):
            load_csv(write_lines(tmp_path, lines))

    def test_missing_rate(self, tmp_path):
        lines = ["# schema_version=1", GOOD_HEAD[1]]
        with pytest.raises(SchemaError, match="rate_hz"):
            load_csv(write_lines(tmp_path, lines))

    def test_missing_column(self, tmp_path):
        header = ",".join(c for c in CSV_COLUMNS if c != "vy")
        with pytest.raises(SchemaError, match="'vy'"):
            load_csv(write_lines(tmp_path, [GOOD_HEAD[0], header]))

    def test_extra_column(self, tmp_path):
        header = GOOD_HEAD[1] + ",extra"
        with pytest.raises(SchemaError, match="'extra'"):
            load_csv(write_lines(tmp_path, [GOOD_HEAD[0], header]))

    def test_short_row_reports_count(self, tmp_path):
        lines = GOOD_HEAD + [GOOD_ROW, "0.02,1.0"]
        with pytest.raises(SchemaError, match="row 2 has 2 fields"):
            load_csv(write_lines(tmp_path, lines))

    def test_unparsable_value_names_row(self, tmp_path):
        bad = GOOD_ROW.replace("0.1", "abc", 1)
        with pytest.raises(DataError, match="row 2") as err:
            load_csv(write_lines(tmp_path, GOOD_HEAD + [GOOD_ROW.replace(
                "0.0,", "-1.0,", 1), bad]))
        assert err.value.row == 2

    def test_non_finite_value_names_row(self, tmp_path):
        bad = NEXT_ROW.replace("0.1", "nan", 1)
        with pytest.raises(DataError, match="non-finite") as err:
            load_csv(write_lines(tmp_path, GOOD_HEAD + [GOOD_ROW, bad]))
        assert err.value.row == 2

    def test_non_increasing_time_names_row(self, tmp_path):
        with pytest.raises(OrderingError, match="row 2") as err:
            load_csv(write_lines(tmp_path, GOOD_HEAD + [GOOD_ROW, GOOD_ROW]))
        assert err.value.row == 2


class TestWindows:
    def test_window_count_hundred_records(self):
        # The canonical worked example: 100 records and a 12-step history
        # leave exactly 88 supervised windows at stride 1.
        s = make_series(100)
        windows = make_windows(s, history_len=12)
        assert len(windows) == 88
        assert [w.start for w in windows][:3] == [0, 1, 2]
        assert windows[-1].start == 87

    def test_window_contents(self):
        s = make_series(30, seed=9)
        feats = s.features()
        states = s.states()
        for w in make_windows(s, history_len=5):
            last = w.start + 4
            assert np.array_equal(w.features, feats[w.start:w.start + 5])
            assert np.array_equal(w.current_state, states[last])
            assert np.array_equal(w.target, states[last + 1])
            assert np.array_equal(w.feedback, feats[last, 3:5])
            assert np.array_equal(w.command, feats[last, 5:7])

    def test_stride_and_degenerate_lengths(self):
        s = make_series(100)
        assert len(make_windows(s, 12, stride=2)) == 44
        assert make_windows(make_series(12), 12) == []
        assert len(make_windows(make_series(13), 12)) == 1
        with pytest.raises(ValueError):
            make_windows(s, 0)
        with pytest.raises(ValueError):
            make_windows(s, 12, stride=0)

    def test_batch_shapes_and_select(self):
        s = make_series(40)
        batch = WindowBatch.from_series(s, history_len=6)
        assert len(batch) == 34
        assert batch.features.shape == (34, 6, 7)
        assert batch.targets.shape == (34, 3)
        assert batch.current_states.shape == (34, 3)
        sub = batch.select(np.array([3, 5]))
        assert np.array_equal(sub.features[0], batch.features[3])
        assert np.array_equal(sub.starts, [3, 5])

    def test_batch_of_nothing_rejected(self):
        with pytest.raises(ValueError):
            WindowBatch.from_windows([])


class TestSplits:
    def test_by_fraction_boundary(self):
        s = make_series(100)
        train, test = split(s, ByFraction(0.8))
        assert len(train) == 80 and len(test) == 20
        assert np.array_equal(np.vstack([train.data, test.data]), s.data)

    def test_by_fraction_validation(self):
        with pytest.raises(ValueError):
            ByFraction(0.0)
        with pytest.raises(ValueError):
            ByFraction(1.0)

    def test_by_lap_boundary_and_reindexing(self):
        s = make_series(100, lap_starts=(0, 40, 80))
        train, test = split(s, ByLap(train_laps=1))
        assert len(train) == 40 and len(test) == 60
        assert train.lap_starts == (0,)
        assert test.lap_starts == (0, 40)   # shifted into test coordinates

    def test_by_lap_requires_metadata(self):
        with pytest.raises(ValueError, match="lap metadata"):
            split(make_series(100), ByLap(train_laps=1))

    def test_by_lap_range_checks(self):
        s = make_series(100, lap_starts=(0, 40, 80))
        with pytest.raises(ValueError, match="train_laps"):
            split(s, ByLap(train_laps=3))

    def test_degenerate_boundary_rejected(self):
        s = make_series(100, lap_starts=(0, 40))
        # Boundary at record 0 would leave an empty training side.
        with pytest.raises(ValueError):
            split(s, ByLap(train_laps=0))
