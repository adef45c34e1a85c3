import numpy as np
import pytest

from sedlab.errors import FormatError, InvalidInputError
from sedlab.events import (
    EventInterval,
    extract_intervals,
    rasterize_intervals,
    read_intervals_csv,
    write_intervals_csv,
)


class TestEventInterval:
    def test_sort_key_orders_by_onset(self):
        a = EventInterval(1, 0.5, 1.0)
        b = EventInterval(0, 0.7, 0.9)
        assert sorted([b, a], key=lambda e: e.sort_key) == [a, b]

    def test_fields_coerced_to_plain_types(self):
        ev = EventInterval(np.int64(2), np.float64(0.25), np.float64(0.5))
        assert type(ev.class_id) is int
        assert type(ev.onset) is float and type(ev.offset) is float

    def test_rejects_inverted(self):
        with pytest.raises(InvalidInputError):
            EventInterval(0, 2.0, 1.0)

    def test_rejects_negative_onset(self):
        with pytest.raises(InvalidInputError):
            EventInterval(0, -0.5, 1.0)


class TestCsvRoundTrip:
    def test_round_trip_exact(self, tmp_path, rng):
        intervals = {}
        for clip in range(3):
            evs = []
            for _ in range(4):
                onset = float(rng.uniform(0, 5))
                evs.append(EventInterval(int(rng.integers(3)), onset, onset + float(rng.uniform(0.1, 2))))
            intervals[f"clip-{clip}"] = evs
        path = tmp_path / "intervals.csv"
        write_intervals_csv(path, intervals)
        back = read_intervals_csv(path)
        assert set(back) == set(intervals)
        for clip in intervals:
            key = lambda e: e.sort_key
            assert sorted(back[clip], key=key) == sorted(intervals[clip], key=key)

    def test_bad_header_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(FormatError, match="line 1"):
            read_intervals_csv(path)

    def test_bad_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("clip,class,onset,offset\nclipA,0,1.0,notanumber\n")
        with pytest.raises(FormatError, match="line 2"):
            read_intervals_csv(path)


class TestRasterize:
    def test_inverse_of_extract(self, rng):
        grid = (rng.random((50, 2)) < 0.25).astype(float)
        events = extract_intervals(grid, fps=25.0)
        np.testing.assert_array_equal(rasterize_intervals(events, 50, 2, fps=25.0), grid)
