"""Event intervals: the unit of detection and evaluation.

An event is (class id, onset seconds, offset seconds).  Binary activity
grids and interval lists convert both ways; the CSV scheme
``clip,class,onset,offset`` round-trips through :func:`read_intervals_csv`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError


@dataclass(frozen=True)
class EventInterval:
    class_id: int
    onset: float
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "onset", float(self.onset))
        object.__setattr__(self, "offset", float(self.offset))
        if not 0 <= self.onset < self.offset:
            raise InvalidInputError(
                f"need 0 <= onset < offset, got [{self.onset}, {self.offset})"
            )

    @property
    def sort_key(self):
        return (self.onset, self.offset, self.class_id)


def extract_intervals(binary_grid, fps: float) -> list[EventInterval]:
    """Maximal runs of 1s per class column -> intervals in seconds."""
    grid = np.asarray(binary_grid, dtype=np.float64)
    if grid.ndim != 2:
        raise InvalidInputError("binary grid must be frames x classes")
    out = []
    for c in range(grid.shape[1]):
        col = np.concatenate([[0.0], grid[:, c], [0.0]])
        delta = np.diff(col)
        starts = np.flatnonzero(delta == 1)
        stops = np.flatnonzero(delta == -1)
        for a, b in zip(starts, stops):
            out.append(EventInterval(c, a / fps, b / fps))
    out.sort(key=lambda e: (e.onset, e.offset, e.class_id))
    return out


def rasterize_intervals(events, n_frames: int, n_classes: int, fps: float) -> np.ndarray:
    """Inverse of :func:`extract_intervals` on frame-aligned intervals."""
    grid = np.zeros((n_frames, n_classes))
    for ev in events:
        a = int(round(ev.onset * fps))
        b = int(round(ev.offset * fps))
        grid[max(a, 0):min(b, n_frames), ev.class_id] = 1.0
    return grid


def write_intervals_csv(path, intervals_by_clip: dict) -> None:
    """``{clip_id: [EventInterval, ...]}`` -> CSV with a header row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip", "class", "onset", "offset"])
        for clip_id in sorted(intervals_by_clip):
            for ev in sorted(intervals_by_clip[clip_id], key=lambda e: e.sort_key):
                writer.writerow([clip_id, ev.class_id, repr(ev.onset), repr(ev.offset)])


def read_intervals_csv(path) -> dict:
    path = Path(path)
    out: dict[str, list[EventInterval]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["clip", "class", "onset", "offset"]:
            raise FormatError(f"{path}: line 1: expected header clip,class,onset,offset")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                clip_id, class_id, onset, offset = row
                ev = EventInterval(int(class_id), float(onset), float(offset))
            except (ValueError, InvalidInputError) as exc:
                raise FormatError(f"{path}: line {line_no}: {exc}") from exc
            out.setdefault(clip_id, []).append(ev)
    return out


__all__ = [
    "EventInterval",
    "extract_intervals",
    "rasterize_intervals",
    "write_intervals_csv",
    "read_intervals_csv",
]
