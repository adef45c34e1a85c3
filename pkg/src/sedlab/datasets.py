"""Dataset assembly and on-disk layout.

A dataset has four splits: strong (frame labels), weak (clip labels),
unlabeled, and validation (frame labels, held out).  Strong clips come
from a cleaner "synthetic" domain than the other three, which mirrors the
usual situation where frame-accurate labels only exist for generated
audio.

On disk: one directory per split, each clip stored as a pair of flat
little-endian binaries (features, and labels when frame- or clip-level
labels exist) plus a JSON sidecar, with a root-level ``manifest.jsonl``
listing clip ids and split membership.  The binary layout is::

    int32 frames | int32 channels | float32 fps | float32 data row-major
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, InvalidInputError
from .features import FeatureGrid
from .scenes import SceneConfig, StrongLabelGrid, WeakLabel, events_from_label_grid, strong_domain, synth_scene, weaken

SPLITS = ("strong", "weak", "unlabeled", "validation")

_HEADER = struct.Struct("<iif")


@dataclass
class Dataset:
    """In-memory dataset; clips are (id, FeatureGrid, label) tuples."""

    n_classes: int
    strong: list = field(default_factory=list)       # (id, FeatureGrid, StrongLabelGrid)
    weak: list = field(default_factory=list)         # (id, FeatureGrid, WeakLabel)
    unlabeled: list = field(default_factory=list)    # (id, FeatureGrid)
    validation: list = field(default_factory=list)   # (id, FeatureGrid, StrongLabelGrid)

    def split_sizes(self) -> dict:
        return {
            "strong": len(self.strong),
            "weak": len(self.weak),
            "unlabeled": len(self.unlabeled),
            "validation": len(self.validation),
        }


@dataclass(frozen=True)
class DatasetSpec:
    """Counts per split plus the scene family to draw from."""

    scene: SceneConfig = SceneConfig()
    n_strong: int = 200
    n_weak: int = 120
    n_unlabeled: int = 1000
    n_validation: int = 100

    def __post_init__(self):
        for name in ("n_strong", "n_weak", "n_unlabeled", "n_validation"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be non-negative")


def _clip_seed(seed: int, split_index: int, clip_index: int) -> int:
    ss = np.random.SeedSequence([int(seed), split_index, clip_index])
    return int(ss.generate_state(1)[0])


def build_dataset(spec: DatasetSpec, seed: int) -> Dataset:
    """Synthesize all four splits deterministically from one seed."""
    real_cfg = spec.scene
    strong_cfg = strong_domain(real_cfg)
    ds = Dataset(n_classes=real_cfg.n_classes)
    for i in range(spec.n_strong):
        x, y = synth_scene(_clip_seed(seed, 0, i), strong_cfg)
        ds.strong.append((f"strong-{i:05d}", x, y))
    for i in range(spec.n_weak):
        x, y = synth_scene(_clip_seed(seed, 1, i), real_cfg)
        ds.weak.append((f"weak-{i:05d}", x, weaken(y)))
    for i in range(spec.n_unlabeled):
        x, _ = synth_scene(_clip_seed(seed, 2, i), real_cfg)
        ds.unlabeled.append((f"unlab-{i:05d}", x))
    for i in range(spec.n_validation):
        x, y = synth_scene(_clip_seed(seed, 3, i), real_cfg)
        ds.validation.append((f"val-{i:05d}", x, y))
    return ds


# ----------------------------------------------------------------------
# binary clip files


def write_grid(path: Path, data: np.ndarray, fps: float) -> None:
    data = np.ascontiguousarray(data, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(data.shape[0], data.shape[1], float(fps)))
        fh.write(data.tobytes())


def read_grid(path: Path) -> tuple[np.ndarray, float]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    frames, channels, fps = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 4 * frames * channels
    if frames < 0 or channels < 0 or len(raw) != expected:
        raise FormatError(f"{path}: size mismatch (want {expected} bytes, have {len(raw)})")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(frames, channels)
    return data.astype(np.float64), float(fps)


def save_dataset(ds: Dataset, root: Path, spec: DatasetSpec | None = None, seed: int | None = None) -> None:
    """Write all splits, sidecars, and the manifest under ``root``."""
    root = Path(root)
    manifest_rows = []

    def _write_clip(split, clip_id, x: FeatureGrid, label):
        split_dir = root / split
        split_dir.mkdir(parents=True, exist_ok=True)
        write_grid(split_dir / f"{clip_id}.x.bin", x.data, x.fps)
        sidecar = {
            "id": clip_id,
            "split": split,
            "frames": x.n_frames,
            "channels": x.n_channels,
            "fps": x.fps,
            "n_classes": ds.n_classes,
            "events": None,
            "weak": None,
        }
        if isinstance(label, StrongLabelGrid):
            write_grid(split_dir / f"{clip_id}.y.bin", label.data, x.fps)
            sidecar["events"] = [
                {"class": c, "onset": on, "offset": off}
                for c, on, off in events_from_label_grid(label, x.fps)
            ]
        elif isinstance(label, WeakLabel):
            write_grid(split_dir / f"{clip_id}.y.bin", label.data[None, :], x.fps)
            sidecar["weak"] = [int(v) for v in label.data]
        (split_dir / f"{clip_id}.json").write_text(json.dumps(sidecar, sort_keys=True))
        manifest_rows.append({"id": clip_id, "split": split})

    for clip_id, x, y in ds.strong:
        _write_clip("strong", clip_id, x, y)
    for clip_id, x, w in ds.weak:
        _write_clip("weak", clip_id, x, w)
    for clip_id, x in ds.unlabeled:
        _write_clip("unlabeled", clip_id, x, None)
    for clip_id, x, y in ds.validation:
        _write_clip("validation", clip_id, x, y)

    with open(root / "manifest.jsonl", "w") as fh:
        for row in manifest_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    meta = {"n_classes": ds.n_classes, "splits": ds.split_sizes()}
    if spec is not None:
        meta["spec"] = {
            "scene": dataclasses.asdict(spec.scene),
            "n_strong": spec.n_strong,
            "n_weak": spec.n_weak,
            "n_unlabeled": spec.n_unlabeled,
            "n_validation": spec.n_validation,
        }
    if seed is not None:
        meta["seed"] = seed
    (root / "dataset.json").write_text(json.dumps(meta, sort_keys=True, indent=2))


def load_dataset(root: Path) -> Dataset:
    """Read a dataset directory written by :func:`save_dataset`."""
    root = Path(root)
    manifest_path = root / "manifest.jsonl"
    meta_path = root / "dataset.json"
    if not manifest_path.exists() or not meta_path.exists():
        raise DataError(f"{root} is not a dataset directory (missing manifest)")
    meta = json.loads(meta_path.read_text())
    ds = Dataset(n_classes=int(meta["n_classes"]))

    for line_no, line in enumerate(manifest_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            clip_id, split = row["id"], row["split"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise FormatError(f"manifest.jsonl line {line_no}: {exc}") from exc
        if split not in SPLITS:
            raise FormatError(f"manifest.jsonl line {line_no}: unknown split {split!r}")
        split_dir = root / split
        data, fps = read_grid(split_dir / f"{clip_id}.x.bin")
        x = FeatureGrid(data, fps)
        if split == "unlabeled":
            ds.unlabeled.append((clip_id, x))
            continue
        ydata, _ = read_grid(split_dir / f"{clip_id}.y.bin")
        if split == "weak":
            ds.weak.append((clip_id, x, WeakLabel(ydata[0])))
        else:
            entry = (clip_id, x, StrongLabelGrid(ydata))
            (ds.strong if split == "strong" else ds.validation).append(entry)
    return ds


def reference_events(root: Path, split: str = "validation") -> dict:
    """clip id -> list of (class, onset_s, offset_s) from the sidecars."""
    root = Path(root)
    split_dir = root / split
    if not split_dir.is_dir():
        raise DataError(f"no {split!r} split under {root}")
    out = {}
    for sidecar in sorted(split_dir.glob("*.json")):
        info = json.loads(sidecar.read_text())
        events = info.get("events")
        if events is None:
            raise DataError(f"{sidecar}: split {split!r} has no frame-level events")
        out[info["id"]] = [(e["class"], e["onset"], e["offset"]) for e in events]
    return out


def dataset_hash(root: Path) -> str:
    """SHA-256 over the manifest and every clip file, in manifest order."""
    root = Path(root)
    digest = hashlib.sha256()
    manifest_path = root / "manifest.jsonl"
    if not manifest_path.exists():
        raise DataError(f"{root} has no manifest.jsonl")
    digest.update(manifest_path.read_bytes())
    for line in manifest_path.read_text().splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        split_dir = root / row["split"]
        for suffix in (".x.bin", ".y.bin", ".json"):
            p = split_dir / f"{row['id']}{suffix}"
            if p.exists():
                digest.update(p.read_bytes())
    return digest.hexdigest()


__all__ = [
    "SPLITS",
    "Dataset",
    "DatasetSpec",
    "build_dataset",
    "write_grid",
    "read_grid",
    "save_dataset",
    "load_dataset",
    "reference_events",
    "dataset_hash",
]
