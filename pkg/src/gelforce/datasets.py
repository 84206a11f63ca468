"""On-disk dataset sessions, stream synchronization, and indenter-level splits.

Session layout::

    <session>/manifest.json          {"indenter_id", "sensor_id", "notes"}
    <session>/frames/<t_ns>.png      RGB tactile frames
    <session>/depth/<t_ns>.png       optional depth images
    <session>/forces.csv             timestamp_s,fz_n

Frames are matched to the nearest force record by timestamp; pairs further
apart than the gap bound are dropped and counted, and forces outside the
configured range are excluded.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .image import Image, save_image

DEFAULT_GAP_S = 0.010
DEFAULT_FORCE_RANGE = (1.0, 15.0)
_SPLIT_BASE = (14, 2, 2)  # train/val/test indenter proportions


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ForceSample:
    frame_path: Path
    force_n: float
    indenter_id: str
    timestamp_s: float
    depth_path: Path | None = None

    def __post_init__(self):
        if not self.force_n > 0:
            raise DatasetError(f"force must be positive, got {self.force_n}")


@dataclass
class IngestResult:
    samples: list[ForceSample]
    dropped_gap: int = 0
    dropped_range: int = 0

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def ingest_session(session_dir, max_gap_s: float = DEFAULT_GAP_S,
                   force_range: tuple[float, float] | None = DEFAULT_FORCE_RANGE
                   ) -> IngestResult:
    """Pair every frame with its nearest force record."""
    session_dir = Path(session_dir)
    manifest_path = session_dir / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"missing manifest: {manifest_path}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    indenter_id = manifest["indenter_id"]

    frames = sorted((session_dir / "frames").glob("*.png"))
    if not frames:
        raise DatasetError(f"empty session (no frames): {session_dir}")
    with open(session_dir / "forces.csv") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise DatasetError(f"empty session (no force records): {session_dir}")
    f_ts = np.array([float(r["timestamp_s"]) for r in rows])
    f_val = np.array([float(r["fz_n"]) for r in rows])
    order = np.argsort(f_ts, kind="stable")  # row order in the CSV is irrelevant
    f_ts, f_val = f_ts[order], f_val[order]

    result = IngestResult(samples=[])
    depth_dir = session_dir / "depth"
    for fp in frames:
        t = int(fp.stem) / 1e9
        i = int(np.searchsorted(f_ts, t))
        cands = [j for j in (i - 1, i) if 0 <= j < len(f_ts)]
        j = min(cands, key=lambda j: abs(f_ts[j] - t))
        if abs(f_ts[j] - t) > max_gap_s:
            result.dropped_gap += 1
            continue
        force = float(f_val[j])
        if force_range is not None and not (force_range[0] <= force <= force_range[1]):
            result.dropped_range += 1
            continue
        dp = depth_dir / fp.name
        result.samples.append(ForceSample(
            frame_path=fp, force_n=force, indenter_id=indenter_id,
            timestamp_s=t, depth_path=dp if dp.exists() else None))
    return result


def ingest_dataset(root, max_gap_s: float = DEFAULT_GAP_S,
                   force_range: tuple[float, float] | None = DEFAULT_FORCE_RANGE
                   ) -> IngestResult:
    """Ingest every session directory under `root` (sorted by name)."""
    root = Path(root)
    if (root / "sessions").is_dir():
        root = root / "sessions"
    sessions = sorted(p for p in root.iterdir() if (p / "manifest.json").exists())
    if not sessions:
        raise DatasetError(f"no sessions under {root}")
    total = IngestResult(samples=[])
    for s in sessions:
        r = ingest_session(s, max_gap_s, force_range)
        total.samples.extend(r.samples)
        total.dropped_gap += r.dropped_gap
        total.dropped_range += r.dropped_range
    return total


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class FoldSplit:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    train: list[ForceSample]
    val: list[ForceSample]
    test: list[ForceSample]

    def __post_init__(self):
        sets = [set(self.train_ids), set(self.val_ids), set(self.test_ids)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise DatasetError("fold partitions share an indenter")


def split_by_indenter(samples: list[ForceSample], seed: int) -> list[FoldSplit]:
    """Three folds with indenter-disjoint partitions, 14/2/2-proportioned."""
    ids = sorted({s.indenter_id for s in samples})
    if len(ids) < 3:
        raise DatasetError(f"need >= 3 distinct indenters, got {len(ids)}")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]

    n = len(ids)
    n_test = max(1, round(n * _SPLIT_BASE[2] / sum(_SPLIT_BASE)))
    n_val = max(1, round(n * _SPLIT_BASE[1] / sum(_SPLIT_BASE)))
    while 3 * n_test > n:
        n_test -= 1  # keep test sets disjoint across folds when counts permit
    n_test = max(1, n_test)

    by_id: dict[str, list[ForceSample]] = {i: [] for i in ids}
    for s in samples:
        by_id[s.indenter_id].append(s)

    folds = []
    remaining = shuffled[3 * n_test:]
    for k in range(3):
        test_ids = tuple(shuffled[k * n_test:(k + 1) * n_test])
        if len(remaining) >= 3 * n_val:
            val_ids = tuple(remaining[k * n_val:(k + 1) * n_val])
        else:  # too few indenters: reuse the next fold's test chunk for validation
            val_ids = tuple(shuffled[((k + 1) % 3) * n_test:(((k + 1) % 3) + 1) * n_test])
        used = set(test_ids) | set(val_ids)
        train_ids = tuple(i for i in shuffled if i not in used)
        folds.append(FoldSplit(
            train_ids=train_ids, val_ids=val_ids, test_ids=test_ids,
            train=[s for i in train_ids for s in by_id[i]],
            val=[s for i in val_ids for s in by_id[i]],
            test=[s for i in test_ids for s in by_id[i]]))
    return folds


def save_split(folds: list[FoldSplit], path) -> None:
    payload = [{"train": list(f.train_ids), "val": list(f.val_ids),
                "test": list(f.test_ids)} for f in folds]
    with open(path, "w") as f:
        json.dump({"folds": payload}, f, indent=2)


# ---------------------------------------------------------------------------
# session writing (used by the synthetic generator)


class SessionWriter:
    """Streams samples into the session layout, one session per indenter.

    `depth_encoder(sample) -> Image` supplies the optional depth image.
    """

    def __init__(self, root, sensor_id: str = "synth0", depth_encoder=None,
                 notes: str = ""):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.sensor_id = sensor_id
        self.depth_encoder = depth_encoder
        self.notes = notes
        self._forces: dict[str, list[tuple[float, float]]] = {}

    def _session_dir(self, indenter_id: str) -> Path:
        d = self.root / indenter_id
        if indenter_id not in self._forces:
            (d / "frames").mkdir(parents=True, exist_ok=True)
            if self.depth_encoder is not None:
                (d / "depth").mkdir(exist_ok=True)
            with open(d / "manifest.json", "w") as f:
                json.dump({"indenter_id": indenter_id, "sensor_id": self.sensor_id,
                           "notes": self.notes}, f)
            self._forces[indenter_id] = []
        return d

    def __call__(self, sample) -> None:
        d = self._session_dir(sample.indenter_id)
        t_ns = int(round(sample.timestamp_s * 1e9))
        save_image(sample.frame, d / "frames" / f"{t_ns}.png")
        if self.depth_encoder is not None:
            save_image(self.depth_encoder(sample), d / "depth" / f"{t_ns}.png")
        self._forces[sample.indenter_id].append((sample.timestamp_s, sample.force_n))

    def close(self) -> None:
        for indenter_id, rows in self._forces.items():
            with open(self.root / indenter_id / "forces.csv", "w") as f:
                f.write("timestamp_s,fz_n\n")
                for t, v in rows:
                    f.write(f"{t!r},{v!r}\n")
