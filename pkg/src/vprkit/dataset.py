"""Datasets of geo-tagged images: loading, saving, validation splits.

Directory layout (the on-disk interchange format):

    root/
      references/*.ppm
      reference_poses.csv      # header row, then id,x_m,y_m
      queries/*.ppm            # optional
      query_poses.csv          # optional

Poses are planar metric coordinates (meters east, meters north) in a
local frame. Latitude/longitude manifests can be ingested with
``latlon=True``, which applies an equirectangular approximation around
the manifest centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InconsistentManifest, InvalidFraction, ManifestMissing
from .ppm import read_ppm, write_ppm

EARTH_RADIUS_M = 6378137.0


@dataclass(frozen=True)
class Pose:
    """Planar position in meters (x east, y north) within a local frame."""

    x: float
    y: float

    def distance(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass
class ImageRecord:
    """An image with a unique id and an optional pose."""

    id: str
    pixels: np.ndarray  # (H, W, 3) float in [0, 1]
    pose: Pose | None = None


@dataclass
class Dataset:
    """Query and reference images with parallel pose lists.

    ``query_poses`` may be empty when query poses are unavailable;
    references always carry poses.
    """

    references: list[ImageRecord]
    reference_poses: list[Pose]
    queries: list[ImageRecord] = field(default_factory=list)
    query_poses: list[Pose] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.references) != len(self.reference_poses):
            raise InconsistentManifest(
                f"{len(self.references)} references but "
                f"{len(self.reference_poses)} reference poses"
            )
        if self.query_poses and len(self.query_poses) != len(self.queries):
            raise InconsistentManifest(
                f"{len(self.queries)} queries but {len(self.query_poses)} query poses"
            )

    def reference_only(self) -> "Dataset":
        """A view of this dataset that exposes only the reference side."""
        return Dataset(
            references=self.references, reference_poses=self.reference_poses
        )


def pose_array(poses: list[Pose]) -> np.ndarray:
    """Stack poses into an (N, 2) float64 array."""
    return np.array([[p.x, p.y] for p in poses], dtype=np.float64).reshape(-1, 2)


def _read_pose_manifest(path: Path, latlon: bool) -> dict[str, Pose]:
    if not path.is_file():
        raise ManifestMissing(f"pose manifest not found: {path}")
    rows: list[tuple[str, float, float]] = []
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise InconsistentManifest(f"{path.name}: missing header row")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise InconsistentManifest(
                    f"{path.name}:{lineno}: expected id,x,y got {line!r}"
                )
            rows.append((parts[0], float(parts[1]), float(parts[2])))
    ids = [r[0] for r in rows]
    if len(set(ids)) != len(ids):
        dupe = next(i for i in ids if ids.count(i) > 1)
        raise InconsistentManifest(f"{path.name}: duplicate id {dupe!r}")
    if latlon:
        lat0 = sum(r[1] for r in rows) / len(rows)
        lon0 = sum(r[2] for r in rows) / len(rows)
        cos0 = math.cos(math.radians(lat0))
        return {
            rid: Pose(
                x=EARTH_RADIUS_M * math.radians(lon - lon0) * cos0,
                y=EARTH_RADIUS_M * math.radians(lat - lat0),
            )
            for rid, lat, lon in rows
        }
    return {rid: Pose(x, y) for rid, x, y in rows}


def _load_side(
    image_dir: Path, manifest: Path, latlon: bool
) -> tuple[list[ImageRecord], list[Pose]]:
    poses = _read_pose_manifest(manifest, latlon)
    files = {p.stem: p for p in sorted(image_dir.glob("*.ppm"))}
    orphan_poses = sorted(set(poses) - set(files))
    if orphan_poses:
        raise InconsistentManifest(
            f"{manifest.name}: pose entry {orphan_poses[0]!r} has no image file"
        )
    orphan_images = sorted(set(files) - set(poses))
    if orphan_images:
        raise InconsistentManifest(
            f"{manifest.name}: image {orphan_images[0]!r} has no pose entry"
        )
    records, pose_list = [], []
    for rid in sorted(poses):  # lexicographic id order keeps indices stable
        records.append(ImageRecord(id=rid, pixels=read_ppm(files[rid]), pose=poses[rid]))
        pose_list.append(poses[rid])
    return records, pose_list


def load_dataset(root_path: str | Path, latlon: bool = False) -> Dataset:
    """Load a dataset directory into memory.

    Raises ManifestMissing / InconsistentManifest / DecodeError as
    appropriate; all orderings are lexicographic by id.
    """
    root = Path(root_path)
    references, reference_poses = _load_side(
        root / "references", root / "reference_poses.csv", latlon
    )
    queries: list[ImageRecord] = []
    query_poses: list[Pose] = []
    qdir = root / "queries"
    qmanifest = root / "query_poses.csv"
    if qdir.is_dir() or qmanifest.is_file():
        queries, query_poses = _load_side(qdir, qmanifest, latlon)
    return Dataset(
        references=references,
        reference_poses=reference_poses,
        queries=queries,
        query_poses=query_poses,
    )


def save_dataset(dataset: Dataset, root_path: str | Path) -> None:
    """Write a dataset back to the standard directory layout."""
    root = Path(root_path)
    _save_side(dataset.references, root / "references", root / "reference_poses.csv")
    if dataset.queries:
        _save_side(dataset.queries, root / "queries", root / "query_poses.csv")


def _save_side(records: list[ImageRecord], image_dir: Path, manifest: Path) -> None:
    image_dir.mkdir(parents=True, exist_ok=True)
    lines = ["id,x_m,y_m"]
    for rec in sorted(records, key=lambda r: r.id):
        write_ppm(image_dir / f"{rec.id}.ppm", rec.pixels)
        if rec.pose is None:
            raise InconsistentManifest(f"record {rec.id!r} has no pose to persist")
        lines.append(f"{rec.id},{rec.pose.x!r},{rec.pose.y!r}")
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")


def split_validation(
    dataset: Dataset, fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Partition the queries into (train, validation) by a seeded shuffle.

    References are shared by both splits. Same seed, same partition.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InvalidFraction(f"fraction must be in [0, 1], got {fraction}")
    n = len(dataset.queries)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    order = rng.permutation(n)
    n_val = int(round(fraction * n))
    val_idx = sorted(order[:n_val].tolist())
    train_idx = sorted(order[n_val:].tolist())

    def take(indices: list[int]) -> Dataset:
        return Dataset(
            references=dataset.references,
            reference_poses=dataset.reference_poses,
            queries=[dataset.queries[i] for i in indices],
            query_poses=(
                [dataset.query_poses[i] for i in indices] if dataset.query_poses else []
            ),
        )

    return take(train_idx), take(val_idx)
