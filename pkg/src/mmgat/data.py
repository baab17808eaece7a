"""Radar frames, skeleton labels, CSV I/O and preprocessing.

A frame stores its points as an ``(n, 5)`` array with columns
``x, y, z, v, intensity`` (meters, m/s, arbitrary units).  Frames are kept
in canonical order: points sorted lexicographically by ``(x, y, z)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

POINT_HEADER = ["frame_id", "x", "y", "z", "v", "intensity"]

# COCO-17 joint order: nose, eyes, ears, shoulders, elbows, wrists, hips, knees, ankles.
COCO17_LEFT_HIP = 11
COCO17_RIGHT_HIP = 12


class DataFormatError(ValueError):
    """Malformed or inconsistent data file."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RadarPoint(NamedTuple):
    x: float
    y: float
    z: float
    v: float
    intensity: float


def default_hip_indices(joint_count: int) -> tuple[int, int]:
    if joint_count == 17:
        return COCO17_LEFT_HIP, COCO17_RIGHT_HIP
    return 0, min(1, joint_count - 1)


@dataclass(frozen=True)
class Skeleton:
    """``J`` joints in 3-D.  ``pelvis_index`` is None when the pelvis is the hip midpoint."""

    joints: np.ndarray
    left_hip_index: int
    right_hip_index: int
    pelvis_index: int | None = None

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)
        if joints.ndim != 2 or joints.shape[1] != 3 or joints.shape[0] < 1:
            raise ValueError(f"joints must have shape (J, 3), got {joints.shape}")
        object.__setattr__(self, "joints", joints)
        J = joints.shape[0]
        for idx in (self.left_hip_index, self.right_hip_index, self.pelvis_index):
            if idx is not None and not 0 <= idx < J:
                raise ValueError(f"joint index {idx} out of range for J={J}")

    @classmethod
    def from_joints(cls, joints) -> "Skeleton":
        joints = np.asarray(joints, dtype=np.float64).reshape(-1, 3)
        left, right = default_hip_indices(len(joints))
        return cls(joints, left, right)

    @property
    def joint_count(self) -> int:
        return self.joints.shape[0]

    @property
    def pelvis(self) -> np.ndarray:
        if self.pelvis_index is not None:
            return self.joints[self.pelvis_index]
        return 0.5 * (self.joints[self.left_hip_index] + self.joints[self.right_hip_index])

    def flat(self) -> np.ndarray:
        return self.joints.reshape(-1)


@dataclass(frozen=True)
class RadarFrame:
    frame_id: int
    points: np.ndarray
    keypoints: Skeleton | None = None
    group: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 5)
        if len(pts) < 1:
            raise ValueError(f"frame {self.frame_id} has no points")
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def positions(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def labeled(self) -> bool:
        return self.keypoints is not None

    def point(self, i: int) -> RadarPoint:
        return RadarPoint(*map(float, self.points[i]))


@dataclass(frozen=True)
class Dataset:
    frames: tuple[RadarFrame, ...]
    joint_count: int
    name: str = "radar"
    units: str = "m"

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        ids = [f.frame_id for f in self.frames]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("frame ids must be strictly increasing")
        for f in self.frames:
            if f.labeled and f.keypoints.joint_count != self.joint_count:
                raise DataFormatError(
                    f"frame {f.frame_id} has {f.keypoints.joint_count} joints, "
                    f"dataset has {self.joint_count}")

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i) -> RadarFrame:
        return self.frames[i]

    @property
    def frame_ids(self) -> list[int]:
        return [f.frame_id for f in self.frames]

    def labeled_frames(self) -> list[RadarFrame]:
        return [f for f in self.frames if f.labeled]

    def with_frames(self, frames: Sequence[RadarFrame]) -> "Dataset":
        return replace(self, frames=tuple(frames))


# ---------------------------------------------------------------------------
# preprocessing


def sort_points(frame: RadarFrame) -> RadarFrame:
    """Reorder points by x, then y, then z; ties keep their original order."""
    p = frame.points
    order = np.lexsort((p[:, 2], p[:, 1], p[:, 0]))
    return replace(frame, points=p[order])


def sort_dataset(ds: Dataset) -> Dataset:
    return ds.with_frames([sort_points(f) for f in ds.frames])


def fuse_frames(ds: Dataset, window: int = 3) -> Dataset:
    """Stack the points of ``window`` consecutive frames centred on each frame.

    The window is clipped at the dataset ends, so the frame count is
    unchanged.  Each output frame keeps its centre frame's id and labels.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"fusion window must be a positive odd count, got {window}")
    half = window // 2
    n = len(ds.frames)
    fused = []
    for i, centre in enumerate(ds.frames):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        pts = np.concatenate([ds.frames[k].points for k in range(lo, hi)])
        fused.append(sort_points(replace(centre, points=pts)))
    return ds.with_frames(fused)


def denoise_volume(ds: Dataset, bound: float = 5.0) -> tuple[Dataset, list[int]]:
    """Drop labeled frames with any keypoint coordinate outside ``(-bound, bound)``."""
    if not bound > 0:
        raise ValueError("bound must be positive")
    kept, removed = [], []
    for f in ds.frames:
        if f.labeled and not np.all(np.abs(f.keypoints.joints) < bound):
            removed.append(f.frame_id)
        else:
            kept.append(f)
    return ds.with_frames(kept), removed


def preprocess(ds: Dataset, *, sort: bool = True, window: int = 1,
               bound: float | None = None) -> tuple[Dataset, list[int]]:
    """Sort, fuse, then denoise, in that fixed order."""
    if sort:
        ds = sort_dataset(ds)
    if window != 1:
        ds = fuse_frames(ds, window)
    removed: list[int] = []
    if bound is not None:
        ds, removed = denoise_volume(ds, bound)
    return ds, removed


# ---------------------------------------------------------------------------
# CSV I/O


def companion_labels_path(points_path) -> Path:
    p = Path(points_path)
    if p.stem.endswith("points"):
        return p.with_name(p.stem[: -len("points")] + "labels" + p.suffix)
    return p.with_name(p.stem + "_labels" + p.suffix)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(f"column {column!r}: not a number: {text!r}", line) from None
    if not math.isfinite(value):
        raise DataFormatError(f"column {column!r}: non-finite value {text!r}", line)
    return value


def _parse_id(text: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataFormatError(f"frame_id is not an integer: {text!r}", line) from None


def read_points_csv(path) -> dict[int, np.ndarray]:
    groups: dict[int, list[list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != POINT_HEADER:
            raise DataFormatError(f"expected header {','.join(POINT_HEADER)}", 1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(POINT_HEADER):
                raise DataFormatError(
                    f"expected {len(POINT_HEADER)} fields, got {len(row)}", line)
            fid = _parse_id(row[0], line)
            groups.setdefault(fid, []).append(
                [_parse_float(t, line, c) for t, c in zip(row[1:], POINT_HEADER[1:])])
    return {fid: np.array(rows) for fid, rows in sorted(groups.items())}


def read_labels_csv(path) -> tuple[int, dict[int, np.ndarray]]:
    labels: dict[int, np.ndarray] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "frame_id" or (len(header) - 1) % 3 \
                or len(header) < 4:
            raise DataFormatError("label header must be frame_id followed by 3*J columns", 1)
        J = (len(header) - 1) // 3
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 1 + 3 * J:
                raise DataFormatError(
                    f"label row has {len(row) - 1} coordinates, expected {3 * J}", line)
            fid = _parse_id(row[0], line)
            labels[fid] = np.array([_parse_float(t, line, c)
                                    for t, c in zip(row[1:], header[1:])]).reshape(J, 3)
    return J, labels


def load_frames_csv(path, labels_path=None, *, name: str | None = None,
                    sort: bool = True) -> Dataset:
    """Read a point CSV (and its label CSV, if present) into a dataset.

    Rows are grouped by ``frame_id``; with ``sort`` each frame's points are
    put in canonical order, otherwise file order is kept.
    """
    path = Path(path)
    points = read_points_csv(path)
    if labels_path is None:
        candidate = companion_labels_path(path)
        labels_path = candidate if candidate.exists() else None
    J, labels = (read_labels_csv(labels_path) if labels_path is not None else (0, {}))
    missing = sorted(set(labels) - set(points))
    if missing:
        raise DataFormatError(f"labels for frame ids without points: {missing[:5]}")
    frames = [RadarFrame(fid, pts, Skeleton.from_joints(labels[fid]) if fid in labels else None)
              for fid, pts in points.items()]
    if sort:
        frames = [sort_points(f) for f in frames]
    return Dataset(tuple(frames), J, name=name or path.stem)


def save_frames_csv(ds: Dataset, path, labels_path=None) -> tuple[Path, Path | None]:
    """Write points (and labels, for a labeled dataset) with 17 significant digits."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POINT_HEADER)
        for f in ds.frames:
            for p in f.points:
                w.writerow([f.frame_id, *map(_fmt, p)])
    labeled = ds.labeled_frames()
    if not labeled:
        return path, None
    labels_path = Path(labels_path) if labels_path else companion_labels_path(path)
    J = ds.joint_count
    with open(labels_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_id"] + [f"j{j}{a}" for j in range(J) for a in "xyz"])
        for f in labeled:
            w.writerow([f.frame_id, *map(_fmt, f.keypoints.flat())])
    return path, labels_path


# ---------------------------------------------------------------------------
# synthetic data

FRAME_PERIOD = 0.1  # s

# Standing COCO-17 pose, meters: x lateral, y toward the radar, z up.
_COCO17_REST = np.array([
    [0.00, 0.00, 1.62],   # nose
    [-0.03, 0.02, 1.66], [0.03, 0.02, 1.66],   # eyes
    [-0.07, 0.05, 1.63], [0.07, 0.05, 1.63],   # ears
    [-0.19, 0.05, 1.42], [0.19, 0.05, 1.42],   # shoulders
    [-0.24, 0.06, 1.13], [0.24, 0.06, 1.13],   # elbows
    [-0.27, 0.04, 0.87], [0.27, 0.04, 0.87],   # wrists
    [-0.11, 0.05, 0.92], [0.11, 0.05, 0.92],   # hips
    [-0.12, 0.05, 0.49], [0.12, 0.05, 0.49],   # knees
    [-0.12, 0.07, 0.07], [0.12, 0.07, 0.07],   # ankles
])
# Skeleton bones as (parent, child).
_COCO17_BONES = [(0, 1), (0, 2), (1, 3), (2, 4), (0, 5), (0, 6), (5, 6),
                 (5, 7), (7, 9), (6, 8), (8, 10), (5, 11), (6, 12), (11, 12),
                 (11, 13), (13, 15), (12, 14), (14, 16)]
# Joints swung by the gait: (joint, pivot, phase sign).
_COCO17_SWING = [(7, 5, 1), (9, 5, 1), (8, 6, -1), (10, 6, -1),
                 (13, 11, -1), (15, 11, -1), (14, 12, 1), (16, 12, 1)]


def skeleton_topology(joint_count: int) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Rest pose and bone list for a ``joint_count``-joint stick figure."""
    if joint_count == 17:
        return _COCO17_REST.copy(), list(_COCO17_BONES)
    # A vertical chain from head to feet.
    z = np.linspace(1.7, 0.1, joint_count) if joint_count > 1 else np.array([1.0])
    rest = np.stack([0.1 * np.sin(np.arange(joint_count)), np.zeros(joint_count), z], axis=1)
    return rest, [(j, j + 1) for j in range(joint_count - 1)]


class _Walker:
    """Smooth parametric motion of one stick figure."""

    def __init__(self, rest: np.ndarray, rng: np.random.Generator):
        self.rest = rest * rng.uniform(0.9, 1.1)
        self.centre = np.array([rng.uniform(-0.8, 0.8), rng.uniform(2.0, 3.0), 0.0])
        self.radius = rng.uniform(0.3, 0.8, size=2)
        self.omega = rng.uniform(0.2, 0.5) * rng.choice([-1.0, 1.0])
        self.gait = rng.uniform(4.0, 7.0)
        self.phase = rng.uniform(0, 2 * np.pi)
        self.amp = rng.uniform(0.3, 0.6)

    def joints(self, t: float) -> np.ndarray:
        rest = self.rest.copy()
        J = len(rest)
        swing = self.amp * np.sin(self.gait * t + self.phase)
        if J == 17:
            for joint, pivot, sign in _COCO17_SWING:
                arm = rest[joint] - rest[pivot]
                rest[joint] = rest[pivot] + _rot_x(sign * swing) @ arm
        else:
            rest[:, 0] += 0.1 * swing * np.cos(np.arange(J) + t)
        heading = self.omega * t + self.phase
        pos = self.centre + np.array([self.radius[0] * np.cos(self.omega * t),
                                      self.radius[1] * np.sin(self.omega * t), 0.0])
        return rest @ _rot_z(heading).T + pos


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def synth_dataset(n_frames: int, points_per_frame: int, joint_count: int = 17,
                  noise_sigma: float = 0.02, rng_seed: int = 0,
                  n_trajectories: int = 1) -> Dataset:
    """Generate labeled radar frames from a moving stick figure.

    Points lie on bones (uniform along total bone length) plus isotropic
    Gaussian noise.  Doppler is the radial speed of the underlying bone
    point between consecutive frames, as seen from a radar at the origin.
    Frames are split into ``n_trajectories`` contiguous runs, each with its
    own body and path; a frame's ``group`` is its trajectory id.
    """
    if min(n_frames, points_per_frame, joint_count, n_trajectories) < 1:
        raise ValueError("all counts must be >= 1")
    rng = np.random.default_rng(rng_seed)
    rest, bones = skeleton_topology(joint_count)
    walkers = [_Walker(rest, rng) for _ in range(n_trajectories)]
    left, right = default_hip_indices(joint_count)
    bounds = np.linspace(0, n_frames, n_trajectories + 1).astype(int)

    frames = []
    for fid in range(n_frames):
        group = int(np.searchsorted(bounds, fid, side="right") - 1)
        walker = walkers[group]
        t = (fid - bounds[group]) * FRAME_PERIOD
        now, nxt = walker.joints(t), walker.joints(t + FRAME_PERIOD)
        if bones:
            a, b = np.array(bones).T
            lengths = np.linalg.norm(now[b] - now[a], axis=1)
            which = rng.choice(len(bones), size=points_per_frame, p=lengths / lengths.sum())
            u = rng.random(points_per_frame)[:, None]
            surf = (1 - u) * now[a[which]] + u * now[b[which]]
            surf_next = (1 - u) * nxt[a[which]] + u * nxt[b[which]]
        else:
            surf = np.repeat(now, points_per_frame, axis=0)
            surf_next = np.repeat(nxt, points_per_frame, axis=0)
        pos = surf + noise_sigma * rng.standard_normal(surf.shape)
        radial = np.linalg.norm(surf_next, axis=1) - np.linalg.norm(surf, axis=1)
        doppler = radial / FRAME_PERIOD
        intensity = rng.uniform(5.0, 40.0, size=points_per_frame)
        pts = np.column_stack([pos, doppler, intensity])
        frames.append(sort_points(RadarFrame(fid, pts, Skeleton(now, left, right), group)))
    return Dataset(tuple(frames), joint_count, name="synthetic")


def bone_distance(points: np.ndarray, skeleton: Skeleton, bones=None) -> np.ndarray:
    """Distance from each point to the nearest bone segment."""
    if bones is None:
        _, bones = skeleton_topology(skeleton.joint_count)
    joints = skeleton.joints
    if not bones:
        return np.linalg.norm(points[:, None, :] - joints[None], axis=2).min(axis=1)
    a, b = np.array(bones).T
    A, B = joints[a], joints[b]
    d = B - A
    rel = points[:, None, :] - A[None]
    u = np.clip(np.einsum("pbk,bk->pb", rel, d) / np.maximum((d * d).sum(1), 1e-300), 0, 1)
    closest = A[None] + u[..., None] * d[None]
    return np.linalg.norm(points[:, None, :] - closest, axis=2).min(axis=1)
