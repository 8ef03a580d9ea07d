"""Landmark sets, text I/O, rigid Procrustes alignment and mismatch metrics.

Landmarks correspond by index: row ``i`` of a template matches row ``i`` of
a target. Coordinates are in millimeters.
"""

from __future__ import annotations

import os
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import LandmarkFormatError, ShapeMismatchError

__all__ = [
    "LandmarkSet",
    "RigidTransform",
    "load_landmarks",
    "save_landmarks",
    "procrustes_align",
    "average_dist",
    "max_dist",
]

_SPLIT = re.compile(r"[,\s]+")


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """N landmarks in d dimensions (d in {2, 3}).

    The coordinate array is copied and made read-only so a set can be shared
    freely between threads.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, copy=True)
        if pts.dtype not in (np.float32, np.float64):
            pts = pts.astype(np.float64)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise ValueError(f"landmarks must be an (N, 2) or (N, 3) array, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("a landmark set needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("landmark coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.count

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.points
        return self.points.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.array_equal(self.points, other.points))

    __hash__ = None

    def __repr__(self):
        return f"LandmarkSet(count={self.count}, dim={self.dim}, dtype={self.points.dtype})"


def _as_points(x) -> np.ndarray:
    if isinstance(x, LandmarkSet):
        return x.points
    return np.asarray(x)


def check_pair(a, b):
    a = _as_points(a)
    b = _as_points(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"landmark sets differ in shape: {a.shape} vs {b.shape}")
    return a, b


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x -> rotation @ x + translation, with rotation in SO(d)."""

    rotation: np.ndarray
    translation: np.ndarray = field(default=None)

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64)
        d = rot.shape[0]
        if rot.shape != (d, d):
            raise ValueError("rotation must be square")
        t = np.zeros(d) if self.translation is None else np.array(self.translation, dtype=np.float64)
        if t.shape != (d,):
            raise ValueError("translation must have length d")
        rot.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, dim: int) -> "RigidTransform":
        return cls(np.eye(dim), np.zeros(dim))

    def apply(self, points):
        pts = _as_points(points)
        out = pts.astype(np.float64) @ self.rotation.T + self.translation
        return LandmarkSet(out) if isinstance(points, LandmarkSet) else out

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def inverse_apply(self, points):
        return self.inverse().apply(points)


def load_landmarks(path, expected_dim: int | None = None, dtype=np.float64) -> LandmarkSet:
    """Read a landmark text file.

    One landmark per line, fields separated by commas and/or whitespace.
    Blank lines and lines starting with ``#`` are skipped. Errors carry the
    offending line number.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"landmark file not found: {path}")
    rows = []
    width = expected_dim
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = [t for t in _SPLIT.split(line) if t]
            if width is None:
                width = len(tokens)
            if len(tokens) != width:
                raise LandmarkFormatError(
                    f"inconsistent field count at line {lineno}: expected {width}, got {len(tokens)}",
                    path,
                    lineno,
                )
            try:
                rows.append([float(t) for t in tokens])
            except ValueError:
                bad = next(t for t in tokens if not _is_float(t))
                raise LandmarkFormatError(f"non-numeric token {bad!r} at line {lineno}", path, lineno) from None
            if not all(np.isfinite(rows[-1])):
                raise LandmarkFormatError(f"non-finite coordinate at line {lineno}", path, lineno)
    if not rows:
        raise LandmarkFormatError("empty landmark file (no data lines)", path, 0)
    if width not in (2, 3):
        raise LandmarkFormatError(f"landmarks must have 2 or 3 fields, found {width} at line 1", path, 1)
    return LandmarkSet(np.array(rows, dtype=dtype))


def _is_float(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def save_landmarks(landmarks, path, header: str | None = None) -> None:
    """Write landmarks so that loading them back is exact.

    32-bit data is written with 9 significant digits, 64-bit with 17.
    """
    pts = _as_points(landmarks)
    digits = 9 if pts.dtype == np.float32 else 17
    fmt = ",".join([f"%.{digits}g"] * pts.shape[1])
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        if header:
            for hl in header.splitlines():
                fh.write(f"# {hl}\n")
        for row in pts:
            fh.write(fmt % tuple(row.tolist()) + "\n")


def procrustes_align(moving, fixed):
    """Rigidly align ``moving`` onto ``fixed`` (rotation + translation, no scaling).

    Minimizes sum_i ||R m_i + t - f_i||^2 via the SVD of the cross-covariance
    of the centered sets. Reflections are removed by flipping the smallest
    singular direction.

    Returns ``(transform, aligned_moving)``.
    """
    m, f = check_pair(moving, fixed)
    m = m.astype(np.float64)
    f = f.astype(np.float64)
    n, d = m.shape
    if n < d:
        raise ValueError(f"Procrustes needs at least d={d} landmarks, got {n}")
    mc = m.mean(axis=0)
    fc = f.mean(axis=0)
    m0 = m - mc
    f0 = f - fc
    scale = max(np.abs(m).max(), 1.0)
    if np.abs(m0).max() <= 1e-14 * scale:
        warnings.warn("moving landmarks are all coincident; rotation is undefined, using identity", RuntimeWarning, stacklevel=2)
        rot = np.eye(d)
    else:
        u, _, vt = np.linalg.svd(m0.T @ f0)
        v = vt.T
        flip = np.ones(d)
        flip[-1] = np.sign(np.linalg.det(v @ u.T)) or 1.0
        rot = (v * flip) @ u.T
    tf = RigidTransform(rot, fc - rot @ mc)
    aligned = tf.apply(m)
    if isinstance(moving, LandmarkSet):
        aligned = LandmarkSet(aligned)
    return tf, aligned


def _pointwise(a, b):
    a, b = check_pair(a, b)
    return np.sqrt(np.sum((a.astype(np.float64) - b.astype(np.float64)) ** 2, axis=1))


def average_dist(a, b) -> float:
    """Mean Euclidean distance between corresponding landmarks (64-bit)."""
    return float(np.mean(_pointwise(a, b)))


def max_dist(a, b) -> float:
    """Largest Euclidean distance between corresponding landmarks."""
    return float(np.max(_pointwise(a, b)))
