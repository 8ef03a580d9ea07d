"""Dense velocity field of a landmark flow and warping of arbitrary points.

The velocity at any point x and timestep t is interpolated from the stored
landmark states, v(x, t) = sum_l K(q_l(t), x) p_l(t). Points are advanced
with the same explicit Euler scheme and step as the landmarks themselves, so
warping the template landmarks reproduces the shooting trajectory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import reduction as R
from .errors import DivergenceError
from .hamiltonian import Trajectory
from .landmarks import save_landmarks

__all__ = ["FlowField", "velocity_at", "warp_points", "export_frames"]


@dataclass(frozen=True, eq=False)
class FlowField:
    trajectory: Trajectory
    backend: R.Backend = R.Backend()

    def __post_init__(self):
        tr = self.trajectory
        if tr.q.ndim != 3 or tr.q.shape != tr.p.shape or tr.q.shape[0] < 2:
            raise ValueError("flow field needs a complete trajectory with at least one step")

    @property
    def sigma(self) -> float:
        return self.trajectory.sigma

    @property
    def timesteps(self) -> int:
        return self.trajectory.timesteps

    def reversed(self) -> "FlowField":
        """The time-reversed flow: states run backwards with negated momenta."""
        tr = self.trajectory
        rev = Trajectory(tr.q[::-1].copy(), -tr.p[::-1], tr.sigma, tr.dt)
        return FlowField(rev, self.backend)


def velocity_at(x, t_index: int, field: FlowField) -> np.ndarray:
    """Velocity at point(s) x using the stored landmark state at ``t_index``.

    ``x`` may be a single d-vector or an (M, d) array; the result has the
    same shape.
    """
    tr = field.trajectory
    if not 0 <= t_index <= tr.timesteps:
        raise IndexError(f"t_index {t_index} outside 0..{tr.timesteps}")
    x = np.asarray(x, dtype=tr.dtype)
    single = x.ndim == 1
    pts = x.reshape(1, -1) if single else x
    if pts.shape[0] == 0:
        return np.zeros_like(pts)
    v = field.backend.reduce(R.velocity_term(pts, tr.q[t_index], tr.p[t_index], tr.sigma))
    return v[0] if single else v


def warp_points(points, field: FlowField) -> np.ndarray:
    """Advance points through the whole flow, t = 0 .. T-1."""
    tr = field.trajectory
    x = np.array(points, dtype=tr.dtype)
    if x.ndim != 2 or x.shape[1] != tr.q.shape[2]:
        raise ValueError(f"points must be (M, {tr.q.shape[2]}), got {x.shape}")
    if x.shape[0] == 0:
        return x
    dt = tr.dtype.type(tr.dt)
    for t in range(tr.timesteps):
        x = x + velocity_at(x, t, field) * dt
        bad = ~np.isfinite(x).all(axis=1)
        if bad.any():
            idx = int(np.flatnonzero(bad)[0])
            raise DivergenceError(f"point {idx} became non-finite at step {t + 1}", step=t + 1, index=idx)
    return x


def frame_indices(timesteps: int, stride: int):
    if stride < 1:
        raise ValueError("stride must be >= 1")
    ts = list(range(0, timesteps + 1, stride))
    if ts[-1] != timesteps:
        ts.append(timesteps)
    return ts


def export_frames(field: FlowField, directory, stride: int = 1):
    """Write q_t every ``stride`` steps (and always the last) as ``frame_{t:04}.txt``.

    Returns the written paths.
    """
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    paths = []
    for t in frame_indices(field.timesteps, stride):
        path = os.path.join(directory, f"frame_{t:04}.txt")
        save_landmarks(field.trajectory.q[t], path)
        paths.append(path)
    return paths
