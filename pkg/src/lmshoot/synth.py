"""Synthetic template/target pairs generated through the forward model.

Targets are the endpoint q(1) of the shooting flow from random momenta, so
each pair is exactly reachable and a registration should nearly interpolate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .hamiltonian import ShootingConfig, integrate_forward
from .landmarks import LandmarkSet, load_landmarks

__all__ = ["SynthSpec", "SynthPair", "make_points", "make_pair"]

KINDS = ("sphere", "grid", "file")


@dataclass(frozen=True)
class SynthSpec:
    """How to build a synthetic pair.

    ``extent`` is the sphere diameter or the grid side length in mm.
    ``momentum_scale`` s is the RMS length of one landmark momentum.
    """

    kind: str = "sphere"
    n: int = 1847
    dim: int = 3
    extent: float = 24.0
    momentum_scale: float = 0.75
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("kind 'file' needs a path")
        if self.kind != "file" and int(self.n) < 1:
            raise ValueError("n must be >= 1")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if not self.extent > 0:
            raise ValueError("extent must be positive")
        if not self.momentum_scale >= 0:
            raise ValueError("momentum scale must be >= 0")


@dataclass(frozen=True, eq=False)
class SynthPair:
    template: LandmarkSet
    target: LandmarkSet
    momenta: np.ndarray


def _fibonacci(n, dim, radius):
    k = np.arange(n, dtype=np.float64) + 0.5
    if dim == 2:
        a = 2.0 * np.pi * k / n
        return radius * np.column_stack([np.cos(a), np.sin(a)])
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    return radius * np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _grid(n, dim, side, rng):
    per = int(np.ceil(n ** (1.0 / dim)))
    axes = [np.linspace(-0.5 * side, 0.5 * side, per)] * dim
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)[:n]
    spacing = side / max(per - 1, 1)
    return pts + rng.uniform(-0.25 * spacing, 0.25 * spacing, size=pts.shape)


def make_points(spec: SynthSpec, rng=None) -> np.ndarray:
    """Template points for ``spec`` in 64-bit."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    if spec.kind == "sphere":
        return _fibonacci(spec.n, spec.dim, 0.5 * spec.extent)
    if spec.kind == "grid":
        return _grid(spec.n, spec.dim, spec.extent, rng)
    return load_landmarks(spec.path, expected_dim=spec.dim).points.astype(np.float64)


def make_pair(spec: SynthSpec, cfg: ShootingConfig | None = None) -> SynthPair:
    """Flow random momenta from the template and return (template, target, momenta).

    Each momentum component is drawn from N(0, s^2 / d), so E|p_i|^2 = s^2.
    The flow always runs in 64-bit; only sigma and T are taken from ``cfg``.
    """
    cfg = replace(cfg or ShootingConfig(), precision="f64")
    rng = np.random.default_rng(spec.seed)
    q0 = make_points(spec, rng)
    p0 = rng.normal(0.0, spec.momentum_scale / np.sqrt(q0.shape[1]), size=q0.shape)
    if spec.momentum_scale == 0:
        target = q0.copy()
    else:
        target = integrate_forward(q0, p0, cfg).final
    return SynthPair(LandmarkSet(q0), LandmarkSet(target), p0)
