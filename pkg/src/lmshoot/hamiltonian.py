"""Hamiltonian landmark dynamics, the shooting loss and its exact discrete gradient.

With a Gaussian kernel K_ij = exp(-|q_i - q_j|^2 / (2 sigma^2)) the kinetic
energy is H = 1/2 sum_ij (p_i . p_j) K_ij. Landmarks flow by explicit Euler

    q_{t+1} = q_t + dt * dH/dp,    p_{t+1} = p_t - dt * dH/dq,    dt = 1/T

and the loss of an initial momentum p0 is

    E(p0) = H(q0, p0) + lambda * |q_T - target|^2.

``compute_gradient`` returns dE/dp0 by running the transpose of the Euler
recursion backwards over the stored trajectory, so it is the gradient of the
discrete loss up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import reduction as R
from .errors import DivergenceError, ShapeMismatchError

__all__ = [
    "ShootingConfig",
    "Trajectory",
    "AdjointState",
    "gaussian_kernel",
    "hamiltonian",
    "hamiltonian_derivatives",
    "integrate_forward",
    "loss",
    "adjoint_step",
    "compute_gradient",
]

PRECISIONS = {"f32": np.float32, "f64": np.float64, "float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class ShootingConfig:
    """Parameters of one shooting problem.

    Defaults are the values used for the 1847-landmark experiments:
    sigma = 1.5 mm, T = 40, lambda = 5e5, 400 optimizer iterations.
    """

    sigma: float = 1.5
    timesteps: int = 40
    lam: float = 500000.0
    max_iter: int = 400
    precision: str = "f64"
    backend: str = "blocked"
    block_size: int = 256
    threads: int | None = None
    seed: int = 0
    memory_budget: int = R.DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if int(self.timesteps) < 1:
            raise ValueError("timesteps must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be f32 or f64, got {self.precision!r}")
        object.__setattr__(self, "precision", "f32" if PRECISIONS[self.precision] is np.float32 else "f64")
        object.__setattr__(self, "backend", R.resolve_strategy(self.backend))
        # validates block size and thread count
        self.make_backend()

    @property
    def dtype(self):
        return np.dtype(PRECISIONS[self.precision])

    @property
    def dt(self) -> float:
        return 1.0 / self.timesteps

    def make_backend(self) -> R.Backend:
        return R.Backend(self.backend, self.block_size, self.threads, self.memory_budget)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Stored states (q_t, p_t) for t = 0..T, arrays of shape (T+1, N, d)."""

    q: np.ndarray
    p: np.ndarray
    sigma: float
    dt: float

    @property
    def timesteps(self) -> int:
        return self.q.shape[0] - 1

    @property
    def final(self) -> np.ndarray:
        return self.q[-1]

    @property
    def dtype(self):
        return self.q.dtype


class AdjointState(NamedTuple):
    alpha: np.ndarray
    beta: np.ndarray


def _backend(backend) -> R.Backend:
    if backend is None:
        return R.Backend()
    if isinstance(backend, str):
        return R.Backend(backend)
    return backend


def _pair(q, p, dtype=None):
    q = np.asarray(q)
    p = np.asarray(p)
    if q.shape != p.shape or q.ndim != 2:
        raise ShapeMismatchError(f"positions {q.shape} and momenta {p.shape} must both be (N, d)")
    if dtype is None:
        dtype = np.result_type(q.dtype, p.dtype, np.float32)
    return q.astype(dtype, copy=False), p.astype(dtype, copy=False)


def gaussian_kernel(r_sq, sigma):
    """exp(-r_sq / (2 sigma^2)); works elementwise on arrays."""
    return np.exp(-np.asarray(r_sq, dtype=np.float64) / (2.0 * sigma * sigma))


def hamiltonian(q, p, sigma, backend=None) -> float:
    """Kinetic energy 1/2 sum_ij (p_i . p_j) K_ij, always accumulated in 64-bit."""
    q, p = _pair(q, p, np.float64)
    rows = _backend(backend).reduce(R.energy_term(q, p, sigma))
    return 0.5 * float(np.sum(rows))


def hamiltonian_derivatives(q, p, sigma, backend=None):
    """Return ``(H_q, H_p)``, the partial derivatives of H, in the input precision.

    H_p[i] = sum_j K_ij p_j
    H_q[i] = -(1/sigma^2) sum_j (p_i . p_j) K_ij (q_i - q_j)
    """
    q, p = _pair(q, p)
    d = q.shape[1]
    sums = _backend(backend).reduce(R.forward_term(q, p, sigma))
    return sums[:, d:], sums[:, :d]


def integrate_forward(q0, p0, cfg: ShootingConfig, backend=None) -> Trajectory:
    """Explicit Euler over T steps of size 1/T, keeping every state."""
    dtype = cfg.dtype
    q, p = _pair(q0, p0, dtype)
    be = backend or cfg.make_backend()
    T = cfg.timesteps
    dt = dtype.type(cfg.dt)
    qs = np.empty((T + 1,) + q.shape, dtype=dtype)
    ps = np.empty_like(qs)
    qs[0] = q
    ps[0] = p
    for t in range(T):
        hq, hp = hamiltonian_derivatives(qs[t], ps[t], cfg.sigma, be)
        qs[t + 1] = qs[t] + hp * dt
        ps[t + 1] = ps[t] - hq * dt
        if not (np.isfinite(qs[t + 1]).all() and np.isfinite(ps[t + 1]).all()):
            raise DivergenceError(f"integration diverged at timestep {t + 1}", step=t + 1)
    return Trajectory(qs, ps, float(cfg.sigma), float(cfg.dt))


def loss(traj: Trajectory, target, lam, backend=None) -> float:
    """H(q0, p0) + lambda * |q_T - target|^2 in 64-bit."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != traj.final.shape:
        raise ShapeMismatchError(f"target shape {target.shape} != landmark shape {traj.final.shape}")
    kinetic = hamiltonian(traj.q[0], traj.p[0], traj.sigma, backend)
    diff = traj.final.astype(np.float64) - target
    return kinetic + float(lam) * float(np.sum(diff * diff))


def adjoint_step(q, p, alpha, beta, sigma, backend=None):
    """Transpose-Jacobian product of the Hamiltonian field (H_p, -H_q) at (q, p).

    Returns ``(d_alpha, d_beta)`` = (dF/dq)^T (alpha, beta), (dF/dp)^T (alpha, beta).
    """
    q, p = _pair(q, p)
    alpha = np.asarray(alpha, dtype=q.dtype)
    beta = np.asarray(beta, dtype=q.dtype)
    if alpha.shape != q.shape or beta.shape != q.shape:
        raise ShapeMismatchError("adjoint variables must match the landmark shape")
    d = q.shape[1]
    sums = _backend(backend).reduce(R.adjoint_term(q, p, alpha, beta, sigma))
    return sums[:, :d], sums[:, d:]


def backward(traj: Trajectory, target, lam, backend=None) -> AdjointState:
    """Run the discrete adjoint from t = T down to t = 0."""
    dtype = traj.dtype
    dt = dtype.type(traj.dt)
    alpha = (2.0 * float(lam) * (traj.final.astype(np.float64) - np.asarray(target, dtype=np.float64))).astype(dtype)
    beta = np.zeros_like(alpha)
    for t in range(traj.timesteps - 1, -1, -1):
        da, db = adjoint_step(traj.q[t], traj.p[t], alpha, beta, traj.sigma, backend)
        alpha = alpha + da * dt
        beta = beta + db * dt
    return AdjointState(alpha, beta)


def compute_gradient(p0, q0, target, cfg: ShootingConfig, backend=None):
    """Loss and gradient with respect to the initial momentum.

    Gradient evaluation runs in ``cfg.precision``; the loss scalar and the
    returned gradient are 64-bit.
    """
    q0 = np.asarray(q0)
    p0 = np.asarray(p0)
    target = np.asarray(target)
    if not (q0.shape == p0.shape == target.shape):
        raise ShapeMismatchError(f"shapes differ: q0 {q0.shape}, p0 {p0.shape}, target {target.shape}")
    be = backend or cfg.make_backend()
    traj = integrate_forward(q0, p0, cfg, be)
    value = loss(traj, target, cfg.lam, be)
    adj = backward(traj, target, cfg.lam, be)
    _, hp0 = hamiltonian_derivatives(traj.q[0], traj.p[0], cfg.sigma, be)
    grad = adj.beta.astype(np.float64) + hp0.astype(np.float64)
    return value, grad
