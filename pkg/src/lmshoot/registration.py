"""Landmark registration by geodesic shooting, and the persisted result document.

``register`` optimizes the initial momentum of the template with L-BFGS and
reports the before/after landmark distances. Results are saved as a
versioned JSON document that holds enough state (template, momenta, config)
to rebuild the trajectory later for warping.
"""

from __future__ import annotations

import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .hamiltonian import ShootingConfig, compute_gradient, integrate_forward
from .landmarks import LandmarkSet, RigidTransform, average_dist, check_pair, max_dist, procrustes_align
from .lbfgs import LbfgsParams, OptimHistory, minimize

__all__ = [
    "SCHEMA_VERSION",
    "RegistrationResult",
    "ResultDocumentError",
    "register",
    "initial_momenta",
    "save_result",
    "load_result",
    "config_from_dict",
]

SCHEMA_VERSION = 1
_CONFIG_KEYS = ("sigma", "timesteps", "lam", "max_iter", "precision", "backend", "block_size", "threads", "seed")


class ResultDocumentError(ValueError):
    """A result document is missing, stale or corrupt."""


@dataclass(eq=False)
class RegistrationResult:
    template: LandmarkSet
    target: LandmarkSet
    p0: np.ndarray
    warped: LandmarkSet
    config: ShootingConfig
    metrics: dict
    history: OptimHistory
    wall_times: dict = field(default_factory=dict)
    alignment: RigidTransform | None = None

    @property
    def losses(self):
        return self.history.losses


def initial_momenta(template, target, timesteps: int) -> np.ndarray:
    """Starting guess (target - template) / T."""
    return (np.asarray(target, dtype=np.float64) - np.asarray(template, dtype=np.float64)) / timesteps


def register(template, target, cfg: ShootingConfig | None = None, procrustes: bool = False,
             p0=None, lbfgs: LbfgsParams | None = None, callback=None) -> RegistrationResult:
    """Match ``template`` onto ``target``.

    With ``procrustes`` the target is first rigidly aligned to the template;
    metrics then compare against the aligned target.
    """
    cfg = cfg or ShootingConfig()
    template = template if isinstance(template, LandmarkSet) else LandmarkSet(template)
    target = target if isinstance(target, LandmarkSet) else LandmarkSet(target)
    check_pair(template, target)
    alignment = None
    if procrustes:
        alignment, target = procrustes_align(target, template)

    dtype = cfg.dtype
    q0 = template.points.astype(dtype)
    tgt = target.points.astype(dtype)
    shape = q0.shape
    backend = cfg.make_backend()
    grad_times = []

    def objective(x):
        t0 = time.perf_counter()
        value, grad = compute_gradient(x.reshape(shape).astype(dtype), q0, tgt, cfg, backend)
        grad_times.append(time.perf_counter() - t0)
        return value, grad.ravel()

    x0 = initial_momenta(q0, tgt, cfg.timesteps) if p0 is None else np.asarray(p0, dtype=np.float64)
    if x0.shape != shape:
        raise ValueError(f"initial momenta shape {x0.shape} != {shape}")
    params = lbfgs or LbfgsParams(max_iter=cfg.max_iter)

    start = time.perf_counter()
    x, hist = minimize(objective, x0.ravel(), params, callback)
    p_star = x.reshape(shape).astype(dtype)
    warped = integrate_forward(q0, p_star, cfg, backend).final
    total = time.perf_counter() - start

    metrics = {
        "avg_before": average_dist(template, target),
        "max_before": max_dist(template, target),
        "avg_after": average_dist(warped, target),
        "max_after": max_dist(warped, target),
    }
    times = {
        "total": total,
        "per_gradient_mean": float(np.mean(grad_times)) if grad_times else 0.0,
        "gradient_evaluations": len(grad_times),
    }
    return RegistrationResult(template, target, p_star, LandmarkSet(warped), cfg, metrics, hist, times, alignment)


def _config_dict(cfg: ShootingConfig) -> dict:
    d = asdict(cfg)
    return {k: d[k] for k in _CONFIG_KEYS}


def config_from_dict(d: dict) -> ShootingConfig:
    try:
        return ShootingConfig(**{k: d[k] for k in _CONFIG_KEYS})
    except KeyError as exc:
        raise ResultDocumentError(f"config section lacks {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ResultDocumentError(f"invalid config section: {exc}") from None


def _points(a) -> list:
    # float64 repr round-trips exactly; float32 values are exact in float64
    return np.asarray(a, dtype=np.float64).tolist()


def result_document(res: RegistrationResult) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": _config_dict(res.config),
        "metrics": dict(res.metrics),
        "history": {
            "termination": res.history.termination,
            "iterations": res.history.iterations,
            "loss": [r.loss for r in res.history.records],
            "grad_norm": [r.grad_norm for r in res.history.records],
            "step": [r.step for r in res.history.records],
            "evaluations": [r.evaluations for r in res.history.records],
        },
        "timing": {
            "note": "wall-clock seconds; environment-dependent, recorded not asserted",
            "machine": platform.machine(),
            **res.wall_times,
        },
        "template": _points(res.template.points),
        "momenta": _points(res.p0),
        "warped": _points(res.warped.points),
    }
    if res.alignment is not None:
        doc["alignment"] = {
            "rotation": _points(res.alignment.rotation),
            "translation": _points(res.alignment.translation),
        }
    return doc


def save_result(res: RegistrationResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result_document(res), fh, indent=1)
        fh.write("\n")


def load_result(path) -> dict:
    """Read and validate a result document.

    Returns a dict with keys ``config`` (ShootingConfig), ``template``,
    ``momenta``, ``warped`` (arrays in the configured precision) and ``raw``.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"result document not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ResultDocumentError(f"{path}: not a valid result document ({exc})") from None
    if not isinstance(raw, dict):
        raise ResultDocumentError(f"{path}: not a valid result document")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ResultDocumentError(f"{path}: unsupported schema version {raw.get('schema_version')!r}")
    for key in ("config", "template", "momenta", "warped"):
        if key not in raw:
            raise ResultDocumentError(f"{path}: missing section {key!r}")
    cfg = config_from_dict(raw["config"])
    arrays = {}
    for key in ("template", "momenta", "warped"):
        try:
            a = np.asarray(raw[key], dtype=np.float64)
        except (TypeError, ValueError):
            raise ResultDocumentError(f"{path}: section {key!r} is not numeric") from None
        if a.ndim != 2 or a.shape[1] not in (2, 3) or not np.all(np.isfinite(a)):
            raise ResultDocumentError(f"{path}: section {key!r} is not an (N, 2|3) finite array")
        arrays[key] = a.astype(cfg.dtype)
    if not arrays["template"].shape == arrays["momenta"].shape == arrays["warped"].shape:
        raise ResultDocumentError(f"{path}: template, momenta and warped shapes differ")
    return {"config": cfg, "raw": raw, **arrays}
