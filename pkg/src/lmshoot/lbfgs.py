"""Limited-memory BFGS with a strong Wolfe line search.

The objective is a callable ``fun(x) -> (value, gradient)`` on a flat float64
vector. Loss comparisons always use the float64 value returned by ``fun``,
even when the gradient was computed in lower precision.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import NonDescentError

__all__ = ["LbfgsParams", "IterRecord", "OptimHistory", "LineSearchResult", "wolfe_line_search", "minimize"]

log = logging.getLogger(__name__)

GRADIENT_TOLERANCE = "gradient-tolerance"
MAX_ITERATIONS = "max-iterations"
LINE_SEARCH_FAILURE = "line-search-failure"


@dataclass(frozen=True)
class LbfgsParams:
    memory: int = 10
    max_iter: int = 400
    g_tol: float = 1e-6
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 20

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.max_iter < 0 or self.max_ls < 1:
            raise ValueError("max_iter must be >= 0 and max_ls >= 1")


@dataclass(frozen=True)
class IterRecord:
    loss: float
    grad_norm: float
    step: float
    evaluations: int


@dataclass
class OptimHistory:
    """One record per accepted iterate; ``records[0]`` is the starting point."""

    records: list = field(default_factory=list)
    termination: str = ""

    @property
    def losses(self):
        return [r.loss for r in self.records]

    @property
    def iterations(self) -> int:
        return max(len(self.records) - 1, 0)

    @property
    def evaluations(self) -> int:
        return sum(r.evaluations for r in self.records)


@dataclass(frozen=True)
class LineSearchResult:
    step: float
    loss: float
    grad: np.ndarray
    evaluations: int
    converged: bool


def _safe_eval(fun, x):
    try:
        f, g = fun(x)
    except FloatingPointError:
        return math.inf, None
    f = float(f)
    if not math.isfinite(f):
        return math.inf, None
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        return math.inf, None
    return f, g


def _cubic_min(a, fa, ga, b, fb, gb):
    # minimizer of the cubic interpolating (a, fa, ga) and (b, fb, gb); None if it does not exist
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    den = gb - ga + 2.0 * d2
    if den == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / den


def wolfe_line_search(fun, x, direction, f0=None, g0=None, initial_step=1.0, c1=1e-4, c2=0.9, max_steps=20):
    """Find a step along ``direction`` satisfying the strong Wolfe conditions.

        f(x + a d) <= f0 + c1 a g0.d      and      |g(x + a d).d| <= c2 |g0.d|

    Bracketing followed by zoom with safeguarded cubic interpolation. Trial
    points where the objective is non-finite (or raises FloatingPointError)
    are treated as too long and shrink the step. When ``max_steps``
    evaluations pass without meeting both conditions, the best step with
    sufficient decrease is returned and ``converged`` is False; if none was
    found the step is 0.
    """
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    evals = 0
    if f0 is None or g0 is None:
        f0, g0 = _safe_eval(fun, x)
        evals += 1
        if g0 is None:
            raise FloatingPointError("objective is not finite at the line-search origin")
    dg0 = float(np.dot(g0, d))
    if not dg0 < 0:
        raise NonDescentError(f"direction is not a descent direction (g.d = {dg0:.3e})")

    best = (0.0, f0, g0)

    def phi(a):
        nonlocal evals, best
        f, g = _safe_eval(fun, x + a * d)
        evals += 1
        dg = float(np.dot(g, d)) if g is not None else math.nan
        if g is not None and f <= f0 + c1 * a * dg0 and f < best[1]:
            best = (a, f, g)
        return f, g, dg

    def armijo(a, f):
        return f <= f0 + c1 * a * dg0

    def curvature(dg):
        return abs(dg) <= -c2 * dg0

    def result(a, f, g, ok):
        return LineSearchResult(a, f, g, evals, ok)

    def zoom(lo, flo, dglo, hi, fhi, dghi):
        while evals < max_steps:
            width = hi - lo
            a = None
            if math.isfinite(fhi) and math.isfinite(dghi):
                a = _cubic_min(lo, flo, dglo, hi, fhi, dghi)
            if a is None or not (min(lo, hi) + 0.1 * abs(width) <= a <= max(lo, hi) - 0.1 * abs(width)):
                a = lo + 0.5 * width
            f, g, dg = phi(a)
            if g is None or not armijo(a, f) or f >= flo:
                hi, fhi, dghi = a, f, dg
            else:
                if curvature(dg):
                    return result(a, f, g, True)
                if dg * (hi - lo) >= 0:
                    hi, fhi, dghi = lo, flo, dglo
                lo, flo, dglo = a, f, dg
        return None

    a_prev, f_prev, dg_prev = 0.0, f0, dg0
    a = float(initial_step)
    found = None
    first = True
    while evals < max_steps:
        f, g, dg = phi(a)
        if g is None:
            # overshoot into a non-finite region: shrink toward the last good point
            found = zoom(a_prev, f_prev, dg_prev, a, math.inf, math.nan)
            break
        if not armijo(a, f) or (not first and f >= f_prev):
            found = zoom(a_prev, f_prev, dg_prev, a, f, dg)
            break
        if curvature(dg):
            found = result(a, f, g, True)
            break
        if dg >= 0:
            found = zoom(a, f, dg, a_prev, f_prev, dg_prev)
            break
        a_prev, f_prev, dg_prev = a, f, dg
        a = 2.0 * a
        first = False
    if found is not None:
        return found
    a, f, g = best
    return LineSearchResult(a, f, g, evals, False)


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        q -= a * y
        alphas.append(a)
    s, y, _ = pairs[-1]
    q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def minimize(fun, x0, params: LbfgsParams | None = None, callback=None):
    """Minimize ``fun`` from ``x0``; returns ``(x_star, history)``.

    Stops when the gradient infinity-norm drops below ``g_tol``, after
    ``max_iter`` accepted iterations, or when the line search cannot make
    progress even along the steepest-descent direction.
    """
    params = params or LbfgsParams()
    x = np.array(x0, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64).ravel()
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise FloatingPointError("objective is not finite at the starting point")
    hist = OptimHistory()
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    hist.records.append(IterRecord(f, gnorm, 0.0, 1))
    pairs = deque(maxlen=params.memory)

    while True:
        if gnorm < params.g_tol:
            hist.termination = GRADIENT_TOLERANCE
            break
        if hist.iterations >= params.max_iter:
            hist.termination = MAX_ITERATIONS
            break
        if pairs:
            d = _two_loop(g, list(pairs))
            step0 = 1.0
            if not np.dot(d, g) < 0:
                pairs.clear()
        if not pairs:
            d = -g
            step0 = min(1.0, 1.0 / float(np.linalg.norm(g)))
        ls = wolfe_line_search(fun, x, d, f, g, step0, params.c1, params.c2, params.max_ls)
        if ls.step == 0.0:
            if pairs:
                log.debug("line search failed along the quasi-Newton direction; restarting from steepest descent")
                pairs.clear()
                hist.records[-1] = IterRecord(f, gnorm, 0.0, hist.records[-1].evaluations + ls.evaluations)
                continue
            hist.records[-1] = IterRecord(f, gnorm, 0.0, hist.records[-1].evaluations + ls.evaluations)
            hist.termination = LINE_SEARCH_FAILURE
            break
        s = ls.step * d
        x_new = x + s
        y = ls.grad - g
        sy = float(np.dot(s, y))
        if not ls.converged:
            # only sufficient decrease holds: keep the step, drop stale curvature
            pairs.clear()
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, ls.loss, ls.grad
        gnorm = float(np.max(np.abs(g)))
        hist.records.append(IterRecord(f, gnorm, ls.step, ls.evaluations))
        if callback is not None:
            callback(x, hist)
    return x, hist
