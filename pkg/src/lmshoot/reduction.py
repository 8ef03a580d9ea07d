"""Row-wise marginalization of pairwise terms.

Geodesic shooting spends nearly all of its time in sums of the form
``out[i] = sum_j f(i, j)`` over all landmark pairs. Three interchangeable
strategies are provided:

``sequential``
    one running accumulator per row, columns added strictly in ascending
    order (the naive single-threaded double loop).
``precompute``
    materialize every term in an (n_rows, n_cols) matrix per output
    component, then reduce with a matrix-vector product against a ones
    vector. Needs O(N^2) memory and refuses to run over its budget.
``blocked``
    columns are cut into blocks of ``block_size``; each block is summed by
    pairwise halving (zero padded past the end) and block partials are
    added in ascending block order. Auxiliary memory is O(block_size) per
    worker and the result does not depend on the thread count.

Terms are described by :class:`PairTerm` and evaluated on the fly by
compiled tiles, so every strategy adds up bit-identical values.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _kernels as K
from .errors import MemoryBudgetError, ShapeMismatchError

__all__ = [
    "PairTerm",
    "Backend",
    "STRATEGIES",
    "BLOCK_SIZES",
    "forward_term",
    "adjoint_term",
    "velocity_term",
    "energy_term",
    "constant_term",
    "table_term",
    "reduce_rows_sequential",
    "reduce_rows_precompute",
    "reduce_rows_blocked",
    "tree_sum",
    "sequential_sum",
    "precompute_bytes",
    "resolve_strategy",
]

STRATEGIES = ("sequential", "precompute", "blocked")
BLOCK_SIZES = (32, 64, 128, 256, 512, 1024)
DEFAULT_MEMORY_BUDGET = 4 * 2**30

ALIASES = {
    "seq": "sequential",
    "sequential": "sequential",
    "matrix": "precompute",
    "precompute": "precompute",
    "precompute_matrix": "precompute",
    "blocked": "blocked",
    "blocked_tree": "blocked",
    "tree": "blocked",
}


def resolve_strategy(name: str) -> str:
    try:
        return ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown reduction strategy {name!r}; choose from {sorted(ALIASES)}") from None


def _flush_cutoff(dtype) -> float:
    # exp arguments below this give subnormals in `dtype`; those kernel values flush to 0
    return float(np.log(np.finfo(dtype).tiny))


_EMPTY = {np.dtype(np.float32): np.zeros((1, 0), np.float32), np.dtype(np.float64): np.zeros((1, 0), np.float64)}


@dataclass(frozen=True, eq=False)
class PairTerm:
    """A pairwise contribution f(i, j) -> R^width evaluated on the fly.

    Build instances with the ``*_term`` constructors rather than directly.
    """

    kind: int
    kernel_width: int
    n_rows: int
    n_cols: int
    dtype: np.dtype
    arrays: tuple
    params: np.ndarray
    cutoff: float = field(default=-np.inf)
    columns: tuple | None = None

    @property
    def width(self) -> int:
        return self.kernel_width if self.columns is None else len(self.columns)

    def _args(self):
        return (*self.arrays, self.params, self.cutoff)

    def _select(self, sums):
        if self.columns is None:
            return sums
        return np.ascontiguousarray(sums[..., list(self.columns)])

    def evaluate(self, i: int, j: int) -> np.ndarray:
        """Contribution of the single pair (i, j)."""
        if not (0 <= i < self.n_rows and 0 <= j < self.n_cols):
            raise IndexError(f"pair ({i}, {j}) out of range for {self.n_rows}x{self.n_cols}")
        out = np.empty(self.kernel_width, dtype=self.dtype)
        K.eval_pair(self.kind, i, j, self.kernel_width, *self._args(), out)
        return self._select(out)


def _prep(a, dtype):
    # (n, d) -> contiguous (3, n); 2-D data gets a zero third row, which leaves
    # every sum, product and distance bit-identical
    a = np.asarray(a, dtype=dtype)
    if a.ndim != 2 or a.shape[1] not in (2, 3):
        raise ValueError(f"expected an (n, 2) or (n, 3) array, got shape {a.shape}")
    out = np.zeros((3, a.shape[0]), dtype=dtype)
    out[: a.shape[1]] = a.T
    return out


def _split_columns(d):
    # kernel emits [first 3-vector, second 3-vector]; keep the first d of each
    return None if d == 3 else tuple(range(d)) + tuple(range(3, 3 + d))


def _params(sigma, dtype, const=0.0):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    inv_s2 = 1.0 / (float(sigma) ** 2)
    return np.array([inv_s2, 0.5 * inv_s2, const], dtype=dtype)


def _dtype_of(*arrays, dtype=None):
    if dtype is not None:
        return np.dtype(dtype)
    dt = np.result_type(*[np.asarray(a).dtype for a in arrays])
    return np.dtype(np.float32) if dt == np.float32 else np.dtype(np.float64)


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"array shapes differ: {sorted(shapes)}")


def forward_term(q, p, sigma, dtype=None) -> PairTerm:
    """Terms of (H_p, H_q): width 2d, [K_ij p_j, -(p_i.p_j) K_ij (q_i - q_j) / sigma^2]."""
    dt = _dtype_of(q, p, dtype=dtype)
    _same_shape(q, p)
    qt, pt = _prep(q, dt), _prep(p, dt)
    d, n = np.shape(q)[1], qt.shape[1]
    e = _EMPTY[dt]
    return PairTerm(K.FORWARD, 6, n, n, dt, (qt, qt, pt, e, e), _params(sigma, dt), _flush_cutoff(dt), _split_columns(d))


def adjoint_term(q, p, alpha, beta, sigma, dtype=None) -> PairTerm:
    """Terms of the transposed-Jacobian product (d_alpha, d_beta): width 2d."""
    dt = _dtype_of(q, p, alpha, beta, dtype=dtype)
    _same_shape(q, p, alpha, beta)
    qt, pt, at, bt = (_prep(a, dt) for a in (q, p, alpha, beta))
    d, n = np.shape(q)[1], qt.shape[1]
    return PairTerm(K.ADJOINT, 6, n, n, dt, (qt, qt, pt, at, bt), _params(sigma, dt), _flush_cutoff(dt), _split_columns(d))


def velocity_term(x, q, p, sigma, dtype=None) -> PairTerm:
    """Terms of the dense velocity at query points x: width d, K(x_m, q_l) p_l."""
    dt = _dtype_of(q, p, dtype=dtype)
    _same_shape(q, p)
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != np.shape(q)[1]:
        raise ValueError("query points and landmarks differ in dimension")
    xt, qt, pt = _prep(x, dt), _prep(q, dt), _prep(p, dt)
    d, n = np.shape(q)[1], qt.shape[1]
    e = _EMPTY[dt]
    cols = None if d == 3 else tuple(range(d))
    return PairTerm(K.VELOCITY, 3, xt.shape[1], n, dt, (xt, qt, pt, e, e), _params(sigma, dt), _flush_cutoff(dt), cols)


def energy_term(q, p, sigma, dtype=None) -> PairTerm:
    """Scalar terms (p_i.p_j) K_ij whose total is twice the Hamiltonian."""
    dt = _dtype_of(q, p, dtype=dtype)
    _same_shape(q, p)
    qt, pt = _prep(q, dt), _prep(p, dt)
    n = qt.shape[1]
    e = _EMPTY[dt]
    return PairTerm(K.ENERGY, 1, n, n, dt, (qt, qt, pt, e, e), _params(sigma, dt), _flush_cutoff(dt))


def constant_term(value, n_rows, n_cols, width=1, dtype=np.float64) -> PairTerm:
    """f(i, j) = value in every component."""
    dt = np.dtype(dtype)
    e = _EMPTY[dt]
    prm = np.array([1.0, 0.5, value], dtype=dt)
    return PairTerm(K.CONSTANT, int(width), int(n_rows), int(n_cols), dt, (e, e, e, e, e), prm)


def table_term(values) -> PairTerm:
    """f(i, j) = values[i, j] for an explicit (n_rows, n_cols[, width]) array.

    Mostly useful for testing reducers against arbitrary inputs.
    """
    v = np.asarray(values)
    dt = _dtype_of(v)
    if v.ndim == 2:
        v = v[:, :, None]
    n_rows, n_cols, width = v.shape
    flat = np.ascontiguousarray(v, dtype=dt).reshape(n_rows, n_cols * width)
    e = _EMPTY[dt]
    prm = np.array([1.0, 0.5, 0.0], dtype=dt)
    return PairTerm(K.TABLE, width, n_rows, n_cols, dt, (flat, e, e, e, e), prm)


@contextlib.contextmanager
def _threads(n):
    if n is None:
        yield
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    old = numba.get_num_threads()
    numba.set_num_threads(n)
    try:
        yield
    finally:
        numba.set_num_threads(old)


def _chunks(term):
    # rows are independent, so chunking never changes results
    return max(1, min(term.n_rows, 4 * numba.get_num_threads()))


def reduce_rows_sequential(term: PairTerm, threads=None) -> np.ndarray:
    """Naive double loop: one accumulator per row, columns in ascending order.

    Runs on a single thread whatever ``threads`` says; it is the baseline the
    other strategies are measured against.
    """
    out = np.empty((term.n_rows, term.kernel_width), dtype=term.dtype)
    with _threads(1):
        K.reduce_sequential(1, term.kind, term.n_rows, term.n_cols, term.kernel_width, *term._args(), out)
    return term._select(out)


def precompute_bytes(term: PairTerm) -> int:
    """Bytes the precompute strategy must allocate for ``term``."""
    return term.n_rows * term.n_cols * term.kernel_width * term.dtype.itemsize


def reduce_rows_precompute(term: PairTerm, memory_budget=DEFAULT_MEMORY_BUDGET, threads=None) -> np.ndarray:
    need = precompute_bytes(term)
    if need > memory_budget:
        raise MemoryBudgetError(need, memory_budget)
    w = term.kernel_width
    mat = np.empty((w, term.n_rows, term.n_cols), dtype=term.dtype)
    with _threads(threads):
        K.fill_terms(_chunks(term), term.kind, term.n_rows, term.n_cols, w, *term._args(), mat)
    ones = np.ones(term.n_cols, dtype=term.dtype)
    sums = mat.reshape(w * term.n_rows, term.n_cols) @ ones
    return term._select(np.ascontiguousarray(sums.reshape(w, term.n_rows).T))


def _check_block(block_size):
    if block_size not in BLOCK_SIZES:
        raise ValueError(f"block_size must be one of {BLOCK_SIZES}, got {block_size}")


def reduce_rows_blocked(term: PairTerm, block_size=256, threads=None) -> np.ndarray:
    _check_block(block_size)
    out = np.empty((term.n_rows, term.kernel_width), dtype=term.dtype)
    with _threads(threads):
        K.reduce_blocked(_chunks(term), term.kind, term.n_rows, term.n_cols, term.kernel_width, int(block_size), *term._args(), out)
    return term._select(out)


def tree_sum(values):
    """Sum by pairwise halving after zero padding to a power of two.

    The summation order is the one ``blocked`` uses within a block. Returns
    a scalar of the input dtype.
    """
    v = np.ascontiguousarray(values)
    if v.dtype not in (np.float32, np.float64):
        v = v.astype(np.float64)
    return K.tree_sum_1d(v.ravel())


def sequential_sum(values):
    """Strict left-to-right sum in the input dtype (reference for tree_sum)."""
    v = np.ascontiguousarray(values)
    if v.dtype not in (np.float32, np.float64):
        v = v.astype(np.float64)
    return K.sequential_sum_1d(v.ravel())


@dataclass(frozen=True)
class Backend:
    """A reduction strategy plus its knobs.

    ``threads=None`` uses numba's current thread count.
    """

    strategy: str = "blocked"
    block_size: int = 256
    threads: int | None = None
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "strategy", resolve_strategy(self.strategy))
        _check_block(self.block_size)
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be >= 1")

    def reduce(self, term: PairTerm) -> np.ndarray:
        if self.strategy == "sequential":
            return reduce_rows_sequential(term, self.threads)
        if self.strategy == "precompute":
            return reduce_rows_precompute(term, self.memory_budget, self.threads)
        return reduce_rows_blocked(term, self.block_size, self.threads)

    def aux_bytes(self, term: PairTerm) -> int:
        """Auxiliary memory the strategy allocates for one reduction."""
        if self.strategy == "precompute":
            return precompute_bytes(term)
        workers = 1 if self.strategy == "sequential" else (self.threads or numba.get_num_threads())
        tile = self.block_size if self.strategy == "blocked" else K.SEQ_TILE
        w = term.kernel_width
        per_worker = (w + 1) * tile * term.dtype.itemsize + 16 * tile + w * term.dtype.itemsize
        return workers * per_worker
