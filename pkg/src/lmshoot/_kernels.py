"""Compiled pairwise-term tiles and row reducers.

Every pairwise quantity in the package is produced by ``_tile``: for a row
``i`` and a run of ``m`` consecutive columns starting at ``j0`` it writes the
per-pair contribution vectors into ``buf[:, :m]``. The three reducers only
differ in how they add those columns up, so all backends see bit-identical
terms and differ only in summation order.

Point arrays are passed transposed, shape (d, n), so the column loops are
contiguous.
"""

import numpy as np
from numba import njit, prange

FORWARD = 0
ADJOINT = 1
VELOCITY = 2
ENERGY = 3
CONSTANT = 4
TABLE = 5

# Cody-Waite split of ln 2; adding _SHIFT rounds to an integer held in the low mantissa bits
_LOG2E = 1.4426950408889634
_LN2HI = 6.93147180369123816490e-01
_LN2LO = 1.90821492927058770002e-10
_SHIFT = 6755399441055744.0
_SHIFT_BITS = np.int64(np.array([_SHIFT]).view(np.int64)[0])

_SCRATCH_ROWS = 1
SEQ_TILE = 256


@njit(inline="always")
def _exp_into(e, m, cutoff, kb, e64, nbits):
    # kb[:m] = exp(e[:m]); arguments below `cutoff` flush to exactly zero.
    # Branch-free and conversion-free so LLVM vectorizes it; a libm call would not.
    tview = nbits.view(np.float64)
    for jj in range(m):
        x0 = np.float64(e[jj])
        x = x0 if x0 > cutoff else cutoff
        t = x * _LOG2E + _SHIFT
        n = t - _SHIFT
        r = (x - n * _LN2HI) - n * _LN2LO
        p = 1.6059043836821613e-10
        p = p * r + 2.08767569878681e-09
        p = p * r + 2.505210838544172e-08
        p = p * r + 2.755731922398589e-07
        p = p * r + 2.7557319223985893e-06
        p = p * r + 2.48015873015873e-05
        p = p * r + 0.0001984126984126984
        p = p * r + 0.001388888888888889
        p = p * r + 0.008333333333333333
        p = p * r + 0.041666666666666664
        p = p * r + 0.16666666666666666
        p = p * r + 0.5
        p = p * r + 1.0
        p = p * r + 1.0
        tview[jj] = t
        e64[jj] = p if x0 > cutoff else 0.0
    for jj in range(m):
        nbits[jj] = (nbits[jj] - _SHIFT_BITS + 1023) << 52
    for jj in range(m):
        kb[jj] = e64[jj] * tview[jj]


@njit(inline="always")
def _gauss_into(i, j0, m, XT, YT, half, cutoff, kb, e64, nbits):
    # kb[jj] = exp(-|x_i - y_j|^2 * half); d is fixed at 3 (2-D data arrives zero padded)
    x0 = XT[0, i]
    x1 = XT[1, i]
    x2 = XT[2, i]
    y0 = YT[0, j0:j0 + m]
    y1 = YT[1, j0:j0 + m]
    y2 = YT[2, j0:j0 + m]
    for jj in range(m):
        a = x0 - y0[jj]
        b = x1 - y1[jj]
        c = x2 - y2[jj]
        kb[jj] = -(((a * a) + b * b) + c * c) * half
    _exp_into(kb, m, cutoff, kb, e64, nbits)


@njit(fastmath={"contract"})
def _tile(kind, i, j0, m, width, XT, YT, PT, AT, BT, prm, cutoff, buf, sc, e64, nbits):
    inv_s2 = prm[0]
    half = prm[1]
    kb = sc[0]
    if kind == FORWARD or kind == VELOCITY or kind == ENERGY:
        _gauss_into(i, j0, m, XT, YT, half, cutoff, kb, e64, nbits)
        q0 = PT[0, j0:j0 + m]
        q1 = PT[1, j0:j0 + m]
        q2 = PT[2, j0:j0 + m]
        if kind == VELOCITY:
            b0 = buf[0]
            b1 = buf[1]
            b2 = buf[2]
            for jj in range(m):
                k = kb[jj]
                b0[jj] = k * q0[jj]
                b1[jj] = k * q1[jj]
                b2[jj] = k * q2[jj]
            return
        p0 = PT[0, i]
        p1 = PT[1, i]
        p2 = PT[2, i]
        if kind == ENERGY:
            b0 = buf[0]
            for jj in range(m):
                b0[jj] = (((p0 * q0[jj]) + p1 * q1[jj]) + p2 * q2[jj]) * kb[jj]
            return
        x0 = XT[0, i]
        x1 = XT[1, i]
        x2 = XT[2, i]
        y0 = YT[0, j0:j0 + m]
        y1 = YT[1, j0:j0 + m]
        y2 = YT[2, j0:j0 + m]
        b0 = buf[0]
        b1 = buf[1]
        b2 = buf[2]
        b3 = buf[3]
        b4 = buf[4]
        b5 = buf[5]
        for jj in range(m):
            k = kb[jj]
            g = -(inv_s2 * (((p0 * q0[jj]) + p1 * q1[jj]) + p2 * q2[jj])) * k
            b0[jj] = k * q0[jj]
            b1[jj] = k * q1[jj]
            b2[jj] = k * q2[jj]
            b3[jj] = g * (x0 - y0[jj])
            b4[jj] = g * (x1 - y1[jj])
            b5[jj] = g * (x2 - y2[jj])
    elif kind == ADJOINT:
        _gauss_into(i, j0, m, XT, YT, half, cutoff, kb, e64, nbits)
        x0 = XT[0, i]
        x1 = XT[1, i]
        x2 = XT[2, i]
        p0 = PT[0, i]
        p1 = PT[1, i]
        p2 = PT[2, i]
        a0 = AT[0, i]
        a1 = AT[1, i]
        a2 = AT[2, i]
        c0 = BT[0, i]
        c1 = BT[1, i]
        c2 = BT[2, i]
        y0 = YT[0, j0:j0 + m]
        y1 = YT[1, j0:j0 + m]
        y2 = YT[2, j0:j0 + m]
        q0 = PT[0, j0:j0 + m]
        q1 = PT[1, j0:j0 + m]
        q2 = PT[2, j0:j0 + m]
        u0 = AT[0, j0:j0 + m]
        u1 = AT[1, j0:j0 + m]
        u2 = AT[2, j0:j0 + m]
        v0 = BT[0, j0:j0 + m]
        v1 = BT[1, j0:j0 + m]
        v2 = BT[2, j0:j0 + m]
        b0 = buf[0]
        b1 = buf[1]
        b2 = buf[2]
        b3 = buf[3]
        b4 = buf[4]
        b5 = buf[5]
        for jj in range(m):
            k = kb[jj]
            dq0 = y0[jj] - x0
            dq1 = y1[jj] - x1
            dq2 = y2[jj] - x2
            db0 = v0[jj] - c0
            db1 = v1[jj] - c1
            db2 = v2[jj] - c2
            pp = ((p0 * q0[jj]) + p1 * q1[jj]) + p2 * q2[jj]
            pa = ((p0 * u0[jj] + q0[jj] * a0) + (p1 * u1[jj] + q1[jj] * a1)) + (p2 * u2[jj] + q2[jj] * a2)
            qb = ((dq0 * db0) + dq1 * db1) + dq2 * db2
            ks = inv_s2 * k
            w = qb * inv_s2
            b0[jj] = ks * (dq0 * pa + pp * (w * dq0 - db0))
            b1[jj] = ks * (dq1 * pa + pp * (w * dq1 - db1))
            b2[jj] = ks * (dq2 * pa + pp * (w * dq2 - db2))
            kq = ks * qb
            b3[jj] = k * u0[jj] + kq * q0[jj]
            b4[jj] = k * u1[jj] + kq * q1[jj]
            b5[jj] = k * u2[jj] + kq * q2[jj]
    elif kind == CONSTANT:
        for w in range(width):
            for jj in range(m):
                buf[w, jj] = prm[2]
    else:  # TABLE: XT holds values laid out as (n_rows, n_cols * width)
        for w in range(width):
            for jj in range(m):
                buf[w, jj] = XT[i, (j0 + jj) * width + w]


@njit(parallel=True, cache=True)
def reduce_sequential(nchunk, kind, n_rows, n_cols, width, XT, YT, PT, AT, BT, prm, cutoff, out):
    dt = out.dtype
    for ch in prange(nchunk):
        lo = ch * n_rows // nchunk
        hi = (ch + 1) * n_rows // nchunk
        buf = np.empty((width, SEQ_TILE), dtype=dt)
        sc = np.empty((_SCRATCH_ROWS, SEQ_TILE), dtype=dt)
        e64 = np.empty(SEQ_TILE, dtype=np.float64)
        nbits = np.empty(SEQ_TILE, dtype=np.int64)
        acc = np.empty(width, dtype=dt)
        for i in range(lo, hi):
            acc[:] = 0
            for j0 in range(0, n_cols, SEQ_TILE):
                m = min(SEQ_TILE, n_cols - j0)
                _tile(kind, i, j0, m, width, XT, YT, PT, AT, BT, prm, cutoff, buf, sc, e64, nbits)
                for w in range(width):
                    a = acc[w]
                    for jj in range(m):
                        a += buf[w, jj]
                    acc[w] = a
            for w in range(width):
                out[i, w] = acc[w]


@njit(parallel=True, cache=True)
def reduce_blocked(nchunk, kind, n_rows, n_cols, width, block, XT, YT, PT, AT, BT, prm, cutoff, out):
    dt = out.dtype
    for ch in prange(nchunk):
        lo = ch * n_rows // nchunk
        hi = (ch + 1) * n_rows // nchunk
        buf = np.empty((width, block), dtype=dt)
        sc = np.empty((_SCRATCH_ROWS, block), dtype=dt)
        e64 = np.empty(block, dtype=np.float64)
        nbits = np.empty(block, dtype=np.int64)
        acc = np.empty(width, dtype=dt)
        for i in range(lo, hi):
            acc[:] = 0
            for j0 in range(0, n_cols, block):
                m = min(block, n_cols - j0)
                _tile(kind, i, j0, m, width, XT, YT, PT, AT, BT, prm, cutoff, buf, sc, e64, nbits)
                for w in range(width):
                    for jj in range(m, block):
                        buf[w, jj] = 0
                h = block // 2
                while h >= 1:
                    for w in range(width):
                        for k in range(h):
                            buf[w, k] += buf[w, k + h]
                    h //= 2
                for w in range(width):
                    acc[w] += buf[w, 0]
            for w in range(width):
                out[i, w] = acc[w]


@njit(parallel=True, cache=True)
def fill_terms(nchunk, kind, n_rows, n_cols, width, XT, YT, PT, AT, BT, prm, cutoff, mat):
    # mat has shape (width, n_rows, n_cols)
    dt = mat.dtype
    for ch in prange(nchunk):
        lo = ch * n_rows // nchunk
        hi = (ch + 1) * n_rows // nchunk
        buf = np.empty((width, SEQ_TILE), dtype=dt)
        sc = np.empty((_SCRATCH_ROWS, SEQ_TILE), dtype=dt)
        e64 = np.empty(SEQ_TILE, dtype=np.float64)
        nbits = np.empty(SEQ_TILE, dtype=np.int64)
        for i in range(lo, hi):
            for j0 in range(0, n_cols, SEQ_TILE):
                m = min(SEQ_TILE, n_cols - j0)
                _tile(kind, i, j0, m, width, XT, YT, PT, AT, BT, prm, cutoff, buf, sc, e64, nbits)
                for w in range(width):
                    for jj in range(m):
                        mat[w, i, j0 + jj] = buf[w, jj]


@njit(cache=True)
def eval_pair(kind, i, j, width, XT, YT, PT, AT, BT, prm, cutoff, out):
    dt = out.dtype
    buf = np.empty((width, 1), dtype=dt)
    sc = np.empty((_SCRATCH_ROWS, 1), dtype=dt)
    e64 = np.empty(1, dtype=np.float64)
    nbits = np.empty(1, dtype=np.int64)
    _tile(kind, i, j, 1, width, XT, YT, PT, AT, BT, prm, cutoff, buf, sc, e64, nbits)
    for w in range(width):
        out[w] = buf[w, 0]


@njit(cache=True)
def tree_sum_1d(values):
    n = values.shape[0]
    if n == 0:
        return values.dtype.type(0)
    size = 1
    while size < n:
        size *= 2
    buf = np.zeros(size, dtype=values.dtype)
    buf[:n] = values
    h = size // 2
    while h >= 1:
        for k in range(h):
            buf[k] += buf[k + h]
        h //= 2
    return buf[0]


@njit(cache=True)
def sequential_sum_1d(values):
    acc = values.dtype.type(0)
    for k in range(values.shape[0]):
        acc += values[k]
    return acc


@njit(cache=True, fastmath={"contract"})
def fast_exp(x, cutoff):
    """Vector exp used by the tiles, exposed for testing."""
    n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    e64 = np.empty(n, dtype=np.float64)
    nbits = np.empty(n, dtype=np.int64)
    _exp_into(x, n, cutoff, out, e64, nbits)
    return out
