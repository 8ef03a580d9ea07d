import os
import subprocess
import sys

import numba
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmshoot import reduction as R
from lmshoot._kernels import fast_exp
from lmshoot.errors import MemoryBudgetError

from conftest import random_instance

STRATS = R.STRATEGIES


def reduce(term, strategy, **kw):
    return R.Backend(strategy, **kw).reduce(term)


def loop_oracle(term):
    """Row sums from single-pair evaluations, accumulated with math.fsum."""
    import math

    out = np.empty((term.n_rows, term.width))
    for i in range(term.n_rows):
        vals = np.array([term.evaluate(i, j) for j in range(term.n_cols)], dtype=np.float64)
        out[i] = [math.fsum(col) for col in vals.T]
    return out


def dense_forward(q, p, sigma):
    diff = q[:, None, :] - q[None, :, :]
    k = np.exp(-np.sum(diff**2, -1) / (2 * sigma**2))
    c = p @ p.T
    hp = k @ p
    hq = -np.einsum("ij,ijk->ik", c * k, diff) / sigma**2
    return hq, hp


class TestTerms:
    def test_forward_matches_dense(self, rng):
        q, p = random_instance(rng, 40)
        sums = reduce(R.forward_term(q, p, 1.5), "sequential")
        hq, hp = dense_forward(q, p, 1.5)
        np.testing.assert_allclose(sums[:, :3], hp, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(sums[:, 3:], hq, rtol=1e-12, atol=1e-14)

    def test_two_dimensional_columns(self, rng):
        q, p = random_instance(rng, 30, d=2)
        sums = reduce(R.forward_term(q, p, 1.5), "blocked")
        assert sums.shape == (30, 4)
        hq, hp = dense_forward(q, p, 1.5)
        np.testing.assert_allclose(sums[:, :2], hp, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(sums[:, 2:], hq, rtol=1e-12, atol=1e-14)

    def test_velocity_rectangular(self, rng):
        q, p = random_instance(rng, 25)
        x = rng.uniform(0, 3, size=(7, 3))
        v = reduce(R.velocity_term(x, q, p, 1.5), "blocked")
        k = np.exp(-np.sum((x[:, None] - q[None]) ** 2, -1) / (2 * 1.5**2))
        np.testing.assert_allclose(v, k @ p, rtol=1e-12, atol=1e-14)

    def test_energy_symmetric_kernel(self, rng):
        q, p = random_instance(rng, 20)
        t = R.energy_term(q, p, 1.5)
        for i, j in [(0, 1), (3, 17), (19, 2)]:
            assert t.evaluate(i, j)[0] == t.evaluate(j, i)[0]

    def test_evaluate_out_of_range(self):
        t = R.constant_term(1.0, 3, 3)
        with pytest.raises(IndexError):
            t.evaluate(3, 0)

    def test_shape_mismatch(self, rng):
        from lmshoot.errors import ShapeMismatchError

        with pytest.raises(ShapeMismatchError):
            R.forward_term(np.zeros((3, 3)), np.zeros((4, 3)), 1.0)

    @pytest.mark.parametrize("strategy", STRATS)
    def test_table_term_matches_fsum(self, rng, strategy):
        vals = rng.normal(size=(9, 301, 2))
        t = R.table_term(vals)
        np.testing.assert_allclose(reduce(t, strategy), loop_oracle(t), rtol=1e-13, atol=1e-13)


class TestExamples:
    @pytest.mark.parametrize("strategy", STRATS)
    def test_zero(self, strategy):
        out = reduce(R.constant_term(0.0, 17, 33, width=3), strategy)
        assert out.shape == (17, 3) and not out.any()

    @pytest.mark.parametrize("strategy", STRATS)
    def test_ones_exact(self, strategy):
        out = reduce(R.constant_term(1.0, 1000, 1000), strategy)
        assert np.all(out == 1000.0)

    @pytest.mark.parametrize("strategy", STRATS)
    def test_random_n200_vs_sequential(self, rng, strategy):
        q, p = random_instance(rng, 200)
        ref = reduce(R.forward_term(q, p, 1.5), "sequential")
        out = reduce(R.forward_term(q, p, 1.5), strategy)
        np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())

    def test_blocked_beats_sequential_on_million_tenths(self):
        n = 10**6
        t = R.constant_term(0.1, 1, n, dtype=np.float32)
        exact = float(np.float32(0.1)) * n
        seq = abs(float(reduce(t, "sequential")[0, 0]) - exact)
        blk = abs(float(reduce(t, "blocked", block_size=256)[0, 0]) - exact)
        assert blk < seq

    def test_precompute_budget_arithmetic(self):
        # width-1 f32 term at N = 50000 needs N^2 * 4 bytes
        t = R.constant_term(1.0, 50000, 50000, dtype=np.float32)
        assert R.precompute_bytes(t) == 50000**2 * 4
        with pytest.raises(MemoryBudgetError) as info:
            reduce(t, "precompute")
        assert info.value.required == 10**10
        assert info.value.available == 4 * 2**30
        assert "10000000000" in str(info.value)

    def test_precompute_budget_includes_width(self, rng):
        q, p = random_instance(rng, 20)
        t = R.forward_term(q, p, 1.5)
        assert R.precompute_bytes(t) == 20 * 20 * 6 * 8
        with pytest.raises(MemoryBudgetError):
            reduce(t, "precompute", memory_budget=20 * 20 * 6 * 8 - 1)
        reduce(t, "precompute", memory_budget=20 * 20 * 6 * 8)

    def test_invalid_block_size(self):
        with pytest.raises(ValueError):
            R.Backend("blocked", block_size=100)

    def test_aliases(self):
        assert R.Backend("matrix").strategy == "precompute"
        assert R.Backend("seq").strategy == "sequential"
        assert R.Backend("blocked_tree").strategy == "blocked"
        with pytest.raises(ValueError):
            R.Backend("gpu")


class TestTreeSum:
    def test_empty(self):
        assert R.tree_sum(np.array([], dtype=np.float64)) == 0.0

    def test_single(self):
        assert R.tree_sum(np.array([2.5])) == 2.5

    def test_million_tenths_f32(self):
        v = np.full(2**20, 0.1, dtype=np.float32)
        exact = 104857.6
        assert abs(float(R.tree_sum(v)) - exact) < abs(float(R.sequential_sum(v)) - exact)

    def test_order_is_pairwise_halving(self):
        v = np.array([1.0, 2.0, 4.0, 8.0, 16.0], dtype=np.float64)
        assert R.tree_sum(v) == 31.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), max_size=300))
    def test_close_to_fsum(self, xs):
        import math

        v = np.array(xs, dtype=np.float64)
        bound = 1e-13 * (np.abs(v).sum() + 1)
        assert abs(R.tree_sum(v) - math.fsum(xs)) <= bound


THREAD_SCRIPT = """
import numba
import numpy as np
from lmshoot import reduction as R
assert numba.config.NUMBA_NUM_THREADS == 8
rng = np.random.default_rng(3)
q = rng.uniform(0, 9, size=(777, 3))
p = rng.normal(size=(777, 3))
for dtype in (np.float32, np.float64):
    t = R.forward_term(q.astype(dtype), p.astype(dtype), 1.5)
    blocked = [R.Backend("blocked", threads=k).reduce(t) for k in (1, 2, 8)]
    print("ok" if all(np.array_equal(b, blocked[0]) for b in blocked) else "differ")
    # the other strategies are repeatable at each fixed thread count
    same = all(np.array_equal(R.Backend(s, threads=k).reduce(t), R.Backend(s, threads=k).reduce(t))
               for s in ("sequential", "precompute") for k in (1, 2, 8))
    print("ok" if same else "differ")
"""


class TestDeterminism:
    @pytest.mark.parametrize("strategy", STRATS)
    def test_repeatable(self, rng, strategy):
        q, p = random_instance(rng, 300)
        t = R.adjoint_term(q, p, rng.normal(size=q.shape), rng.normal(size=q.shape), 1.5)
        a = reduce(t, strategy)
        b = reduce(t, strategy)
        np.testing.assert_array_equal(a, b)

    def test_thread_counts_1_2_8(self):
        # numba fixes its pool size at first use, so run in a fresh interpreter allowing 8 threads
        out = subprocess.run([sys.executable, "-c", THREAD_SCRIPT], env={**os.environ, "NUMBA_NUM_THREADS": "8"},
                             capture_output=True, text=True, timeout=600)
        assert out.returncode == 0, out.stderr
        assert out.stdout.split() == ["ok"] * 4


    def test_thread_count_restored(self, rng):
        before = numba.get_num_threads()
        q, p = random_instance(rng, 50)
        reduce(R.forward_term(q, p, 1.5), "blocked", threads=8)
        assert numba.get_num_threads() == before


class TestEquivalence:
    @pytest.mark.parametrize("n", [1, 7, 255, 256, 257, 1000])
    @pytest.mark.parametrize("block", [32, 256, 1024])
    def test_blocks_and_tails(self, rng, n, block):
        q, p = random_instance(rng, n)
        a, b = rng.normal(size=q.shape), rng.normal(size=q.shape)
        for term in (R.forward_term(q, p, 1.5), R.adjoint_term(q, p, a, b, 1.5)):
            ref = reduce(term, "sequential")
            out = reduce(term, "blocked", block_size=block)
            np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12 * max(np.abs(ref).max(), 1e-300))

    def test_f32_close_to_f64(self, rng):
        q, p = random_instance(rng, 500)
        ref = reduce(R.forward_term(q, p, 1.5), "sequential")
        for s in STRATS:
            out = reduce(R.forward_term(q.astype(np.float32), p.astype(np.float32), 1.5), s)
            assert out.dtype == np.float32
            np.testing.assert_allclose(out, ref, atol=1e-4 * np.abs(ref).max())


class TestMemory:
    def test_blocked_aux_independent_of_n(self, rng):
        be = R.Backend("blocked")
        small = be.aux_bytes(R.forward_term(*random_instance(rng, 100), 1.5))
        big = be.aux_bytes(R.forward_term(*random_instance(rng, 20000), 1.5))
        assert small == big

    def test_precompute_aux_quadratic(self, rng):
        be = R.Backend("precompute")
        assert be.aux_bytes(R.forward_term(*random_instance(rng, 200), 1.5)) == 200 * 200 * 6 * 8


class TestFastExp:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_accuracy(self, dtype):
        x = np.linspace(-700, 0, 200001)
        ref = np.exp(x)
        cutoff = float(np.log(np.finfo(dtype).tiny))
        got = fast_exp(x, cutoff)
        ok = x >= cutoff
        rel = np.abs(got[ok] - ref[ok]) / ref[ok]
        assert rel.max() <= 4 * np.finfo(np.float64).eps
        assert np.all(got[~ok] == 0.0)

    def test_zero(self):
        assert fast_exp(np.zeros(1), -700.0)[0] == 1.0
