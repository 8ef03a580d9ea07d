"""Benchmark harness comparing reduction backends and precisions.

Each row times one forward evaluation (H_q, H_p) plus one adjoint step on a
fixed-seed random instance and compares the row sums with a 64-bit
sequential oracle computed on the same instance. Times are local
measurements; nothing here asserts a speedup.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import reduction as R
from .errors import MemoryBudgetError
from .hamiltonian import adjoint_step, hamiltonian_derivatives

__all__ = ["BenchRow", "BenchReport", "bench_instance", "run_bench"]

_FIELDS = ("backend", "precision", "n", "status", "mean_time", "speedup", "max_abs_error",
           "rel_error", "aux_bytes", "repeats")


@dataclass(frozen=True)
class BenchRow:
    backend: str
    precision: str
    n: int
    status: str = "ok"
    mean_time: float = float("nan")
    speedup: float = float("nan")
    max_abs_error: float = float("nan")
    rel_error: float = float("nan")
    aux_bytes: int = 0
    repeats: int = 0
    note: str = ""


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    sigma: float = 1.5
    seed: int = 0
    threads: int | None = None

    def row(self, backend, precision, n) -> BenchRow:
        for r in self.rows:
            if (r.backend, r.precision, r.n) == (backend, precision, n):
                return r
        raise KeyError((backend, precision, n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=_FIELDS + ("note",), lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(asdict(r))
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "sigma": self.sigma,
            "seed": self.seed,
            "threads": self.threads,
            "note": "times are wall-clock seconds on this machine; environment-dependent",
            "rows": [asdict(r) for r in self.rows],
        }, indent=1)

    def table(self) -> str:
        head = f"{'backend':<11}{'prec':<6}{'N':>7}{'time[s]':>12}{'speedup':>9}{'max_abs_err':>13}{'rel_err':>11}{'aux[B]':>13}"
        lines = [head]
        for r in self.rows:
            if r.status != "ok":
                lines.append(f"{r.backend:<11}{r.precision:<6}{r.n:>7}  {r.status}: {r.note}")
                continue
            lines.append(f"{r.backend:<11}{r.precision:<6}{r.n:>7}{r.mean_time:>12.4g}{r.speedup:>9.2f}"
                         f"{r.max_abs_error:>13.3e}{r.rel_error:>11.3e}{r.aux_bytes:>13d}")
        return "\n".join(lines)


def bench_instance(n, dim=3, sigma=1.5, seed=0):
    """Random (q, p, alpha, beta) with about one landmark per cubic mm."""
    rng = np.random.default_rng(seed)
    side = n ** (1.0 / dim)
    q = rng.uniform(0.0, side, size=(n, dim))
    p = rng.normal(0.0, 0.5 * sigma / np.sqrt(dim), size=(n, dim))
    a = rng.normal(size=(n, dim))
    b = rng.normal(size=(n, dim))
    return q, p, a, b


def _evaluate(inst, sigma, backend, dtype):
    q, p, a, b = (x.astype(dtype) for x in inst)
    hq, hp = hamiltonian_derivatives(q, p, sigma, backend)
    da, db = adjoint_step(q, p, a, b, sigma, backend)
    return np.concatenate([hq, hp, da, db], axis=1)


def _aux_bytes(backend, inst, sigma, dtype):
    q, p, a, b = (x.astype(dtype) for x in inst)
    terms = (R.forward_term(q, p, sigma), R.adjoint_term(q, p, a, b, sigma))
    return max(backend.aux_bytes(t) for t in terms)


def run_bench(sizes=(500, 1000, 2000), backends=R.STRATEGIES, precisions=("f32", "f64"), repeats=5,
              sigma=1.5, seed=0, block_size=256, threads=None, memory_budget=R.DEFAULT_MEMORY_BUDGET,
              progress=None) -> BenchReport:
    report = BenchReport(sigma=sigma, seed=seed, threads=threads)
    backends = [R.resolve_strategy(b) for b in backends]
    dtypes = {"f32": np.float32, "f64": np.float64}
    for prec in precisions:
        if prec not in dtypes:
            raise ValueError(f"unknown precision {prec!r}")
    oracle_be = R.Backend("sequential", block_size, threads, memory_budget)
    for n in sizes:
        inst = bench_instance(n, sigma=sigma, seed=seed)
        oracle = _evaluate(inst, sigma, oracle_be, np.float64)
        scale = float(np.max(np.abs(oracle))) or 1.0
        base_time = None
        rows = []
        # baseline first so every other row can report its speedup
        combos = [("sequential", "f64")] + [(b, p) for b in backends for p in precisions if (b, p) != ("sequential", "f64")]
        for be_name, prec in combos:
            be = R.Backend(be_name, block_size, threads, memory_budget)
            dtype = dtypes[prec]
            aux = _aux_bytes(be, inst, sigma, dtype)
            try:
                _evaluate(inst, sigma, be, dtype)  # warm-up, not timed
            except MemoryBudgetError as exc:
                rows.append(BenchRow(be_name, prec, n, status="skipped", aux_bytes=aux, note=str(exc)))
                continue
            times = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                out = _evaluate(inst, sigma, be, dtype)
                times.append(time.perf_counter() - t0)
            mean = float(np.mean(times))
            if base_time is None:
                base_time = mean
            err = float(np.max(np.abs(out.astype(np.float64) - oracle)))
            row = BenchRow(be_name, prec, n, "ok", mean, base_time / mean, err, err / scale, aux, repeats)
            rows.append(row)
            if progress is not None:
                progress(row)
        wanted = {(b, p) for b in backends for p in precisions}
        report.rows.extend(r for r in rows if (r.backend, r.precision) in wanted or (r.backend, r.precision) == ("sequential", "f64"))
    return report
