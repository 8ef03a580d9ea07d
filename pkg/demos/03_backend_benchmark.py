"""Time the three reduction strategies on this machine.

Each row is one forward evaluation plus one adjoint step. Speedups are
relative to the single-threaded 64-bit sequential loop on the same instance,
and errors are against that loop's 64-bit result. Absolute times depend on
the hardware and the numba thread count.
"""

import sys

from lmshoot.bench import run_bench

sizes = [int(s) for s in sys.argv[1].split(",")] if len(sys.argv) > 1 else [500, 1000, 2000]
report = run_bench(sizes=sizes, repeats=3, progress=lambda r: print(f"  done {r.backend} {r.precision} N={r.n}", file=sys.stderr))
print(report.table())

for n in sizes[1:]:
    prev = sizes[sizes.index(n) - 1]
    ratio = report.row("blocked", "f64", n).mean_time / report.row("blocked", "f64", prev).mean_time
    print(f"blocked f64 time ratio N={n} vs N={prev}: {ratio:.2f} (size ratio squared {(n / prev) ** 2:.2f})")
