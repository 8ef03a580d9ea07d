"""Why summation order matters in single precision.

A naive double loop adds every pairwise term into one running accumulator,
so rounding error grows with the number of terms. A binary tree keeps the
partial sums of similar magnitude and the error grows only with log n. This
is the accuracy argument for the blocked reduction backend.
"""

import numpy as np

from lmshoot import reduction as R
from lmshoot.hamiltonian import hamiltonian_derivatives

print("Summing n copies of 0.1 in float32")
for k in (10, 14, 18, 20, 22):
    v = np.full(2**k, 0.1, dtype=np.float32)
    exact = float(np.float32(0.1)) * v.size
    seq = abs(float(R.sequential_sum(v)) - exact) / exact
    tree = abs(float(R.tree_sum(v)) - exact) / exact
    print(f"  n = 2^{k:<3d} sequential rel err {seq:.2e}   tree rel err {tree:.2e}")

print("\nRow sums of the forward term (H_p, H_q), float32 inputs, vs a float64 oracle")
rng = np.random.default_rng(0)
for n in (1000, 4000, 8000):
    q = rng.uniform(0, n ** (1 / 3), size=(n, 3)).astype(np.float32)
    p = rng.normal(0, 0.3, size=(n, 3)).astype(np.float32)
    hq64, hp64 = hamiltonian_derivatives(q.astype(np.float64), p.astype(np.float64), 1.5, R.Backend("sequential"))
    ref = np.concatenate([hq64, hp64], axis=1)
    line = f"  N = {n:5d}"
    for name in ("sequential", "precompute", "blocked"):
        hq, hp = hamiltonian_derivatives(q, p, 1.5, R.Backend(name))
        err = np.max(np.abs(np.concatenate([hq, hp], axis=1) - ref))
        line += f"   {name} {err:.2e}"
    print(line)
