"""The precompute strategy stores every pairwise term before summing.

That costs N^2 * width * itemsize bytes, so it stops being an option long
before the on-the-fly strategies feel any memory pressure. The blocked
strategy only ever holds one block of terms per worker.
"""

import numpy as np

from lmshoot import reduction as R
from lmshoot.errors import MemoryBudgetError

rng = np.random.default_rng(0)
blocked = R.Backend("blocked")
precompute = R.Backend("precompute")
print(f"{'N':>7} {'precompute bytes':>18} {'blocked bytes':>14}")
for n in (1000, 5000, 20000, 50000):
    q = rng.uniform(0, 10, size=(n, 3))
    p = rng.normal(size=(n, 3))
    term = R.forward_term(q, p, 1.5)
    print(f"{n:7d} {precompute.aux_bytes(term):18,d} {blocked.aux_bytes(term):14,d}")

q = rng.uniform(0, 10, size=(20000, 3))
try:
    precompute.reduce(R.forward_term(q, np.ones_like(q), 1.5))
except MemoryBudgetError as exc:
    print(f"\nrefused: {exc}")
