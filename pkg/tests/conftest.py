import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_instance(rng, n, d=3, sigma=1.5, p_scale=0.3, density=1.0):
    """Landmarks at roughly ``density`` points per unit volume with momenta of RMS p_scale * sigma."""
    side = (n / density) ** (1.0 / d)
    q = rng.uniform(0.0, side, size=(n, d))
    p = rng.normal(0.0, p_scale * sigma / np.sqrt(d), size=(n, d))
    return q, p


# acceptance results as (criterion, part, status, detail); printed once at the end of the run
ACCEPTANCE = []


def record(criterion, part, ok, detail, status=None):
    ACCEPTANCE.append((criterion, part, status or ("PASS" if ok else "FAIL"), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    by_crit = {}
    for crit, part, status, detail in ACCEPTANCE:
        by_crit.setdefault(crit, []).append((part, status, detail))
    for crit in sorted(by_crit):
        parts = by_crit[crit]
        statuses = {s for _, s, _ in parts}
        overall = "FAIL" if "FAIL" in statuses else ("UNVERIFIED" if statuses - {"PASS"} else "PASS")
        detail = "; ".join(f"{p}: {s} {d}" for p, s, d in parts)
        terminalreporter.write_line(f"criterion {crit:>2} {overall:<10} {detail}")
