import time

import pytest

from sqdfluid.distributions import parse_dist
from sqdfluid.invariant import solve

TABLE_DISTS = [
    "exp",
    "gamma:alpha=3",
    "weibull:a=2",
    "weibull:a=0.5",
    "lognormal:sigma=1/3",
    "pareto:alpha=3",
    "pareto:alpha=1.5",
    "burr:c=2",
]


_STATES = {}
SOLVE_SECONDS = {}


def solved(spec: str, lam: float = 0.5, d: int = 2, ell_max: int = 50):
    """Solve once per session; wall time of the first solve goes to ``SOLVE_SECONDS``."""
    key = (spec, lam, d, ell_max)
    if key not in _STATES:
        t0 = time.perf_counter()
        _STATES[key] = solve(lam, d, parse_dist(spec), ell_max=ell_max)
        SOLVE_SECONDS[key] = time.perf_counter() - t0
    return _STATES[key]


@pytest.fixture(params=TABLE_DISTS)
def table_state(request):
    return solved(request.param)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
