import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_points(rng, n, lo=0.2, hi=math.pi - 0.2):
    return rng.uniform(lo, hi, n), rng.uniform(0.0, 2 * math.pi, n)


@pytest.fixture(scope="session")
def street_spec():
    from spherevortex.equilibria import StreetSpec

    return StreetSpec(2, math.pi / 4, 1.0, "type1")


@pytest.fixture(scope="session")
def solved_street(street_spec):
    from spherevortex.patch import steady_patch_solve

    return steady_patch_solve(street_spec, 0.02, 16)


# acceptance checks append (criterion, item, ok, detail); printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    by_crit = {}
    for crit, item, ok, detail in ACCEPTANCE:
        by_crit.setdefault(crit, []).append((item, ok, detail))
    for crit in sorted(by_crit, key=lambda c: int(c.split()[0][1:])):
        items = by_crit[crit]
        verdict = "PASS" if all(ok for _, ok, _ in items) else "FAIL"
        failed = [f"{i} ({d})" for i, ok, d in items if not ok]
        tail = "; failing: " + "; ".join(failed) if failed else ""
        tr.write_line(f"{verdict} {crit}{tail}")
