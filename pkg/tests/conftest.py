"""Shared fixtures plus the acceptance-criteria report.

Acceptance tests register one line per criterion through record_criterion;
the lines are printed together at the end of the pytest run so the verdicts
are visible in one block regardless of how the suite is invoked.
"""

import time

import pytest

from fluidcc import experiments
from fluidcc.fluidsim import FluidSimulation

_CRITERIA = {}


def record_criterion(num, ok, detail):
    _CRITERIA[num] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        ok, detail = _CRITERIA[num]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {verdict} - {detail}")


@pytest.fixture(scope="session")
def equilibrium_runs():
    """One late-arrival run per (n, estimator) at C=12500, alpha=50, d=10 ms.

    Shared by the unfair-equilibrium, fair-equilibrium and backlog criteria
    so the expensive simulations run once.  Values: (trace, late_flow_id,
    wall_seconds) keyed by (n, estimator_kind).
    """
    runs = {}
    for n in (2, 4, 8):
        for kind in ("naive_min", "delta_probe"):
            spec = experiments._estimator_spec(kind)
            scenario, late_id = experiments.late_flow_scenario(
                n, 12500.0, 50.0, 0.01, spec, name=f"eq_n{n}_{kind}")
            start = time.perf_counter()
            sim = FluidSimulation(scenario, collect_balance=True)
            trace = sim.run()
            wall = time.perf_counter() - start
            runs[(n, kind)] = (trace, late_id, wall, sim.max_balance_residual)
    return runs
