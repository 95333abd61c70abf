from __future__ import annotations

import functools

import pytest

from islandctl import fixtures, forecast, scheduler, sim


@functools.lru_cache(maxsize=None)
def scheduled(name: str, gamma):
    sc = getattr(fixtures, name)()
    sol = scheduler.schedule(sc, forecast.scenario_bounds(sc, gamma))
    return sc, sol


@functools.lru_cache(maxsize=None)
def simulated(name: str, gamma=None):
    if name in ("blackstart", "hil"):
        sc, sol = getattr(fixtures, name)()
    else:
        sc, sol = scheduled(name, gamma)
    return sc, sol, sim.run(sc, sol)


@pytest.fixture(scope="session")
def oversupply_run():
    return simulated("oversupply", 0.95)


@pytest.fixture(scope="session")
def undersupply_run():
    return simulated("undersupply", None)


@pytest.fixture(scope="session")
def exact_run():
    return simulated("undersupply_exact", None)


@pytest.fixture(scope="session")
def blackstart_run():
    return simulated("blackstart")


@pytest.fixture(scope="session")
def hil_run():
    return simulated("hil")


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixtures")
    fixtures.write_all(out)
    return out


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
