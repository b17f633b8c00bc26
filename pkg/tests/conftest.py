import numpy as np
import pytest

from swaplab.geodata import GeoHierarchy, Household, Microdata, SynthParams, generate_synthetic


def make_geo(layout, rucc=None):
    """layout: {county: {tract: [(block, x, y), ...]}} in state "01"."""
    rows = []
    for county, tracts in layout.items():
        for tract, blocks in tracts.items():
            for block, x, y in blocks:
                rows.append({"block_id": block, "tract_id": tract, "county_id": county,
                             "state_id": "01", "x": x, "y": y,
                             "rucc": (rucc or {}).get(county)})
    return GeoHierarchy.from_rows(rows)


def hh(hid, block, races, hispanic=0, adults=None):
    races = tuple(races) + (0,) * (7 - len(races))
    return Household(hid, block, races, hispanic, sum(races) if adults is None else adults)


@pytest.fixture
def line_geo():
    """Two counties, four tracts, one block per tract, on a line."""
    return make_geo({
        "01001": {"01001A": [("bA", 0.0, 0.0)], "01001B": [("bB", 1.0, 0.0)]},
        "01002": {"01002C": [("bC", 2.0, 0.0)], "01002D": [("bD", 4.0, 0.0)]},
    }, rucc={"01001": 1, "01002": 7})


@pytest.fixture
def small_md(line_geo):
    households = [
        hh(1, "bA", (2, 1)), hh(2, "bA", (2,)), hh(3, "bA", (2,)),
        hh(4, "bB", (0, 3), adults=2), hh(5, "bB", (1, 1), hispanic=1),
        hh(6, "bC", (0, 0, 0, 2)), hh(7, "bC", (3,), adults=2), hh(8, "bC", (1,)),
        hh(9, "bD", (0, 1)), hh(10, "bD", (0, 0, 0, 0, 0, 1, 1), hispanic=2),
    ]
    return Microdata.from_households(households, line_geo)


@pytest.fixture(scope="session")
def synth_md():
    return generate_synthetic(SynthParams(n_households=3000, counties=3, tracts_per_county=4,
                                          blocks_per_tract=9, segregation=0.7), seed=42)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---- acceptance summary: one PASS/FAIL line per criterion at the end of the run

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in _acceptance.items():
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
