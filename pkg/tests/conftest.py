from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from gwsnake.gw import OffspringDistribution
from gwsnake.trees import tree_from_degrees

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

BINARY = OffspringDistribution.parse("1/2,0,1/2")
TERNARY = OffspringDistribution.parse("2/3,0,0,1/3")
GEOMETRIC_LIKE = OffspringDistribution.parse("1/4,1/2,1/4")
FOUR = OffspringDistribution.parse("1/2,1/4,1/8,0,1/8")


@st.composite
def degree_sequences(draw, max_degree: int = 4, max_size: int = 60):
    """Valid DFS child-count sequences: open slots are filled with leaves once the budget is spent."""
    degrees = []
    pending = 1
    while pending:
        if len(degrees) + pending >= max_size:
            c = 0
        else:
            c = draw(st.integers(0, max_degree))
        degrees.append(c)
        pending += c - 1
    return degrees


@st.composite
def trees(draw, max_degree: int = 4, max_size: int = 60):
    return tree_from_degrees(draw(degree_sequences(max_degree, max_size)))


critical_laws = st.sampled_from([BINARY, TERNARY, GEOMETRIC_LIKE, FOUR])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one pass/fail line per acceptance criterion, aggregated over its tests
_CRITERIA: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or rep.failed:
        status = "skipped" if rep.skipped else ("failed" if rep.failed else "passed")
        _CRITERIA.setdefault(marker.args[0], []).append(status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        states = _CRITERIA[number]
        verdict = "FAIL" if "failed" in states else ("PASS" if "passed" in states else "SKIP")
        terminalreporter.write_line(f"criterion {number:2d}: {verdict} ({len(states)} test(s))")
