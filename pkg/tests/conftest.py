import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from squeezegate.chain import ELEVEN_ION_TABLE_MHZ, TrapConfig, radial_modes, tabulated_modes

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def eleven_modes():
    """The tabulated 11-ion radial spectrum with solver eigenvectors."""
    return tabulated_modes(ELEVEN_ION_TABLE_MHZ, 0.1, 3.0)


@pytest.fixture(scope="session")
def five_modes():
    return radial_modes(TrapConfig(5, 0.6, 3.0, 0.1))


@pytest.fixture(scope="session")
def two_modes():
    return tabulated_modes([3.0, 2.99], 0.1, 3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Acceptance summary ----------------------------------------------------------------
# Acceptance tests carry @pytest.mark.criterion("label") and may attach a measured value
# with record_property("detail", ...); one PASS/FAIL line per criterion test is printed
# at the end of the run, including tests whose fixtures failed.

_ACCEPTANCE: dict = {}


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None and (report.when == "call" or report.outcome != "passed"):
        detail = dict(item.user_properties).get("detail", "")
        if report.when != "call":
            detail = f"{report.when} error"
        _ACCEPTANCE.setdefault(item.nodeid, (marker.args[0], report.passed, detail))
        if report.when == "call":
            _ACCEPTANCE[item.nodeid] = (marker.args[0], report.passed, detail)
    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(_ACCEPTANCE.values(), key=lambda r: r[0]):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {label}"
        terminalreporter.write_line(line + (f" -- {detail}" if detail else ""))
