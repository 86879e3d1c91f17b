import os
from importlib import resources

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def data_dir():
    return resources.files("pncriterion") / "data"


@pytest.fixture(scope="session")
def abalone_counts_path(data_dir):
    return str(data_dir / "abalone_sex_rings_counts.csv")


@pytest.fixture(scope="session")
def abalone_raw_path(data_dir):
    return str(data_dir / "abalone_sex_rings.csv")


def pytest_terminal_summary(terminalreporter):
    rows = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            if "test_acceptance.py::test_criterion_" in rep.nodeid and rep.when == "call":
                rows.append((rep.nodeid.split("::")[-1], key, rep.duration))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in sorted(rows):
        number = int(name.split("_")[2])
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  ({duration:.1f} s)  {name}")
