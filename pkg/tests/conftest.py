import logging

import numpy as np
import pytest

from scenario_poi.ingest import CheckIn, Trajectory
from scenario_poi.pipeline import label_data
from scenario_poi.synthetic import planted_corpus

_acceptance: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _acceptance[number] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        status, title = _acceptance[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.INFO, logger="scenario_poi")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_traj(user, pois, start=1_333_400_000.0, step=3600.0, coords=None, tz=0):
    """Trajectory helper: consecutive check-ins ``step`` seconds apart."""
    cks = []
    for i, p in enumerate(pois):
        lat, lon = coords[p] if coords is not None else (40.7, -74.0)
        cks.append(CheckIn(user, p, start + i * step, lat, lon, "", tz))
    return Trajectory(user, tuple(cks), start)


@pytest.fixture(scope="session")
def small_planted():
    """A small planted corpus, labelled and split; shared read-only."""
    checkins, catalog, truth = planted_corpus(n_users=40, n_pois=60, days_per_user=6, seed=3)
    return label_data(checkins, catalog), truth
