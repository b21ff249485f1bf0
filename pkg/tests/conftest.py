import numpy as np
import pytest

from bracketdid.data import PanelDataset

_criteria: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    failed = report.failed or (report.when == "setup" and report.skipped)
    if report.when == "call" or failed:
        detail = "; ".join(str(v) for k, v in report.user_properties if k == "measured")
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        if n not in _criteria or _criteria[n][0] == "PASS":
            _criteria[n] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, title, detail = _criteria[n]
        line = f"criterion {n}: {status}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


def make_dataset(groups, outcomes, observed=None, ids=None):
    """Small dataset from group tokens and an outcome matrix."""
    y = np.asarray(outcomes, dtype=float)
    if observed is None:
        observed = np.ones(y.shape, dtype=bool)
    if ids is None:
        ids = [f"u{i:03d}" for i in range(len(groups))]
    codes = [{"trt": 0, "a": 1, "b": 2}[g] for g in groups]
    return PanelDataset(ids, y, observed, codes)


@pytest.fixture
def stylised_panel():
    """One unit per group; the treated changes sit between a's and b's in every period."""
    return make_dataset(
        ["trt", "a", "b"],
        [[3, 4, 6, 3], [11, 10, 11, 10], [4, 6, 9, 5]],
    )
