import os
from pathlib import Path

import pytest

FIXTURE_DIR = Path(os.environ.get("SURVBIT_FIXTURES", Path(__file__).parent / "fixtures"))
BREAK3 = "break3_dabrafenib.csv"
COMBID = "combid_dabrafenib_trametinib.csv"


def fixture_path(name: str) -> Path:
    path = FIXTURE_DIR / name
    if not path.exists():
        pytest.skip(
            f"fixture {name} not found in {FIXTURE_DIR}; run scripts/fetch_fixtures.py "
            "or set SURVBIT_FIXTURES to a directory holding it"
        )
    return path


@pytest.fixture(scope="session")
def break3():
    from survbit import load_dataset

    return load_dataset(fixture_path(BREAK3))


@pytest.fixture(scope="session")
def combid():
    from survbit import load_dataset

    return load_dataset(fixture_path(COMBID))


# acceptance criteria get one summary line each

_criteria: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    number, title = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if report.when == "setup" and report.outcome == "failed":
            outcome = "ERROR"
        prev = _criteria.get(number)
        # a criterion spread over several tests passes only if all of them pass
        if prev is None or prev[0] == "PASS":
            _criteria[number] = (outcome, title)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        report._criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        outcome, title = _criteria[number]
        terminalreporter.write_line(f"[{outcome}] criterion {number}: {title}")
