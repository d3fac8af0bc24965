import numpy as np
import pytest

from appspred.encode import encode_dataset
from appspred.schema import ContextFeature, ContextSchema
from appspred.synth import default_schema, generate, preset

# -- acceptance-criterion bookkeeping ---------------------------------------

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (report.when == "call" or report.failed):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": 0, "failed": []})
    if report.passed:
        entry["passed"] += 1
    elif report.failed:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        total = e["passed"] + len(e["failed"])
        status = "PASS" if not e["failed"] else "FAIL"
        line = f"criterion {number:>2}: {status}  {e['title']} ({e['passed']}/{total} checks)"
        if e["failed"]:
            line += " failing: " + ", ".join(e["failed"])
        terminalreporter.write_line(line)


# -- shared fixtures ----------------------------------------------------------

@pytest.fixture
def mood_schema():
    return ContextSchema(
        (
            ContextFeature("mood", "categorical", ("happy", "sad", "normal")),
            ContextFeature("wifi", "binary", ("on", "off")),
        ),
        ("Gmail", "Skype", "Music"),
    )


@pytest.fixture
def full_schema():
    return default_schema()


@pytest.fixture(scope="session")
def ds01():
    return encode_dataset(generate(preset("ds01-like", seed=7)))


@pytest.fixture(scope="session")
def small_encoded():
    """600 noisy records: large enough to learn, small enough to be fast."""
    return encode_dataset(generate(preset("ds01-like", seed=3, n_records=600)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
