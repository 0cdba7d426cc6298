import sys
from collections import defaultdict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {
    1: "log grammar golden lines",
    2: "tamper detection property",
    3: "attestation negatives",
    4: "glupteba reproduction",
    5: "blacklotus reproduction",
    6: "lojax reproduction",
    7: "mosaicregressor reproduction",
    8: "baseline cleanliness",
    9: "gate enforcement",
    10: "oracle equivalence",
    11: "structural counts",
}

_results: dict[int, list[str]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion exercised by the test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        outcome = "passed" if call.excinfo is None else "failed"
        _results[marker.args[0]].append(outcome)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        runs = _results.get(n)
        if not runs:
            status = "NOT RUN"
        else:
            status = "PASS" if all(r == "passed" for r in runs) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status:7s} {title} ({len(runs or [])} checks)")


@pytest.fixture
def tmp_dirs(tmp_path):
    data, sink = tmp_path / "data", tmp_path / "sink"
    return data, sink
