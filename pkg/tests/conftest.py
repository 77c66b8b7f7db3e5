import pytest

from mtdmom import kernels

_labels = {}
_results = {}


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker and marker.args:
            _labels[item.nodeid] = marker.args[0]


def pytest_runtest_logreport(report):
    if report.nodeid in _labels:
        if report.when == "call" or report.outcome == "failed":
            prev = _results.get(report.nodeid)
            if prev != "failed":
                _results[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _labels:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, label in sorted(_labels.items(), key=lambda kv: kv[1]):
        outcome = _results.get(nodeid, "not run")
        word = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{word:8s} {label}")


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    prev = kernels.BACKEND
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)
