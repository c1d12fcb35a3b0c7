"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""
import pytest

_outcomes = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    failed = report.failed
    if report.when == "call" or failed:
        prev = _outcomes.get(key)
        status = "FAIL" if failed or (prev and prev[0] == "FAIL") else "PASS"
        _outcomes[key] = (status, props.get("measured", ""))
    elif report.skipped:
        _outcomes[key] = ("SKIP", props.get("measured", ""))


@pytest.fixture
def criterion(record_property):
    """Tag a test with its criterion label; returns a callback for measured values."""

    def tag(label):
        record_property("criterion", label)

        def measured(text):
            record_property("measured", text)

        return measured

    return tag


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_outcomes):
        status, measured = _outcomes[key]
        line = f"{status}  {key}"
        if measured:
            line += f"  [{measured}]"
        terminalreporter.write_line(line)
