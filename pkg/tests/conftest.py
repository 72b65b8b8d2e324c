import pytest

_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion.

    Call the returned function with the criterion number and a short label
    before asserting; the line flips to PASS only if the test body finishes.
    """
    entry = {}

    def start(number, label):
        entry.update(number=number, label=label)
        _ACCEPTANCE[number] = (label, "FAIL")

    yield start
    if entry:
        rep = getattr(request.node, "rep_call", None)
        if rep is not None and rep.passed:
            _ACCEPTANCE[entry["number"]] = (entry["label"], "PASS")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        label, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] {number:>2}. {label}")
