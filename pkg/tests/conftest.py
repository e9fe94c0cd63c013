import pytest

_RESULTS = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """``record(number, title, ok, detail)`` stores one acceptance line for the terminal summary."""
    store = request.config.stash.setdefault(_RESULTS, {})

    def record(number: int, title: str, ok: bool, detail: str = ""):
        store[number] = f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_RESULTS, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for n in sorted(store):
            terminalreporter.write_line(store[n])
