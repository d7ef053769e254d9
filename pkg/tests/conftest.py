import sys
from collections import defaultdict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_OUTCOMES: dict[int, list[bool]] = defaultdict(list)
_NOTES: dict[int, list[str]] = defaultdict(list)


@pytest.fixture
def note(request):
    """Attach a measured value to the current test's acceptance criterion."""
    m = request.node.get_closest_marker("criterion")

    def add(text: str) -> None:
        _NOTES[m.args[0]].append(text)

    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _OUTCOMES[m.args[0]].append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        ok = all(_OUTCOMES[n])
        detail = "; ".join(_NOTES[n])
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else ""))
