import pytest

_LINES_KEY = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """``report(n, ok, detail)`` prints a PASS/FAIL line for criterion ``n`` and asserts ``ok``."""
    config = request.config
    lines = config.stash.setdefault(_LINES_KEY, [])
    capman = config.pluginmanager.getplugin("capturemanager")

    def emit(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        lines.append(line)
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        assert ok, line

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
