import pytest

_RESULTS = {}


class CriterionLog:
    """Collects one pass/fail line per acceptance criterion."""

    def record(self, number: int, name: str, passed: bool, detail: str = ""):
        _RESULTS[number] = (name, bool(passed), detail)
        line = f"criterion {number:2d} {name}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        return passed


@pytest.fixture(scope="session")
def criteria():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        name, passed, detail = _RESULTS[number]
        terminalreporter.write_line(
            f"criterion {number:2d} {name}: {'PASS' if passed else 'FAIL'}  {detail}")
