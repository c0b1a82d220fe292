import pytest

_VERDICTS: dict[int, tuple[bool, str]] = {}


class Criterion:
    """Records one acceptance verdict and prints it as a single line."""

    def __init__(self, capsys):
        self.capsys = capsys

    def report(self, number: int, passed: bool, detail: str) -> bool:
        _VERDICTS[number] = (bool(passed), detail)
        with self.capsys.disabled():
            print(f"\n{_line(number)}")
        return bool(passed)


def _line(number: int) -> str:
    passed, detail = _VERDICTS[number]
    return f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


@pytest.fixture
def criterion(capsys):
    return Criterion(capsys)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_line(number))
