"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

import contextlib

import pytest

_LINES: dict[int, str] = {}


class Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.details: list[str] = []

    def note(self, text: str) -> None:
        self.details.append(text)

    def check(self, ok: bool, text: str) -> None:
        self.note(text)
        if not ok:
            raise AssertionError(f"criterion {self.number}: {text}")


@pytest.fixture
def criterion():
    @contextlib.contextmanager
    def run(number: int, title: str):
        c = Criterion(number, title)
        try:
            yield c
        except BaseException as e:
            reason = str(e).splitlines()[0] if str(e) else type(e).__name__
            _LINES[number] = f"FAIL {number}. {title}: {reason}"
            print(_LINES[number])
            raise
        _LINES[number] = f"PASS {number}. {title}: {'; '.join(c.details)}"
        print(_LINES[number])
    return run


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_LINES):
            terminalreporter.write_line(_LINES[n])
