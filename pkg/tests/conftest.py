"""Shared fixtures: a reporter that prints one PASS/FAIL line per acceptance criterion."""

from contextlib import contextmanager

import pytest

_VERDICTS = []


@pytest.fixture
def criterion(capsys):
    """``with criterion(n, title) as note:`` -- assertions inside decide the verdict.

    Assign ``note["detail"]`` to add the measured values to the line.
    """

    @contextmanager
    def run(number, title):
        note = {"detail": ""}
        try:
            yield note
        except BaseException as exc:
            line = f"CRITERION {number:>2} FAIL  {title}: {note['detail'] or exc}".rstrip()
            raise
        else:
            line = f"CRITERION {number:>2} PASS  {title}: {note['detail']}".rstrip(": ")
        finally:
            _VERDICTS.append(line)
            with capsys.disabled():
                print(f"\n{line}")

    return run


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
