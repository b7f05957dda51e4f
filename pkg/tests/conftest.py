import pytest

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.fixture
def criterion():
    """Record ``(number, status, detail)`` for the end-of-session criteria table."""

    def record(number: int, ok, detail: str):
        status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
        _CRITERIA[number] = (status, detail)
        print(f"criterion {number}: {status}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        status, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
