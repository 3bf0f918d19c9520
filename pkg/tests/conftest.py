import pytest

_RANK = {"PASS": 0, "SKIP": 1, "FAIL": 2}
_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record ``(number, status, detail)``; repeated numbers merge to the worst status."""

    def record(number, status, detail):
        old_status, old_detail = _CRITERIA.get(number, ("PASS", ""))
        if _RANK[status] > _RANK[old_status]:
            old_status = status
        _CRITERIA[number] = (old_status, "; ".join(d for d in (old_detail, detail) if d))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        status, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}")
