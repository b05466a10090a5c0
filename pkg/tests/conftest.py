import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

_CRITERIA = {}


def pytest_runtest_logreport(report):
    match = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not match:
        return
    key = int(match.group(1))
    entry = _CRITERIA.setdefault(key, {"passed": True, "detail": ""})
    if report.when == "call" or report.outcome == "failed":
        entry["passed"] &= report.passed
        detail = dict(report.user_properties).get("detail")
        if detail:
            entry["detail"] = detail


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        entry = _CRITERIA[key]
        status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {key:2d}: {status}  {entry['detail']}")
