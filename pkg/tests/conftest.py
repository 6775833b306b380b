import re

# criterion number -> short label for the summary block
_CRITERIA = {
    "1": "identity-weight risk table",
    "2": "cva/n4sid directional reproduction",
    "3": "noiseless recovery and shrinker no-op",
    "4": "SURE unbiasedness oracle",
    "5": "optimal-shrinker dominance",
    "6": "Gibbs correctness suite",
    "7": "pipeline algebra suite",
    "8": "determinism",
}

_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion."""
    status = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            m = _PATTERN.search(report.nodeid)
            if not m:
                continue
            key = m.group(1)
            ok = outcome == "passed"
            status[key] = status.get(key, True) and ok
    if not status:
        return
    tw = terminalreporter
    tw.write_sep("=", "acceptance criteria")
    for key in sorted(_CRITERIA):
        if key not in status:
            continue
        verdict = "PASS" if status[key] else "FAIL"
        tw.write_line(f"criterion {key} ({_CRITERIA[key]}): {verdict}")
