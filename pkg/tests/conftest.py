"""Collects acceptance-criterion outcomes and prints one line per criterion."""

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", m.args))


def pytest_runtest_logreport(report):
    key = dict(report.user_properties).get("criterion")
    if key is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _OUTCOMES[key] = (report.outcome, report.longrepr)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), (outcome, longrepr) in sorted(_OUTCOMES.items(), key=lambda kv: str(kv[0][0])):
        status = {"passed": "PASS", "skipped": "SKIP"}.get(outcome, "FAIL")
        line = f"criterion {number}: {status}  {title}"
        msg = getattr(getattr(longrepr, "reprcrash", None), "message", "")
        if status == "FAIL" and msg:
            line += f"  [{msg.splitlines()[0]}]"
        terminalreporter.write_line(line)
