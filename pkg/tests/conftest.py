"""Collects acceptance-criterion outcomes and reports one line per criterion."""

_criteria = []


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.outcome != "passed":
        status = "PASS" if report.passed else "FAIL"
        _criteria.append((props["criterion"], status, props.get("detail", ""), report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for title, status, detail, secs in sorted(_criteria, key=lambda c: int(c[0].split(".")[0])):
        line = f"{status} {title} ({secs:.1f}s)"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)
