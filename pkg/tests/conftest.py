import sys


def pytest_terminal_summary(terminalreporter):
    """Repeat the per-criterion PASS/FAIL lines of the acceptance suite at the end of the run."""
    for name, module in list(sys.modules.items()):
        if name.endswith("test_acceptance") and getattr(module, "RESULTS", None):
            terminalreporter.section("acceptance criteria")
            for key in sorted(module.RESULTS):
                terminalreporter.write_line(module.RESULTS[key])
