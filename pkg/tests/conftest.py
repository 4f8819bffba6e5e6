import os
import sys

sys.path.insert(0, os.path.dirname(__file__))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(results, key=lambda k: int(k[2:])):
        ok, detail = results[ac]
        terminalreporter.write_line(f"{ac} {'PASS' if ok else 'FAIL'}: {detail}")
