import time
from contextlib import contextmanager

import pytest

_RESULTS = pytest.StashKey[dict]()


class Criterion:
    """Collects named checks for one acceptance criterion."""

    def __init__(self):
        self.passed, self.failed = [], []

    def check(self, ok, what):
        (self.passed if ok else self.failed).append(what)
        return ok


@pytest.fixture(scope="session")
def criterion(request):
    results = request.config.stash.setdefault(_RESULTS, {})

    @contextmanager
    def record(number, title):
        entry = results.setdefault(number, {"title": title, "failed": [], "passed": [], "seconds": 0.0})
        c = Criterion()
        start = time.perf_counter()
        try:
            yield c
        except Exception as exc:
            c.failed.append(f"{type(exc).__name__}: {exc}")
            raise
        finally:
            entry["seconds"] += time.perf_counter() - start
            entry["passed"] += c.passed
            entry["failed"] += c.failed
        assert not c.failed, "; ".join(c.failed)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        r = results[number]
        status = "FAIL" if r["failed"] else "PASS"
        detail = "; ".join(r["failed"] + r["passed"])
        terminalreporter.write_line(f"criterion {number} [{status}] {r['title']} ({r['seconds']:.0f} s): {detail}")
