from __future__ import annotations

import time
from contextlib import contextmanager

import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """Context manager timing one acceptance criterion and recording pass/fail."""
    results = request.config.stash[_RESULTS]

    @contextmanager
    def run(label: str, limit: float | None = None):
        start = time.perf_counter()
        notes: list[str] = []
        try:
            yield notes
        except BaseException:
            elapsed = time.perf_counter() - start
            line = f"FAIL {label} ({elapsed:.2f} s)"
            results.append(line)
            print(line)
            raise
        elapsed = time.perf_counter() - start
        ok = limit is None or elapsed < limit
        extra = f"; {'; '.join(notes)}" if notes else ""
        budget = f" < {limit:g} s" if limit is not None else ""
        line = f"{'PASS' if ok else 'FAIL'} {label} ({elapsed:.2f} s{budget}){extra}"
        results.append(line)
        print(line)
        assert ok, f"{label} took {elapsed:.2f} s, limit {limit} s"

    return run


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, [])
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
