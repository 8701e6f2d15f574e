import functools

import pytest

from tarmac.config import RunConfig
from tarmac.simulation import run_simulation

# filled by tests/test_acceptance.py, printed at the end of the session
CRITERIA: dict[int, tuple[str, bool, str]] = {}


@functools.lru_cache(maxsize=None)
def cached_run(cfg: RunConfig):
    return run_simulation(cfg)


@pytest.fixture
def run():
    return cached_run


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        name, ok, detail = CRITERIA[n]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {name}: {detail}")
