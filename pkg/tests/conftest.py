import os
import tempfile

import pytest

# keep kernel caches written by CLI runs out of the user's home directory
os.environ.setdefault("CHOQUARD_CACHE_DIR", tempfile.mkdtemp(prefix="choquard-cache-"))

from choquard.grid import make_grid  # noqa: E402
from choquard.riesz import build_kernel  # noqa: E402

ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def grid3():
    return make_grid()


@pytest.fixture(scope="session")
def kernel31(grid3):
    return build_kernel(3, 1.0, grid3)


@pytest.fixture(scope="session")
def kernel32(grid3):
    return build_kernel(3, 2.0, grid3)


@pytest.fixture
def report_criterion(request):
    """Record one acceptance line; printed in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def record(number, ok, detail):
        lines.append((number, f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines):
            terminalreporter.write_line(text)
