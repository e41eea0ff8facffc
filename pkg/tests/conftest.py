import numpy as np
import pytest

from fusseg.phantom import PhantomSpec

# 64x64 fUS grid, 8x finer ULM grid; the desk-scale geometry used across tests
SMALL_SPEC = dict(hi_shape=(512, 512), shape=(64, 64), vessel_count=10, width_range=(6.0, 12.0))


@pytest.fixture
def small_spec():
    return PhantomSpec(**SMALL_SPEC, seed=0)


@pytest.fixture
def tiny_spec():
    return PhantomSpec(hi_shape=(128, 128), shape=(16, 16), vessel_count=3, width_range=(4.0, 8.0), seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
