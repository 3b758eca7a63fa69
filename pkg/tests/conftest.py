import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("default")


def random_knots(rng, n, lo=-1.3, hi=1.3, gap=0.05):
    """Sorted knots on [lo, hi] with all gaps >= gap."""
    room = (hi - lo) - (n - 1) * gap
    return lo + np.sort(rng.uniform(0, room, n)) + gap * np.arange(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report a one-line verdict each, collected here and
# printed at the end of the session

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(number: int, name: str, ok: bool, detail: str = ""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}"
        if detail:
            line += f"  ({detail})"
        _VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
