import numpy as np
import pytest

from bartinfluence import Dataset, ModelConfig, fit


@pytest.fixture(scope="session")
def toy_data():
    rng = np.random.default_rng(7)
    X = rng.uniform(0, 1, size=(80, 2))
    y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2 + rng.normal(0, 0.1, 80)
    return Dataset(X, y, ("a", "b"), "y")


@pytest.fixture(scope="session")
def toy_sample(toy_data):
    return fit(toy_data, ModelConfig(m=20, ndraws=60, burn=60, seed=3))


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion; returns the check result."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
