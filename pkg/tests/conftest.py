from __future__ import annotations

import numpy as np
import pytest

from breakscope.segstats import build_dataset


def random_regression(rng: np.random.Generator, lengths, K: int, noise: float = 1.0, shift: float = 2.0):
    """Piecewise linear regression with regime lengths ``lengths`` and ``K`` covariates (incl. intercept)."""
    T = int(np.sum(lengths))
    X = np.column_stack([np.ones(T), rng.normal(size=(T, K - 1))])
    y = np.empty(T)
    start = 0
    for n in lengths:
        beta = rng.normal(scale=shift, size=K)
        y[start : start + n] = X[start : start + n] @ beta + noise * rng.normal(size=n)
        start += n
    return build_dataset(y, X)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record a ``(criterion, passed, detail)`` line for the terminal summary."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(criterion: int, passed: bool, detail: str) -> bool:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
        lines.append((criterion, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
