import numpy as np
import pytest

from wgflow import QuantileMeasure


def random_strict(rng: np.random.Generator, n: int, lo_gap: float = 0.05, scale: float = 1.0) -> QuantileMeasure:
    """Strictly increasing quantiles with gaps bounded away from zero, centred near 0."""
    gaps = rng.uniform(lo_gap, 1.0, size=n - 1)
    x = np.concatenate(([0.0], np.cumsum(gaps)))
    x = (x - x.mean()) * scale * 4.0 / max(x[-1] - x[0], 1e-12) + rng.normal(scale=0.3)
    return QuantileMeasure(x)


@pytest.fixture
def rng():
    return np.random.default_rng(20260415)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
