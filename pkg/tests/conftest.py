import numpy as np
import pytest

from rieszstop.amput import AmericanPut
from rieszstop.model import GbmParams


@pytest.fixture
def bench2d_params():
    return GbmParams([0.06, 0.06], [0.3, 0.3], np.eye(2), 0.06, 1.0)


@pytest.fixture
def p1d():
    return GbmParams([0.06], [0.3], [[1.0]], 0.06, 1.0)


@pytest.fixture
def put():
    return AmericanPut(K=100.0, r=0.05, vol=0.2, T=1.0)


@pytest.fixture(scope="session")
def bench2d_fit():
    """One boundary fit at the symmetric benchmark parameters plus its uniqueness gate, shared across files."""
    import time

    from rieszstop.invest2d import fit_boundary, uniqueness_gate

    params = GbmParams([0.06, 0.06], [0.3, 0.3], np.eye(2), 0.06, 1.0)
    start = time.perf_counter()
    fit = fit_boundary(params, n=16)
    gate = uniqueness_gate(fit.boundary, [0.5, 0.9, 1.0, 1.1], params, n=16, fitted_l2=fit.report.l2)
    elapsed = time.perf_counter() - start
    return {"params": params, "fit": fit, "gate": gate, "seconds": elapsed}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
