from pathlib import Path

import numpy as np
import pytest

from ivrobust.data import Dataset, ModelSpec, build_design, design_from_arrays
from oracles import E2_ROWS

FIXTURES = Path(__file__).parent / "fixtures"
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def e2_data():
    a = np.array(E2_ROWS, dtype=float)
    return Dataset.from_arrays(Y=a[:, 0], D=a[:, 1], Z1=a[:, 2], Z2=a[:, 3])


@pytest.fixture
def e2(e2_data):
    return build_design(e2_data, ModelSpec("Y", ["D"], ["Z1", "Z2"]))


@pytest.fixture
def e1():
    d = Dataset.from_arrays(Y=[1, 1, 3, 3], D=[0, 0, 1, 1], Z=[0, 0, 1, 1])
    return build_design(d, ModelSpec("Y", ["D"], ["Z"]))


def saturated_f1():
    """Saturated two-instrument design with interior treatment shares in every cell."""
    z = np.repeat([0, 1, 2], 6)
    d = np.array([1, 0, 0, 0, 0, 1,  1, 1, 0, 0, 0, 1,  1, 1, 1, 0, 1, 0], dtype=float)
    y = np.array([2.0, -1, 0.5, 1, 0, 3,  4, 2.5, -0.5, 1, 0, 5,  6, 3, 4.5, 0, 2, 1])
    Z = np.column_stack([z == 1, z == 2]).astype(float)
    return design_from_arrays(y, d, Z)


@pytest.fixture
def f1():
    return saturated_f1()


def random_design(rng, n, p=1, q=2, l_extra=0, hetero=True):
    """Well-conditioned random over- (or just-) identified linear design."""
    Zx = rng.standard_normal((n, q))
    W = rng.standard_normal((n, l_extra)) if l_extra else None
    Pi = rng.normal(1.0, 0.3, (q, p))
    V = rng.standard_normal((n, p))
    D = Zx @ Pi + V
    eff = 1 + (0.5 * Zx[:, :1] if hetero else 0)
    u = rng.standard_normal(n) + 0.5 * V[:, 0]
    y = (D * eff).sum(axis=1) + u
    if W is not None:
        y = y + W.sum(axis=1)
    return design_from_arrays(y, D, Zx, covariates=W)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
