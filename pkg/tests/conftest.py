import numpy as np
import pytest

from spdfb.problem import constrained_qp_problem, markowitz_problem
from spdfb.prox import IndicatorBox

MARKOWITZ_ATOMS = [[1.0, 0.0], [0.0, 2.0]]
MARKOWITZ_PROBS = [0.5, 0.5]
MARKOWITZ_C = 0.75
MARKOWITZ_X_STAR = np.array([0.5, 0.5])
MARKOWITZ_LAMBDA_STAR = -3.0


@pytest.fixture
def markowitz():
    return markowitz_problem(MARKOWITZ_ATOMS, MARKOWITZ_PROBS, MARKOWITZ_C)


def qp_instance():
    """Four-atom, three-dimensional QP with one stochastic equality row and a box."""
    Q = [
        np.diag([3.0, 2.0, 2.5]),
        [[2.0, 0.5, 0.0], [0.5, 3.0, 0.0], [0.0, 0.0, 2.0]],
        [[2.5, 0.0, 0.5], [0.0, 2.0, 0.0], [0.5, 0.0, 3.0]],
        np.diag([2.5, 3.0, 2.5]),
    ]
    b = [[-1.0, 0.5, 0.0], [-2.0, 0.0, 0.5], [0.0, 1.0, -0.5], [-1.0, 0.5, 0.0]]
    L = [[1.5, 0.5, -1.0], [0.5, 1.0, -1.5], [1.0, 0.0, -1.0], [1.0, 0.5, -0.5]]
    c = [0.2, 0.6, 0.4, 0.4]
    box = IndicatorBox([-1.0, -1.0, -1.0], [0.3, 1.0, 1.0])
    return constrained_qp_problem(Q, b, L, c, [0.25] * 4, box)


@pytest.fixture
def qp():
    return qp_instance()


def random_qp(rng, d=3, k=2, M=4, primal_set=None):
    """Random constrained QP with PSD atoms, used for randomized equivalence checks."""
    Q = []
    for _ in range(M):
        A = rng.standard_normal((d, d))
        Q.append(A @ A.T / d)
    b = [rng.standard_normal(d) for _ in range(M)]
    L = [rng.standard_normal((k, d)) for _ in range(M)]
    c = [rng.standard_normal(k) for _ in range(M)]
    probs = rng.dirichlet(np.ones(M))
    probs[-1] = 1.0 - probs[:-1].sum()
    if primal_set is None:
        primal_set = IndicatorBox(-np.ones(d), np.ones(d))
    return constrained_qp_problem(Q, b, L, c, probs, primal_set)


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    """Remember a criterion outcome for the end-of-session summary, then assert it."""
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")
    assert ok, detail


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
