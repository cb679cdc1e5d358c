import sys
import numpy as np
import pytest

from depcag_lab.cauchy import CauchyOperator
from depcag_lab.grid import Grid
from depcag_lab.linear import CoefficientEvaluator, ExpDecay, Linear

# 2x2 constant pair with [A, B] != 0
A_NC = np.array([[0.1, 1.0], [-0.5, -0.2]])
B_NC = np.array([[0.3, 0.0], [0.4, -0.1]])


def scalar_op(a, b, count=20, step=1.0, xi="delayed"):
    g = Grid.uniform(0.0, step, count, xi)
    return CauchyOperator(g, CoefficientEvaluator.scalar(a), CoefficientEvaluator.scalar(b))


def preset_ops():
    """Operators for the identity suite, keyed by preset name."""
    g12 = Grid.uniform(0.0, 1.0, 12)
    g8 = Grid.uniform(0.0, 1.0, 8)
    return {
        "scalar-growth": scalar_op(0.0, 1.0),
        "two-mode": CauchyOperator(g12, CoefficientEvaluator.diagonal([-1.0, 0.0]),
                                   CoefficientEvaluator.diagonal([0.0, 0.0])),
        "noncommuting": CauchyOperator(g8, CoefficientEvaluator.constant(A_NC),
                                       CoefficientEvaluator.constant(B_NC)),
        "diagonal-tv": CauchyOperator(g8, CoefficientEvaluator.diagonal([Linear(-0.5, 0.1), ExpDecay(1.0, 0.5)]),
                                      CoefficientEvaluator.diagonal([0.3, Linear(0.2, -0.01)])),
    }


@pytest.fixture(scope="session")
def ops():
    return preset_ops()


@pytest.fixture
def rng():
    return np.random.default_rng(42)


# worked scenario W1: decaying mode under a neutral one, R(t) = 2.2 e^{-t} I
W1_RHO = 2.2


def w1_system(b=(0.5, 0.0), intervals=16):
    from depcag_lab.diagonal import DiagonalSystem
    return DiagonalSystem([-1.0, 0.0], list(b), Grid.uniform(0.0, 1.0, intervals), k=2)


def w1_perturbation(rho=W1_RHO, n=2):
    from depcag_lab.diagonal import PerturbationMatrix
    return PerturbationMatrix.scaled_identity(n, ExpDecay(rho, 1.0))


@pytest.fixture(scope="session")
def w1_run():
    from depcag_lab.diagonal import corollary_run
    return corollary_run(w1_system(), w1_perturbation())


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
