import numpy as np
import pytest

from lsmselect.core import CovariateMatrix, LatentState, Network


def random_instance(rng, n=12, q=4, k=2, scale=0.5):
    """Small random network, covariates and state with moderate logits."""
    A = np.triu((rng.uniform(size=(n, n)) < 0.4).astype(float), 1)
    A = A + A.T
    Y = (rng.uniform(size=(n, q)) < 0.5).astype(float)
    state = LatentState(scale * rng.standard_normal((n, k)), scale * rng.standard_normal(n),
                        rng.standard_normal((k, q)), rng.standard_normal(q))
    return Network(A), CovariateMatrix(Y), state


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_instance(rng):
    return random_instance(rng)


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the terminal summary lists them all."""
    def record(number, passed, detail=""):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
