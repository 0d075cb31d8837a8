import logging

import pytest
from scipy.optimize import brentq
from scipy.special import j0

from src.weights import ConstantWeight, ProblemSpec


@pytest.fixture(autouse=True)
def _quiet_app_logger():
    """Keep handlers installed by one test's main() from leaking into the next."""
    yield
    logger = logging.getLogger("app")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.propagate = True


@pytest.fixture(scope="session")
def j01_squared() -> float:
    """Square of the first zero of J0: the Dirichlet disk eigenvalue."""
    return brentq(j0, 2.0, 3.0, xtol=1e-14) ** 2


def unit_spec(N: int = 2, p: float = 2.0, eps: float = 1e-3, R: float = 1.0, **kw) -> ProblemSpec:
    """Unweighted problem L = K = 1 on [eps, R]."""
    return ProblemSpec(
        N=N, p=p, L=ConstantWeight(), K=ConstantWeight(), eps=eps, R=R, **kw
    )


@pytest.fixture
def disk_spec() -> ProblemSpec:
    return unit_spec()
