import functools

import pytest
from hypothesis import HealthCheck, settings

from genflow.concave import solve_symmetric_concave
from genflow.generate import concave_corpus, linear_corpus
from genflow.linear import solve_symmetric_linear

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def _linear_runs():
    nets = linear_corpus(200)
    return [(net, solve_symmetric_linear(net)) for net in nets]


@functools.lru_cache(maxsize=None)
def _concave_on_linear_runs():
    return [(net, solve_symmetric_concave(net, 1e-9)) for net, _ in _linear_runs()]


@functools.lru_cache(maxsize=None)
def _concave_runs():
    return [(net, solve_symmetric_concave(net, 1e-6)) for net in concave_corpus(50)]


@pytest.fixture(scope="session")
def linear_runs():
    """200 seeded linear instances with their exact solver reports."""
    return _linear_runs()


@pytest.fixture(scope="session")
def concave_on_linear_runs():
    return _concave_on_linear_runs()


@pytest.fixture(scope="session")
def concave_runs():
    """50 seeded concave instances solved with eps = 1e-6."""
    return _concave_runs()
