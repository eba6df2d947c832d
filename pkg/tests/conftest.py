import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def h1n1():
    from dspsa_epi.scenarios import h1n1_scenario

    return h1n1_scenario()


@pytest.fixture(scope="session")
def covid():
    from dspsa_epi.scenarios import covid_scenario

    return covid_scenario()


@pytest.fixture(scope="session")
def h1n1_oracle(h1n1):
    return h1n1.oracle("numba")


@pytest.fixture(scope="session")
def covid_oracle(covid):
    return covid.oracle("numba")


class Quadratic:
    """Deterministic separable quadratic, optionally with seeded noise."""

    thread_safe = True

    def __init__(self, target, sigma: float = 0.0):
        self.target = np.asarray(target, dtype=float)
        self.sigma = sigma

    def loss(self, theta) -> float:
        return float(np.sum((np.asarray(theta, dtype=float) - self.target) ** 2))

    def evaluate(self, theta, seed: int) -> float:
        y = self.loss(theta)
        if self.sigma:
            y += self.sigma * np.random.default_rng(seed).standard_normal()
        return y
