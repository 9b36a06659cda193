import numpy as np
import pytest

from revprod.simulate import SimConfig, simulate_panel
from revprod.technology import CES, CobbDouglas

TRUE_CD = CobbDouglas(beta_K=0.25, beta_L=0.3, beta_M=0.4)
TRUE_CES = CES(beta_L=0.3, beta_M=0.4, sigma=0.5, v=0.9)


@pytest.fixture(scope="session")
def cd_tech():
    return TRUE_CD


@pytest.fixture(scope="session")
def ces_tech():
    return TRUE_CES


@pytest.fixture(scope="session")
def cd_config():
    return SimConfig(tech=TRUE_CD, seed=909)


@pytest.fixture(scope="session")
def ces_config():
    return SimConfig(tech=TRUE_CES, seed=808)


@pytest.fixture(scope="session")
def cd_panel(cd_config):
    return simulate_panel(cd_config)


@pytest.fixture(scope="session")
def ces_panel(ces_config):
    return simulate_panel(ces_config)


@pytest.fixture(scope="session")
def small_cd_config():
    return SimConfig(tech=TRUE_CD, n_firms=80, n_periods=6, seed=411)


@pytest.fixture(scope="session")
def small_ces_config():
    return SimConfig(tech=TRUE_CES, n_firms=80, n_periods=6, seed=412)


@pytest.fixture(scope="session")
def small_cd_panel(small_cd_config):
    return simulate_panel(small_cd_config)


@pytest.fixture(scope="session")
def small_ces_panel(small_ces_config):
    return simulate_panel(small_ces_config)


def random_technology(rng, kind):
    """Random valid technology for property-style checks."""
    if kind == "CD":
        return CobbDouglas(
            beta_K=rng.uniform(0.0, 0.5),
            beta_L=rng.uniform(0.1, 0.6),
            beta_M=rng.uniform(0.1, 0.6),
        )
    beta_L = rng.uniform(0.1, 0.45)
    beta_M = rng.uniform(0.1, 0.9 - beta_L)
    sigma = rng.uniform(-1.0, 0.9)
    if abs(sigma) < 0.05:
        sigma = 0.3
    return CES(beta_L=beta_L, beta_M=beta_M, sigma=sigma, v=rng.uniform(0.5, 1.3))


def random_point(rng):
    K, L, M = np.exp(rng.normal(0.0, 0.5, 3))
    pL, pM = np.exp(rng.normal(0.0, 0.3, 2))
    return K, L, M, pL, pM
