import math

import numpy as np
import pytest

from beamforge.scenario import ScenarioConfig, SolverParams, db_to_linear, dbm_to_watt


def farfield_config(**overrides) -> ScenarioConfig:
    """Standard far-field scenario: 30 GHz, 32 antennas, 500 km/h, 10 deg slope."""
    base = dict(f_c=30e9, n_t=32, y_0=8.0, alpha=math.radians(10.0),
                v=500.0 / 3.6, p_t=dbm_to_watt(40.0), p_n=dbm_to_watt(-40.0),
                eta=2.0, r_0=1.0, psi_min=-1.4284, psi_max=0.9078,
                gamma_th=db_to_linear(5.0), eps_t=0.005)
    base.update(overrides)
    return ScenarioConfig(**base)


def tiny_config(**overrides) -> ScenarioConfig:
    """Small instance for fast end-to-end search tests."""
    base = dict(f_c=30e9, n_t=8, y_0=8.0, alpha=math.radians(10.0),
                v=500.0 / 3.6, p_t=dbm_to_watt(40.0), p_n=dbm_to_watt(-40.0),
                eta=2.0, r_0=1.0, psi_min=-0.3, psi_max=0.3,
                gamma_th=db_to_linear(5.0), eps_t=0.05)
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture(scope="session")
def far_cfg():
    return farfield_config()


@pytest.fixture(scope="session")
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def far_grid(far_cfg):
    from beamforge.channel import build_grid
    return build_grid(far_cfg)


@pytest.fixture(scope="session")
def tiny_grid(tiny_cfg):
    from beamforge.channel import build_grid
    return build_grid(tiny_cfg)


@pytest.fixture
def params():
    return SolverParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
