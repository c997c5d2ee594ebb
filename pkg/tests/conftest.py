import numpy as np
import pytest

from cfsim.config import SystemConfig


def make_config(**overrides):
    """Small, fast configuration for pipeline-level tests."""
    base = dict(
        L=12,
        K=6,
        N=2,
        L_k=2,
        K_max=4,
        tau_c=60,
        tau_d=50,
        tau_p=4,
        alpha=0.0,
        setups=1,
        realizations=2,
        norm_draws=64,
        moment_draws=64,
        precoder="mr",
        schemes=("conventional",),
        seed=123,
    )
    base.update(overrides)
    return SystemConfig(**base).validate()


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
