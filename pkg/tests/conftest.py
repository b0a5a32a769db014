import numpy as np
import pytest

from hawkesnp import ExponentialKernel, HawkesModel, SimConfig, simulate
from hawkesnp.oracle import oracle_g


def rel_l2(est, truth, grid):
    num = np.trapezoid((est - truth) ** 2, grid)
    den = np.trapezoid(truth ** 2, grid)
    return float(np.sqrt(num / den))


@pytest.fixture(scope="session")
def exp1d_model():
    """The 1D benchmark: mu = 0.05, phi = 0.1 exp(-0.2 t), rate 0.1."""
    return HawkesModel(baselines=(0.05,), kernels=((ExponentialKernel(0.1, 0.2),),))


@pytest.fixture(scope="session")
def exp1d_series_1e5(exp1d_model):
    """~1e5 events of the 1D benchmark (shared; treat as read-only)."""
    return simulate(exp1d_model, SimConfig(horizon=1e6, seed=1010))


@pytest.fixture(scope="session")
def exp1d_oracle(exp1d_model):
    """Dense oracle g for the 1D benchmark; analytic value 0.15 exp(-0.1 t)."""
    return oracle_g(exp1d_model, t_max=150.0, step=0.002)
