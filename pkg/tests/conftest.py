import numpy as np
import pytest

from hiersense import (InterferenceMatrix, OccupancyModel, PathlossParams,
                       SensorModel, build_topology, compute_phi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def paper_model():
    """The reference occupancy rates: pi_b = 0.05, mu = 0.9."""
    return OccupancyModel(0.005, 0.095)


@pytest.fixture
def default_pathloss():
    return PathlossParams()


@pytest.fixture
def grid16(default_pathloss):
    """4x4 grid with two blockages plus its interference matrix."""
    topo = build_topology("grid", 16, (400.0, 400.0), 2, rng_seed=7)
    return topo, compute_phi(topo, default_pathloss)


@pytest.fixture
def noiseless_sensor():
    return SensorModel(0.0, 0.0)


def random_phi(rng, n, snr_range=(5.0, 100.0), coupling_range=(0.01, 0.9)):
    """Random symmetric interference matrix with dominant diagonal."""
    diag = rng.uniform(*snr_range, size=n)
    off = rng.uniform(*coupling_range, size=(n, n)) * np.sqrt(diag[:, None] * diag[None, :]) * 0.2
    phi = (off + off.T) / 2.0
    np.fill_diagonal(phi, diag)
    return InterferenceMatrix(phi)
