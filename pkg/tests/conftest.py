"""
Shared fixtures for the privileged time-series tests
"""

import os
import sys

import numpy as np
import pytest

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from simulation.rng import RngStream  # noqa: E402
from simulation.synth import generate_system, sample_trajectories  # noqa: E402
from simulation.system import InitialState, SystemSpec, TrajectoryDataset  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_system():
    """d=3, T=4 non-stationary system with unit noise."""
    return generate_system(d=3, T=4, rng=RngStream(7))


@pytest.fixture
def small_dataset(small_system):
    return sample_trajectories(small_system, 60, RngStream(7, 1))


@pytest.fixture
def chain_dataset():
    """d=1, T=3 noiseless chain: X2 = 2 X1, X3 = 3 X2, Y = 4 X3."""
    x1 = np.array([[1.0], [2.0]])
    return TrajectoryDataset(states=(x1, 2 * x1, 6 * x1), outcomes=24 * x1)


def deterministic_system(transitions, beta, x1_mean=1.0):
    """Noise-free system whose X1 is the constant x1_mean."""
    transitions = tuple(np.atleast_2d(np.asarray(a, dtype=float)) for a in transitions)
    return SystemSpec(
        transitions=transitions,
        outcome_weights=np.asarray(beta, dtype=float).reshape(-1, 1),
        noise_scales=(0.0,) * len(transitions),
        outcome_noise=0.0,
        initial_state=InitialState(mean=x1_mean, std=0.0),
    )


def random_dataset(seed, m, d, T, sigma=1.0, sigma_Y=1.0, stationary=False):
    spec = generate_system(d=d, T=T, noise_scales=sigma, sigma_Y=sigma_Y,
                           stationary=stationary, rng=RngStream(seed))
    return spec, sample_trajectories(spec, m, RngStream(seed, 1))
