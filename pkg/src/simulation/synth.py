"""
Synthetic Gaussian-linear systems: generation, sampling and closed-form truths
"""

import dataclasses
import logging
from typing import Optional, Sequence, Union

import numpy as np

from core.regression import Matrix, matrix_chain_product, spectral_radius
from estimators.linear import LinearPredictor
from safety.guards import (
    DegenerateSystemError,
    MisspecifiedSystemError,
    NonFiniteError,
    ParameterError,
    ensure_positive,
)
from simulation.rng import RngStream
from simulation.system import InitialState, SystemSpec, TrajectoryDataset


logger = logging.getLogger(__name__)

DEFAULT_ENTRY_STD = 0.2
DEFAULT_KAPPA = 1.5


def _noise_tuple(noise_scales: Union[float, Sequence[float]], horizon: int) -> tuple:
    if np.isscalar(noise_scales):
        return (float(noise_scales),) * (horizon - 1)
    scales = tuple(float(s) for s in noise_scales)
    if len(scales) != horizon - 1:
        raise ParameterError(f"expected {horizon - 1} noise scales for T={horizon}, got {len(scales)}")
    return scales


def _draw_transition(d: int, kappa: float, entry_std: float, gen: np.random.Generator) -> Matrix:
    # Uniform scaling by kappa / rho is the same as rescaling the eigenvalues
    # of U diag(lambda) U^-1, without needing a diagonalisable draw.
    transition = gen.normal(0.0, entry_std, size=(d, d))
    np.fill_diagonal(transition, 1.0)
    rho = spectral_radius(transition)
    if rho == 0.0:
        raise DegenerateSystemError("transition draw has spectral radius 0, cannot rescale", d=d)
    return transition * (kappa / rho)


def generate_system(d: int,
                    T: int,
                    kappa: float = DEFAULT_KAPPA,
                    entry_std: float = DEFAULT_ENTRY_STD,
                    noise_scales: Union[float, Sequence[float]] = 1.0,
                    sigma_Y: float = 1.0,
                    initial_state: Optional[InitialState] = None,
                    stationary: bool = False,
                    rng: Optional[RngStream] = None) -> SystemSpec:
    """Draw a system with rho(A_t) = kappa for every transition.

    Off-diagonal entries and beta are Normal(0, entry_std^2), diagonals start
    at 1. A raw Markov-violation vector is drawn last, the same way as beta,
    and frozen on the spec for scale_markov_violation.
    """
    if int(d) != d or d < 1:
        raise ParameterError(f"d must be a positive integer, got {d}")
    if int(T) != T or T < 2:
        raise ParameterError(f"T must be an integer >= 2, got {T}")
    ensure_positive(kappa, "kappa")
    ensure_positive(entry_std, "entry_std", allow_zero=True)
    rng = rng or RngStream(0)
    gen = rng.generator()
    d, T = int(d), int(T)

    if stationary:
        shared = _draw_transition(d, kappa, entry_std, gen)
        transitions = tuple(shared for _ in range(T - 1))
    else:
        transitions = tuple(_draw_transition(d, kappa, entry_std, gen) for _ in range(T - 1))
    beta = gen.normal(0.0, entry_std, size=(d, 1))
    raw_violation = gen.normal(0.0, entry_std, size=(d, 1))

    spec = SystemSpec(
        transitions=transitions,
        outcome_weights=beta,
        noise_scales=_noise_tuple(noise_scales, T),
        outcome_noise=float(sigma_Y),
        initial_state=initial_state or InitialState(),
        raw_violation=raw_violation,
        stationary=stationary,
    )
    logger.debug(f"Generated system d={d} T={T} kappa={kappa} stationary={stationary}")
    return spec


def _advance(previous: Matrix, transition: Matrix, scale: float, gen: np.random.Generator) -> Matrix:
    """One Markov step: the next state sees only the previous state slice."""
    noise = gen.standard_normal(size=previous.shape)
    return previous @ transition + scale * noise


def sample_trajectories(spec: SystemSpec, m: int, rng: Optional[RngStream] = None) -> TrajectoryDataset:
    """Sample m independent series X1..X_T and outcomes Y from spec.

    Noise is always drawn, even at scale 0, so datasets for systems that
    differ only in noise levels consume the stream identically.
    """
    if int(m) != m or m < 1:
        raise ParameterError(f"m must be a positive integer, got {m}")
    rng = rng or RngStream(0)
    gen = rng.generator()
    m, d = int(m), spec.dim

    init = spec.initial_state
    states = [init.mean + init.std * gen.standard_normal(size=(m, d))]
    for transition, scale in zip(spec.transitions, spec.noise_scales):
        states.append(_advance(states[-1], transition, scale, gen))

    outcomes = states[-1] @ spec.outcome_weights + spec.outcome_noise * gen.standard_normal(size=(m, 1))
    if spec.markov_violation is not None:
        outcomes = outcomes + states[0] @ spec.markov_violation

    if not all(np.all(np.isfinite(x)) for x in states) or not np.all(np.isfinite(outcomes)):
        raise NonFiniteError("sampled trajectories overflowed", m=m, d=d, T=spec.horizon)
    return TrajectoryDataset(states=tuple(states), outcomes=outcomes)


def true_theta(spec: SystemSpec) -> LinearPredictor:
    """theta = A_1 ... A_{T-1} beta."""
    theta = matrix_chain_product(list(spec.transitions)) @ spec.outcome_weights
    return LinearPredictor(theta=theta, estimator="truth")


def irreducible_risk(spec: SystemSpec) -> float:
    """Variance of the effective noise in Y = theta' X1 + noise (isotropic case)."""
    if spec.markov_violation is not None:
        raise MisspecifiedSystemError("irreducible risk is defined for Markov systems only")
    weights = spec.outcome_weights
    risk = spec.noise_scales[-1] ** 2 * float(weights.T @ weights) + spec.outcome_noise ** 2
    # noise entering X_t (t = T-1 .. 2) propagates through A_t ... A_{T-1}
    for t in range(spec.horizon - 1, 1, -1):
        weights = spec.transitions[t - 1] @ weights
        risk += spec.noise_scales[t - 2] ** 2 * float(weights.T @ weights)
    return float(risk)


def scale_markov_violation(spec: SystemSpec, ratio: float) -> SystemSpec:
    """Return spec with delta rescaled so ||delta|| = ratio * ||beta||."""
    ratio = ensure_positive(ratio, "ratio", allow_zero=True)
    if spec.raw_violation is None:
        raise ParameterError("system carries no raw Markov-violation draw")
    if ratio == 0.0:
        delta = np.zeros_like(spec.raw_violation)
    else:
        raw_norm = float(np.linalg.norm(spec.raw_violation))
        if raw_norm == 0.0:
            raise DegenerateSystemError("raw Markov-violation draw is the zero vector", ratio=ratio)
        delta = spec.raw_violation * (ratio * float(np.linalg.norm(spec.outcome_weights)) / raw_norm)
    return dataclasses.replace(spec, markov_violation=delta)
