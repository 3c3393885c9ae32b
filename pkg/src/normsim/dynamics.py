"""Strategy-update rules: Fermi imitation with exploration, and the replicator dynamic.

Everything here is pure given an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

DEFAULT_STEP = 1e-3


class StepSizeError(ValueError):
    """Raised when an Euler step pushes a proportion outside [0, 1]."""


@dataclass(frozen=True)
class FermiParams:
    selection_strength: float = 0.5

    def __post_init__(self):
        if not self.selection_strength >= 0 or math.isinf(self.selection_strength):
            raise ValueError(f"selection_strength must be finite and >= 0, got {self.selection_strength}")


@dataclass(frozen=True)
class ExplorationParams:
    rate: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"exploration rate must lie in [0, 1], got {self.rate}")


def fermi_switch_probability(own_payoff, neighbor_payoff, params: FermiParams):
    """Probability of adopting the neighbor's strategy, 1 / (1 + exp(s * (own - neighbor))).

    Works elementwise on arrays. ``expit`` keeps large payoff gaps from overflowing.
    """
    diff = np.subtract(own_payoff, neighbor_payoff, dtype=float)
    out = expit(-params.selection_strength * diff)
    return float(out) if np.ndim(out) == 0 else out


def imitation_update(
    strategies: np.ndarray,
    payoffs: np.ndarray,
    neighbor_choice: np.ndarray,
    fermi: FermiParams,
    explore: ExplorationParams,
    universe: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Synchronous Fermi imitation with exploration.

    ``neighbor_choice[i]`` is the agent that agent ``i`` compares itself with.
    All comparisons read the pre-update ``strategies``. Random draws are taken
    in three blocks, each in ascending agent order: the exploration coin, the
    exploratory strategy, then the imitation coin. All three are consumed for
    every agent whether or not they end up mattering.
    """
    strategies = np.asarray(strategies)
    n = strategies.shape[0]
    universe = np.asarray(universe)
    explore_coin = rng.random(n)
    explore_pick = universe[rng.integers(universe.shape[0], size=n)]
    imitate_coin = rng.random(n)

    p_switch = expit(-fermi.selection_strength * (payoffs - payoffs[neighbor_choice]))
    new = np.where(imitate_coin < p_switch, strategies[neighbor_choice], strategies)
    return np.where(explore_coin < explore.rate, explore_pick, new)


def _check_game(state, payoffs) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(state, dtype=float)
    a = np.asarray(payoffs, dtype=float)
    if x.ndim != 1:
        raise ValueError("state must be a 1-d vector of proportions")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"payoff matrix must be square, got shape {a.shape}")
    if a.shape[0] != x.shape[0]:
        raise ValueError(f"state has {x.shape[0]} strategies but matrix is {a.shape[0]}x{a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("payoff matrix has non-finite entries")
    return x, a


def check_mixed_state(state, atol: float = 1e-9) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("mixed state must be a non-empty 1-d vector")
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("mixed state entries must lie in [0, 1]")
    if abs(x.sum() - 1.0) > atol:
        raise ValueError(f"mixed state must sum to 1, sums to {x.sum()!r}")
    return x


def replicator_derivative(state, payoffs) -> np.ndarray:
    """dx_i/dt = x_i * (pi_i(x) - theta(x)) with pi = A x and theta = x . pi."""
    x, a = _check_game(state, payoffs)
    fitness = a @ x
    mean_fitness = x @ fitness
    return x * (fitness - mean_fitness)


def replicator_trajectory(initial, payoffs, horizon: float, step: float = DEFAULT_STEP) -> np.ndarray:
    """Integrate the replicator dynamic with fixed-step explicit Euler.

    Returns an array of shape ``(n_steps + 1, n)`` whose first row is ``initial``.
    The last step is shortened when ``horizon`` is not a multiple of ``step`` so
    the final row sits exactly at ``horizon``. Every row is renormalized to sum 1.
    """
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    if not horizon >= 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    x = check_mixed_state(initial)
    x, a = _check_game(x, payoffs)

    n_full = int(math.floor(horizon / step + 1e-9))
    remainder = horizon - n_full * step
    steps = [step] * n_full
    if remainder > 1e-9 * step:
        steps.append(remainder)

    out = np.empty((len(steps) + 1, x.shape[0]))
    out[0] = x
    for i, h in enumerate(steps, start=1):
        fitness = a @ x
        x = x + h * x * (fitness - x @ fitness)
        if np.any(x < 0) or np.any(x > 1 + 1e-12):
            raise StepSizeError(f"step {h} pushed a proportion outside [0, 1] at t={sum(steps[:i]):g}")
        x = x / x.sum()
        out[i] = x
    return out


def trajectory_times(horizon: float, step: float, length: int) -> np.ndarray:
    """Time stamps matching the rows of :func:`replicator_trajectory`."""
    return np.minimum(np.arange(length) * step, horizon)
