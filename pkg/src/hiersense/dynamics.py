"""Two-state Markov occupancy dynamics of the licensed users and the SU population.

Each cell's occupancy bit evolves independently: an empty cell becomes
occupied with probability nu1 per frame, an occupied one clears with
probability nu0.  The chain memory mu = 1 - nu1 - nu0 drives both the
steady-state mixing rate and the delay compensation used throughout the
estimators (k-step marginals decay towards the steady state as mu**k).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class OccupancyModel:
    """Per-cell occupancy chain with transition probabilities (nu1, nu0).

    Arithmetic is kept generic: constructing the model from
    ``fractions.Fraction`` values keeps ``mu``, ``pi_b`` and
    :func:`k_step_marginal` exact, which the composition tests rely on.
    Negative memory (nu1 + nu0 > 1) is rejected; delay compensation with
    oscillating chains is out of scope.
    """

    def __init__(self, nu1, nu0, mu=None, pi_b=None):
        if not (0 <= nu1 <= 1 and 0 <= nu0 <= 1):
            raise ValueError("nu1 and nu0 must lie in [0, 1]")
        if nu1 + nu0 > 1:
            raise ValueError("nu1 + nu0 must not exceed 1 (memory must be >= 0)")
        self.nu1 = nu1
        self.nu0 = nu0
        derived_mu = 1 - nu1 - nu0
        if mu is not None and abs(float(mu) - float(derived_mu)) > 1e-12:
            raise ValueError(f"mu={mu} inconsistent with 1 - nu1 - nu0 = {derived_mu}")
        self.mu = derived_mu
        total = nu1 + nu0
        derived_pi = nu1 / total if total > 0 else nu1 * 0
        if pi_b is not None and abs(float(pi_b) - float(derived_pi)) > 1e-12:
            raise ValueError(f"pi_b={pi_b} inconsistent with nu1/(nu1+nu0) = {derived_pi}")
        self.pi_b = derived_pi

    def __repr__(self):
        return f"OccupancyModel(nu1={self.nu1}, nu0={self.nu0})"


@dataclass
class OccupancyState:
    """Occupancy bits of every cell at frame t."""

    b: np.ndarray
    t: int = 0

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.int8)
        if not np.isin(self.b, (0, 1)).all():
            raise ValueError("occupancy entries must be 0 or 1")


def sample_steady_state(model: OccupancyModel, n_cells: int, rng) -> OccupancyState:
    """Draw every cell independently from the stationary distribution."""
    b = (rng.random(n_cells) < float(model.pi_b)).astype(np.int8)
    return OccupancyState(b=b, t=0)


def step_occupancy(model: OccupancyModel, state: OccupancyState, rng) -> OccupancyState:
    """Advance every cell one frame under the (nu1, nu0) transition law."""
    u = rng.random(len(state.b))
    occupied = state.b == 1
    nxt = np.where(occupied, u >= float(model.nu0), u < float(model.nu1))
    return OccupancyState(b=nxt.astype(np.int8), t=state.t + 1)


def k_step_marginal(model: OccupancyModel, b_prob, delta: int):
    """P(occupied at t) given P(occupied at t - delta) = b_prob.

    Chapman-Kolmogorov for the two-state chain collapses to
    pi_b + mu**delta * (b_prob - pi_b).
    """
    if delta < 0 or delta != int(delta):
        raise ValueError("delta must be a nonnegative integer")
    return model.pi_b + model.mu ** int(delta) * (b_prob - model.pi_b)


@dataclass
class SuPopulation:
    """SU head-count per cell; np.inf marks the dense (M >> 1) regime."""

    m: np.ndarray

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        if not ((self.m >= 1) | np.isinf(self.m)).all():
            raise ValueError("every cell needs at least one SU")

    @property
    def dense(self) -> bool:
        return bool(np.isinf(self.m).all())


@dataclass(frozen=True)
class PopulationModel:
    """Stationary, cell-i.i.d. SU population process.

    Only two modes are exercised: a constant head count per cell, and the
    dense limit where per-SU terms (a/M, 1/M) vanish.
    """

    mode: str = "dense"
    m: int = 10

    def __post_init__(self):
        if self.mode not in ("constant", "dense"):
            raise ValueError(f"unknown population mode {self.mode!r}")
        if self.mode == "constant" and self.m < 1:
            raise ValueError("constant population must be >= 1")


def sample_su_population(model: PopulationModel, n_cells: int, t: int, rng
                         ) -> SuPopulation:
    """Population vector at frame t (stationary, so t and rng are unused)."""
    if model.mode == "constant":
        return SuPopulation(m=np.full(n_cells, float(model.m)))
    return SuPopulation(m=np.full(n_cells, np.inf))
