"""Quadratic cost of a discrete state/control pair and its directional derivative.

All time integrals are left-endpoint rectangle sums, which is exact because
state and control are step processes on the grid.  The target enters through
its projected left-endpoint samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from .forward import DiscreteProblem, StatePath, solve_auxiliary


@dataclass(frozen=True)
class CostBreakdown:
    tracking: float
    control: float
    terminal: float

    @property
    def total(self) -> float:
        return 0.5 * (self.tracking + self.control + self.terminal)


def cost_per_path(problem: DiscreteProblem, state: StatePath, u: np.ndarray) -> CostBreakdown:
    """Per-path cost: half of time-integrated tracking + alpha-weighted control
    + beta-weighted terminal misfit."""
    N, d = problem.grid.N, problem.space.d_h
    if u.shape != (N, d):
        raise ValueError(f"control has shape {u.shape}, expected ({N}, {d})")
    space, tau = problem.space, problem.grid.tau

    diff = state.x1[:N] - problem.target_h[:N]
    tracking = tau * float(np.sum(diff * space.mass_matvec(diff.T).T))
    control = problem.alpha * tau * float(np.sum(u * space.mass_matvec(u.T).T))
    d_term = state.x1[N] - problem.target_h[N]
    terminal = problem.beta * float(np.dot(d_term, space.mass_matvec(d_term)))
    return CostBreakdown(tracking, control, terminal)


def monte_carlo_cost(
    problem: DiscreteProblem, runs: Sequence[Tuple[StatePath, np.ndarray]]
) -> float:
    """Arithmetic mean of per-path totals, reduced in sample-index order."""
    if len(runs) == 0:
        raise ValueError("monte_carlo_cost needs at least one sample")
    totals = np.array([cost_per_path(problem, s, u).total for s, u in runs])
    return float(np.sum(totals) / totals.size)


def directional_derivative(
    problem: DiscreteProblem,
    u: np.ndarray,
    v: np.ndarray,
    noises: Iterable[np.ndarray],
) -> float:
    """Derivative of the empirical reduced cost at u in direction v.

    For each path the linearized state is the auxiliary solution driven by v
    on the same noise; the derivative is the mean of

        tau sum_n <x1[n] - target[n], x1_0[n]> + alpha tau sum_n <u[n], v[n]>
        + beta <x1[N] - target[N], x1_0[N]>.
    """
    N = problem.grid.N
    space, tau = problem.space, problem.grid.tau
    from .forward import solve_forward

    values = []
    for dW in noises:
        state = solve_forward(problem, u, dW)
        lin = solve_auxiliary(problem, v, dW)
        diff = state.x1[:N] - problem.target_h[:N]
        val = tau * float(np.sum(diff * space.mass_matvec(lin.x1[:N].T).T))
        val += problem.alpha * tau * float(np.sum(u * space.mass_matvec(v.T).T))
        d_term = state.x1[N] - problem.target_h[N]
        val += problem.beta * float(np.dot(d_term, space.mass_matvec(lin.x1[N])))
        values.append(val)
    if not values:
        raise ValueError("directional_derivative needs at least one noise path")
    return float(np.sum(np.array(values)) / len(values))
