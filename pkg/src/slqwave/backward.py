"""Backward adjoint recursion driven by a conditioned displacement trajectory.

The two coupled lines per step reduce, after substitution, to one solve with
the same SPD matrix A = mass + (tau^2/4) stiffness already factored by the
forward solver:

    terminal:  A y2[N] = (tau*beta/2) mass (target[N] - x1[N])
               mass y1[N] = -(tau/2) stiffness y2[N] + beta mass (target[N] - x1[N])
    step n:    A y2[n] = mass (y2[n+1] + tau y1[n+1] + (tau^2/2) d_n)
                         - (tau^2/4) stiffness y2[n+1]
               mass y1[n] = mass y1[n+1] - (tau/2) stiffness (y2[n+1] + y2[n])
                            + tau mass d_n
    with d_n = target[n] - x1[n].

The recursion runs from t_N down to t_start; entries before t_start are left
unset (NaN) because the family member indexed by an earlier time owns them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import DiscreteProblem


@dataclass
class AdjointPath:
    """Adjoint pair, shape (N+1, d_h) each; rows before the start index are NaN."""

    y1: np.ndarray
    y2: np.ndarray


def solve_artificial_backward(
    problem: DiscreteProblem, x1_art: np.ndarray, start: int = 0
) -> AdjointPath:
    """Solve the backward recursion for one conditioning index.

    x1_art is the displacement component of the matching conditioned forward
    trajectory, shape (N+1, d_h).
    """
    N, d = problem.grid.N, problem.space.d_h
    if x1_art.shape != (N + 1, d):
        raise ValueError(f"x1_art has shape {x1_art.shape}, expected ({N + 1}, {d})")
    if not 0 <= start <= N:
        raise ValueError(f"start index {start} outside 0..{N}")

    space, tau, beta = problem.space, problem.grid.tau, problem.beta
    y1 = np.full((N + 1, d), np.nan)
    y2 = np.full((N + 1, d), np.nan)

    d_term = problem.target_h[N] - x1_art[N]
    y2[N] = problem.solve_step((tau * beta / 2.0) * space.mass_matvec(d_term))
    y1[N] = space.solve_mass(-(tau / 2.0) * space.stiffness_matvec(y2[N])) + beta * d_term

    for n in range(N - 1, start - 1, -1):
        d_n = problem.target_h[n] - x1_art[n]
        rhs = space.mass_matvec(
            y2[n + 1] + tau * y1[n + 1] + (tau**2 / 2.0) * d_n
        ) - (tau**2 / 4.0) * space.stiffness_matvec(y2[n + 1])
        y2[n] = problem.solve_step(rhs)
        y1[n] = (
            y1[n + 1]
            - (tau / 2.0) * space.solve_mass(space.stiffness_matvec(y2[n + 1] + y2[n]))
            + tau * d_n
        )
    return AdjointPath(y1, y2)


def residual_check(
    problem: DiscreteProblem, adjoint: AdjointPath, x1_art: np.ndarray, start: int = 0
) -> float:
    """Plug the solution back into both recursion lines; return the worst residual.

    Residuals are measured in the L2 norm of the mass-solved defect, so they
    scale like the solution itself.
    """
    N = problem.grid.N
    space, tau, beta = problem.space, problem.grid.tau, problem.beta
    y1, y2 = adjoint.y1, adjoint.y2
    worst = 0.0

    def l2_of_defect(defect):
        return space.l2_norm(space.solve_mass(defect))

    d_term = problem.target_h[N] - x1_art[N]
    # terminal line 1: mass y1[N] = -(tau/2) stiffness y2[N] + beta mass d_term
    r = (
        space.mass_matvec(y1[N])
        + (tau / 2.0) * space.stiffness_matvec(y2[N])
        - beta * space.mass_matvec(d_term)
    )
    worst = max(worst, l2_of_defect(r))
    # terminal line 2: y2[N] = (tau/2) y1[N]
    r = space.mass_matvec(y2[N] - (tau / 2.0) * y1[N])
    worst = max(worst, l2_of_defect(r))

    for n in range(N - 1, start - 1, -1):
        d_n = problem.target_h[n] - x1_art[n]
        # line 1: mass(y1[n] - y1[n+1]) + (tau/2) stiffness (y2[n+1] + y2[n]) = tau mass d_n
        r = (
            space.mass_matvec(y1[n] - y1[n + 1] - tau * d_n)
            + (tau / 2.0) * space.stiffness_matvec(y2[n + 1] + y2[n])
        )
        worst = max(worst, l2_of_defect(r))
        # line 2: mass(y2[n] - y2[n+1]) = (tau/2) mass (y1[n+1] + y1[n])
        r = space.mass_matvec(y2[n] - y2[n + 1] - (tau / 2.0) * (y1[n + 1] + y1[n]))
        worst = max(worst, l2_of_defect(r))
    return worst
