"""Implicit-midpoint stepping for the controlled stochastic wave system.

The coupled displacement/velocity update reduces to one SPD tridiagonal
solve per step with the matrix A = mass + (tau^2/4) * stiffness:

    A x2[n+1] = (mass - (tau^2/4) stiffness) x2[n] - tau stiffness x1[n]
                + tau mass u[n] + mass * sum_i (sigma_h[n,i] + gamma_i x1[n]) dW[n,i]
    x1[n+1]   = x1[n] + (tau/2)(x2[n+1] + x2[n])

A is factored once per (mesh, grid) pair and shared with the backward
solver, which uses the same matrix.  The noise coefficient is evaluated at
the left endpoint of each step; the drift is midpoint-averaged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .fem import FemSpace, _banded_upper, _tridiag_matvec
from .noise import TimeGrid


@dataclass(frozen=True)
class ProblemData:
    """Continuous problem data.

    sigma is a sequence of m_w callables sigma_i(t, x); target, x10, x20 are
    callables of (t, x) and x respectively.  All spatial profiles must vanish
    at x = 0 and x = L.
    """

    alpha: float
    beta: float
    gamma: np.ndarray
    sigma: Sequence[Callable]
    target: Callable
    x10: Callable
    x20: Callable
    T: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"control weight alpha must be positive, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"terminal weight beta must be nonnegative, got {self.beta}")
        object.__setattr__(self, "gamma", np.atleast_1d(np.asarray(self.gamma, dtype=float)))
        if self.gamma.shape != (len(self.sigma),):
            raise ValueError(
                f"gamma has shape {self.gamma.shape}, expected ({len(self.sigma)},) to match sigma"
            )

    @property
    def m_w(self) -> int:
        return len(self.sigma)


@dataclass
class StatePath:
    """Nodal coefficients of displacement and velocity, shape (N+1, d_h) each."""

    x1: np.ndarray
    x2: np.ndarray


class DiscreteProblem:
    """Space-time discretization: projected data plus the shared step factorization."""

    def __init__(self, space: FemSpace, grid: TimeGrid, data: ProblemData):
        self.space = space
        self.grid = grid
        self.data = data

        self.x10_h = space.ritz_project(data.x10)
        self.x20_h = space.ritz_project(data.x20)

        N, m_w, d = grid.N, data.m_w, space.d_h
        times = grid.times
        self.sigma_h = np.zeros((N, m_w, d))
        for n in range(N):
            for i, sig in enumerate(data.sigma):
                self.sigma_h[n, i] = space.ritz_project(lambda x, t=times[n], s=sig: s(t, x))
        self.target_h = np.zeros((N + 1, d))
        for n in range(N + 1):
            self.target_h[n] = space.ritz_project(lambda x, t=times[n]: data.target(t, x))

        tau = grid.tau
        m = space.matrices
        self._step_cho = cholesky_banded(
            _banded_upper(
                m.mass_diag + (tau**2 / 4.0) * m.stiff_diag,
                m.mass_off + (tau**2 / 4.0) * m.stiff_off,
            )
        )
        # combined matrix mass - (tau^2/4) stiffness for the one-solve step form
        self._c_diag = m.mass_diag - (tau**2 / 4.0) * m.stiff_diag
        self._c_off = m.mass_off - (tau**2 / 4.0) * m.stiff_off

    @property
    def alpha(self) -> float:
        return self.data.alpha

    @property
    def beta(self) -> float:
        return self.data.beta

    @property
    def gamma(self) -> np.ndarray:
        return self.data.gamma

    def solve_step(self, rhs):
        """Solve A w = rhs with A = mass + (tau^2/4) stiffness; rhs may be batched."""
        return cho_solve_banded((self._step_cho, False), rhs)

    def c_matvec(self, v):
        """(mass - (tau^2/4) stiffness) v."""
        return _tridiag_matvec(self._c_diag, self._c_off, v)


def discretize(space: FemSpace, grid: TimeGrid, data: ProblemData) -> DiscreteProblem:
    return DiscreteProblem(space, grid, data)


def _check_shapes(problem: DiscreteProblem, u, dW):
    N, d, m_w = problem.grid.N, problem.space.d_h, problem.data.m_w
    if u.shape != (N, d):
        raise ValueError(f"control has shape {u.shape}, expected ({N}, {d})")
    if dW.shape != (N, m_w):
        raise ValueError(f"noise path has shape {dW.shape}, expected ({N}, {m_w})")


def _advance(problem, x1, x2, u_n, forcing):
    """One midpoint step from (x1, x2); forcing is the noise term at this step."""
    space, tau = problem.space, problem.grid.tau
    rhs = (
        problem.c_matvec(x2)
        - tau * space.stiffness_matvec(x1)
        + space.mass_matvec(tau * u_n + forcing)
    )
    x2_new = problem.solve_step(rhs)
    x1_new = x1 + (tau / 2.0) * (x2_new + x2)
    return x1_new, x2_new


def solve_forward(problem: DiscreteProblem, u: np.ndarray, dW: np.ndarray) -> StatePath:
    """Advance the controlled system from the projected initial data."""
    _check_shapes(problem, u, dW)
    N, d = problem.grid.N, problem.space.d_h
    gamma = problem.gamma
    x1 = np.zeros((N + 1, d))
    x2 = np.zeros((N + 1, d))
    x1[0], x2[0] = problem.x10_h, problem.x20_h
    for n in range(N):
        forcing = dW[n] @ problem.sigma_h[n] + (gamma @ dW[n]) * x1[n]
        x1[n + 1], x2[n + 1] = _advance(problem, x1[n], x2[n], u[n], forcing)
    return StatePath(x1, x2)


def solve_auxiliary(problem: DiscreteProblem, u: np.ndarray, dW: np.ndarray) -> StatePath:
    """Same recursion with zero initial data and no additive noise.

    The multiplicative gamma * x1 * dW term is retained, so for fixed noise
    the map u -> state is linear and solve_forward(u + v) equals
    solve_forward(u) + solve_auxiliary(v) path-wise.
    """
    _check_shapes(problem, u, dW)
    N, d = problem.grid.N, problem.space.d_h
    gamma = problem.gamma
    x1 = np.zeros((N + 1, d))
    x2 = np.zeros((N + 1, d))
    for n in range(N):
        forcing = (gamma @ dW[n]) * x1[n]
        x1[n + 1], x2[n + 1] = _advance(problem, x1[n], x2[n], u[n], forcing)
    return StatePath(x1, x2)


def energy(state: StatePath, n: int, space: FemSpace) -> float:
    """Discrete energy |grad x1(t_n)|^2 + |x2(t_n)|^2 (squared norms)."""
    if not 0 <= n < state.x1.shape[0]:
        raise IndexError(f"time index {n} outside 0..{state.x1.shape[0] - 1}")
    return space.h1_seminorm(state.x1[n]) ** 2 + space.l2_norm(state.x2[n]) ** 2
