"""Gradient descent on the discrete control via artificial iterates.

For additive noise the conditional expectations in the optimality system are
computed exactly by running one conditioned copy of the forward/backward
systems per grid time.  Copy m sees the noise truncated after step m and the
control row u_art[m]; its adjoint is driven by its own displacement.  The
update for row m at column n reads the adjoint of copy min(m, n) at t_{n+1}:
for m <= n this is the tower property, and for m > n the value at column n is
measurable at t_n already, so every later copy receives the same update and
the rows agree on and below the diagonal.  Row N therefore always carries the
implemented control and sees the full noise, which is what the extraction
returns.

All N+1 copies advance in lockstep: each time step is one banded solve with
the copies as right-hand-side columns, so an iteration costs O(N^2 d_h).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cost import cost_per_path
from .forward import DiscreteProblem, StatePath
from .backward import AdjointPath

#: Grid sizes up to this many scalars get the full invariant check each iteration.
_INVARIANT_CHECK_LIMIT = 200_000


class UnsupportedConfigurationError(ValueError):
    """Raised for configurations the exact conditional-expectation path cannot serve."""


@dataclass
class GradientConfig:
    """Step parameter, iteration budget and stopping rule.

    kappa=None selects 1.02 times the Lipschitz bound: the step must stay
    above the bound, and a small margin maximizes the contraction factor
    alpha/kappa.  residual_tol=None runs a fixed number of iterations.
    """

    kappa: float | None = None
    max_iters: int = 10
    residual_tol: float | None = None
    u0: np.ndarray | None = None
    check_invariants: str = "auto"  # "auto" | "always" | "never"
    record_controls: bool = False


@dataclass
class IterationReport:
    costs: list = field(default_factory=list)
    breakdowns: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    control_changes: list = field(default_factory=list)
    iteration_seconds: list = field(default_factory=list)
    controls: list = field(default_factory=list)  # filled when record_controls is set


@dataclass
class DescentResult:
    control: np.ndarray          # (N, d_h), left-endpoint values
    state: StatePath             # trajectory under the returned control, full noise
    adjoint: AdjointPath         # adjoint values at their own conditioning time
    y2_next: np.ndarray          # (N, d_h): copy-n adjoint velocity at t_{n+1}
    report: IterationReport
    iterations: int
    kappa: float


def lipschitz_bound(problem: DiscreteProblem) -> float:
    """Closed-form bound on the curvature of the reduced cost.

    (T + beta) * c_P * c1 * e^{c2 T} + alpha with c_P = (L/pi)^2,
    c1 = c_P g2 + (g2 tau / 4)(2 c_P + 1) + 1 for g2 = |gamma|^2, c2 = 1.
    """
    data, tau = problem.data, problem.grid.tau
    c_p = (problem.space.mesh.length / np.pi) ** 2
    g2 = float(np.dot(data.gamma, data.gamma))
    c1 = c_p * g2 + (g2 * tau / 4.0) * (2.0 * c_p + 1.0) + 1.0
    return (data.T + data.beta) * c_p * c1 * np.e**data.T + data.alpha


def fixed_point_residual(u: np.ndarray, y2_next: np.ndarray, alpha: float, space) -> float:
    """max_n of the L2 norm of alpha*u[n] - y2_next[n].

    y2_next[n] is the adjoint velocity of the copy conditioned at t_n,
    evaluated at t_{n+1}; at the optimum it equals alpha*u[n].
    """
    if u.shape != y2_next.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {y2_next.shape}")
    defect = alpha * u - y2_next
    return float(np.sqrt(np.sum(defect * space.mass_matvec(defect.T).T, axis=1)).max())


def _forward_sweep(problem, u_art, forcing):
    """Advance all copies.  u_art: (R, N, d), forcing: (N, d, R) noise terms.

    Returns x1, x2 of shape (N+1, d, R) with copy index last.
    """
    N, d = problem.grid.N, problem.space.d_h
    R = u_art.shape[0]
    space, tau = problem.space, problem.grid.tau
    x1 = np.zeros((N + 1, d, R))
    x2 = np.zeros((N + 1, d, R))
    x1[0] = problem.x10_h[:, None]
    x2[0] = problem.x20_h[:, None]
    for n in range(N):
        drive = tau * u_art[:, n, :].T + forcing[n]
        rhs = (
            problem.c_matvec(x2[n])
            - tau * space.stiffness_matvec(x1[n])
            + space.mass_matvec(drive)
        )
        x2[n + 1] = problem.solve_step(rhs)
        x1[n + 1] = x1[n] + (tau / 2.0) * (x2[n + 1] + x2[n])
    return x1, x2


def _backward_sweep(problem, x1):
    """Solve the adjoint recursion for all copies down to t_0.

    Rows of copy m before its conditioning time are scratch; callers only
    read entries at times >= the copy index.
    """
    N = problem.grid.N
    space, tau, beta = problem.space, problem.grid.tau, problem.beta
    y1 = np.zeros_like(x1)
    y2 = np.zeros_like(x1)

    d_term = problem.target_h[N][:, None] - x1[N]
    y2[N] = problem.solve_step((tau * beta / 2.0) * space.mass_matvec(d_term))
    y1[N] = space.solve_mass(-(tau / 2.0) * space.stiffness_matvec(y2[N])) + beta * d_term
    for n in range(N - 1, -1, -1):
        d_n = problem.target_h[n][:, None] - x1[n]
        rhs = space.mass_matvec(
            y2[n + 1] + tau * y1[n + 1] + (tau**2 / 2.0) * d_n
        ) - (tau**2 / 4.0) * space.stiffness_matvec(y2[n + 1])
        y2[n] = problem.solve_step(rhs)
        y1[n] = (
            y1[n + 1]
            - (tau / 2.0) * space.solve_mass(space.stiffness_matvec(y2[n + 1] + y2[n]))
            + tau * d_n
        )
    return y1, y2


def _check_grid_invariants(u_art, x1, x2):
    """Rows at or past the diagonal must agree exactly: the control value at
    column n is known at t_n, and every copy m >= n sees the same increments
    and controls up to t_n."""
    R = u_art.shape[0]
    N = R - 1
    for n in range(N):
        col = u_art[n:, n, :]
        if not (col == col[0]).all():
            raise AssertionError(f"artificial control rows disagree past the diagonal at n={n}")
    for j in range(N + 1):
        for arr, name in ((x1, "x1"), (x2, "x2")):
            block = arr[j, :, j:]
            if not (block == block[:, :1]).all():
                raise AssertionError(f"conditioned {name} at t_{j} differs across copies m >= {j}")


def run_gradient_descent(
    problem: DiscreteProblem, dW: np.ndarray, config: GradientConfig
) -> DescentResult:
    """Iterate the control update until the budget or the residual tolerance.

    Only additive noise is supported: with multiplicative noise the
    conditional expectations in the adjoint are no longer computable by
    truncating the increments and would need a regression estimator.
    """
    if np.any(problem.gamma != 0.0):
        raise UnsupportedConfigurationError(
            "multiplicative noise (gamma != 0) is not supported: the exact "
            "conditional-expectation construction requires additive noise"
        )
    N, d, m_w = problem.grid.N, problem.space.d_h, problem.data.m_w
    if dW.shape != (N, m_w):
        raise ValueError(f"noise path has shape {dW.shape}, expected ({N}, {m_w})")

    bound = lipschitz_bound(problem)
    kappa = 1.02 * bound if config.kappa is None else float(config.kappa)
    if kappa <= bound:
        raise UnsupportedConfigurationError(
            f"step parameter kappa={kappa} must exceed the Lipschitz bound {bound:.6g}"
        )
    alpha = problem.alpha
    R = N + 1

    u_art = np.zeros((R, N, d))
    if config.u0 is not None:
        if config.u0.shape != (N, d):
            raise ValueError(f"u0 has shape {config.u0.shape}, expected ({N}, {d})")
        u_art[:] = config.u0[None, :, :]

    # noise forcing per copy: sigma(t_n) dW_{n+1} kept only while n < m
    s = np.einsum("ni,nid->nd", dW, problem.sigma_h)
    keep = (np.arange(N)[:, None] < np.arange(R)[None, :]).astype(float)
    forcing = s[:, :, None] * keep[:, None, :]

    check = config.check_invariants == "always" or (
        config.check_invariants == "auto" and R * N * d <= _INVARIANT_CHECK_LIMIT
    )

    # update stencil: row m, column n reads copy min(m, n) at time n+1
    rows = np.arange(R)[:, None]
    cols = np.arange(N)[None, :]
    src = np.minimum(rows, cols)

    report = IterationReport()
    x1, x2 = _forward_sweep(problem, u_art, forcing)
    y1, y2 = _backward_sweep(problem, x1)
    diag = np.arange(N + 1)

    iterations = 0
    for _ in range(config.max_iters):
        tic = time.perf_counter()
        u_prev = u_art[N].copy()
        gathered = y2[cols + 1, :, src]          # (R, N, d)
        u_art = (1.0 - alpha / kappa) * u_art + (1.0 / kappa) * gathered
        x1, x2 = _forward_sweep(problem, u_art, forcing)
        y1, y2 = _backward_sweep(problem, x1)
        iterations += 1
        report.iteration_seconds.append(time.perf_counter() - tic)

        if check:
            _check_grid_invariants(u_art, x1, x2)

        u = u_art[diag[:N], diag[:N], :]
        y2_next = y2[diag[:N] + 1, :, diag[:N]]
        state = StatePath(x1[diag, :, diag], x2[diag, :, diag])
        residual = fixed_point_residual(u, y2_next, alpha, problem.space)
        report.residuals.append(residual)
        breakdown = cost_per_path(problem, state, u)
        report.breakdowns.append(breakdown)
        report.costs.append(breakdown.total)
        report.control_changes.append(
            float(np.sqrt(problem.grid.tau * np.sum((u - u_prev) * problem.space.mass_matvec((u - u_prev).T).T)))
        )
        if config.record_controls:
            report.controls.append(u.copy())
        if config.residual_tol is not None and residual <= config.residual_tol:
            break

    u = u_art[diag[:N], diag[:N], :]
    state = StatePath(x1[diag, :, diag], x2[diag, :, diag])
    adjoint = AdjointPath(y1[diag, :, diag], y2[diag, :, diag])
    y2_next = y2[diag[:N] + 1, :, diag[:N]]
    return DescentResult(u, state, adjoint, y2_next, report, iterations, kappa)
