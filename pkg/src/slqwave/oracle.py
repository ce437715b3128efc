"""Brute-force ground truth on a two-point scenario tree.

Every increment takes the values +-sqrt(tau), so the noise has exactly
2^(N*m_w) equiprobable realizations.  A control vector lives on each
non-leaf node, which encodes adaptedness structurally: scenarios sharing a
history share the decision.  The state is eliminated per scenario through
the linear forward recursion, leaving a strictly convex quadratic program in
the node controls whose normal equations are solved densely.  No gradient
machinery is involved, so the optimum is independent ground truth for the
descent algorithm.

Scenario s and its depth-n ancestor node are identified by the low bits of
the enumeration index: node_of(s, n) = s mod 2^(n*m_w).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .cost import monte_carlo_cost
from .descent import GradientConfig, run_gradient_descent
from .forward import DiscreteProblem, solve_auxiliary, solve_forward
from .noise import TimeGrid, sample_two_point_path

#: Hard cap on N * m_w; above this the enumeration is no longer test-sized.
MAX_TREE_BITS = 14


@dataclass(frozen=True)
class ScenarioTree:
    grid: TimeGrid
    m_w: int

    @property
    def n_scenarios(self) -> int:
        return 1 << (self.grid.N * self.m_w)

    @property
    def probability(self) -> float:
        return 1.0 / self.n_scenarios

    def num_nodes(self, depth: int) -> int:
        return 1 << (depth * self.m_w)

    @property
    def total_nodes(self) -> int:
        return sum(self.num_nodes(n) for n in range(self.grid.N + 1))

    def node_of(self, scenario: int, depth: int) -> int:
        """Depth-n ancestor of a scenario: the first n*m_w sign bits."""
        return scenario & ((1 << (depth * self.m_w)) - 1)

    def increments(self, scenario: int) -> np.ndarray:
        return sample_two_point_path(scenario, self.grid, self.m_w)


def build_tree(grid: TimeGrid, m_w: int) -> ScenarioTree:
    if grid.N * m_w > MAX_TREE_BITS:
        raise ValueError(
            f"tree with N*m_w = {grid.N * m_w} sign bits exceeds the guard of {MAX_TREE_BITS}"
        )
    return ScenarioTree(grid, m_w)


@dataclass
class TreeSolution:
    """Exact optimum: one control vector per non-leaf node, plus diagnostics."""

    tree: ScenarioTree
    node_controls: List[np.ndarray]        # depth n: (num_nodes(n), d_h)
    expected_cost: float
    normal_matrix: np.ndarray
    normal_rhs: np.ndarray
    first_order_residual: float

    def control_for_scenario(self, scenario: int) -> np.ndarray:
        """Per-step controls seen along one scenario, shape (N, d_h)."""
        return np.stack(
            [self.node_controls[n][self.tree.node_of(scenario, n)] for n in range(self.tree.grid.N)]
        )


def _unknown_layout(tree: ScenarioTree, d_h: int):
    """Offsets of each depth's node-control block in the stacked unknown vector."""
    offsets = []
    total = 0
    for n in range(tree.grid.N):
        offsets.append(total)
        total += tree.num_nodes(n) * d_h
    return offsets, total


def solve_exact(problem: DiscreteProblem, tree: ScenarioTree) -> TreeSolution:
    """Assemble and solve the normal equations of the tree-adapted quadratic program.

    Per scenario the map from stacked node controls to the displacement
    trajectory is affine; its columns are read off by simulating unit
    controls with zero data, and the offset by simulating the data with zero
    control.  Works for multiplicative noise too, since the per-scenario
    recursion stays linear in the state.
    """
    N, d = problem.grid.N, problem.space.d_h
    if (problem.grid.N, problem.data.m_w) != (tree.grid.N, tree.m_w):
        raise ValueError("tree and problem disagree on (N, m_w)")
    offsets, n_unknowns = _unknown_layout(tree, d)
    space, tau = problem.space, problem.grid.tau
    mass = space.dense_mass()

    H = np.zeros((n_unknowns, n_unknowns))
    g = np.zeros(n_unknowns)
    p = tree.probability

    # control penalty: alpha tau sum_n E|u(t_n)|^2 block-diagonal over nodes
    for n in range(N):
        weight = problem.alpha * tau / tree.num_nodes(n)
        for k in range(tree.num_nodes(n)):
            j = offsets[n] + k * d
            H[j : j + d, j : j + d] += weight * mass

    time_weights = np.full(N + 1, tau)
    time_weights[N] = problem.beta
    zero_u = np.zeros((N, d))

    for s in range(tree.n_scenarios):
        dW = tree.increments(s)
        base = solve_forward(problem, zero_u, dW).x1          # (N+1, d)
        cols = np.zeros((N + 1, d, n_unknowns))
        for n in range(N):
            k = tree.node_of(s, n)
            j0 = offsets[n] + k * d
            for c in range(d):
                impulse = np.zeros((N, d))
                impulse[n, c] = 1.0
                cols[:, :, j0 + c] = solve_auxiliary(problem, impulse, dW).x1
        misfit = base - problem.target_h                       # (N+1, d)
        for n in range(N + 1):
            if time_weights[n] == 0.0:
                continue
            A_n = cols[n]                                      # (d, n_unknowns)
            BA = mass @ A_n
            H += (p * time_weights[n]) * (A_n.T @ BA)
            g += (p * time_weights[n]) * (BA.T @ misfit[n])

    u_star = np.linalg.solve(H, -g)
    residual = float(np.abs(H @ u_star + g).max())
    scale = 1.0 + float(np.abs(g).max())

    node_controls = []
    for n in range(N):
        block = u_star[offsets[n] : offsets[n] + tree.num_nodes(n) * d]
        node_controls.append(block.reshape(tree.num_nodes(n), d))

    solution = TreeSolution(tree, node_controls, 0.0, H, g, residual / scale)
    runs = []
    for s in range(tree.n_scenarios):
        u_s = solution.control_for_scenario(s)
        runs.append((solve_forward(problem, u_s, tree.increments(s)), u_s))
    solution.expected_cost = monte_carlo_cost(problem, runs)
    return solution


@dataclass
class ComparisonReport:
    max_discrepancy: float          # coefficient max-norm over all nodes
    max_discrepancy_l2: float       # worst node in the L2 norm
    adaptedness_spread: float       # worst disagreement among scenarios sharing a history
    first_order_residual: float
    expected_costs: np.ndarray      # per-iteration exact expected cost of the descent


def compare_with_descent(
    problem: DiscreteProblem, tree: ScenarioTree, config: GradientConfig
) -> ComparisonReport:
    """Run the descent on every scenario and measure it against the exact optimum.

    Scenarios sharing a history up to t_n must produce identical controls at
    t_n; any spread there is an adaptedness bug, reported before averaging.
    """
    exact = solve_exact(problem, tree)
    N, d = problem.grid.N, problem.space.d_h

    per_scenario = np.zeros((tree.n_scenarios, N, d))
    cost_histories = []
    for s in range(tree.n_scenarios):
        result = run_gradient_descent(problem, tree.increments(s), config)
        per_scenario[s] = result.control
        cost_histories.append(result.report.costs)

    spread = 0.0
    max_disc = 0.0
    max_disc_l2 = 0.0
    for n in range(N):
        groups = {}
        for s in range(tree.n_scenarios):
            groups.setdefault(tree.node_of(s, n), []).append(per_scenario[s, n])
        for node, controls in groups.items():
            stack = np.stack(controls)
            spread = max(spread, float(np.abs(stack - stack[0]).max()))
            diff = stack.mean(axis=0) - exact.node_controls[n][node]
            max_disc = max(max_disc, float(np.abs(diff).max()))
            max_disc_l2 = max(max_disc_l2, problem.space.l2_norm(diff))

    n_iters = min(len(h) for h in cost_histories)
    expected_costs = np.array(
        [np.mean([h[i] for h in cost_histories]) for i in range(n_iters)]
    )
    return ComparisonReport(
        max_disc, max_disc_l2, spread, exact.first_order_residual, expected_costs
    )
