"""Reproducible Wiener increments on a uniform time grid.

A noise path is a plain array of shape (N, m_w): row n holds the components
of W(t_{n+1}) - W(t_n).  Generation is counter-style: the stream for a given
(seed, sample_index) pair is independent of every other pair, so Monte Carlo
batches parallelize without shared RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_n = n*T/N, n = 0..N."""

    T: float
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"need at least one time step, got N={self.N}")
        if self.T <= 0:
            raise ValueError(f"horizon must be positive, got T={self.T}")
        if self.tau >= 1.0:
            raise ValueError(
                f"step size tau={self.tau} must be < 1 (standing assumption of the scheme)"
            )

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)


@dataclass(frozen=True)
class RngConfig:
    seed: int
    sample_index: int = 0


def sample_gaussian_path(rng: RngConfig, grid: TimeGrid, m_w: int) -> np.ndarray:
    """I.i.d. normal(0, tau) increments, a pure function of (seed, sample_index)."""
    if m_w < 1:
        raise ValueError(f"Wiener dimension must be >= 1, got {m_w}")
    gen = np.random.default_rng((rng.seed, rng.sample_index))
    return gen.normal(0.0, np.sqrt(grid.tau), size=(grid.N, m_w))


def sample_two_point_path(enumeration_index: int, grid: TimeGrid, m_w: int) -> np.ndarray:
    """Increment path with entries +-sqrt(tau) encoded by the index bits.

    Bit p = n*m_w + i (least significant first) selects the sign of component
    i at step n: set -> +sqrt(tau), clear -> -sqrt(tau).  Index 0 is the
    all-minus path.  All 2^(N*m_w) paths are enumerable and equiprobable, and
    they match the Gaussian increments in mean and variance.
    """
    n_bits = grid.N * m_w
    if not 0 <= enumeration_index < (1 << n_bits):
        raise ValueError(
            f"enumeration_index {enumeration_index} out of range for {n_bits} sign bits"
        )
    bits = (enumeration_index >> np.arange(n_bits)) & 1
    signs = 2.0 * bits - 1.0
    return np.sqrt(grid.tau) * signs.reshape(grid.N, m_w)


def truncate_noise(path: np.ndarray, m: int) -> np.ndarray:
    """Zero every increment beyond step m: keep increments[n] only for n+1 <= m.

    This realizes conditioning of the forcing on the information available at
    t_m: increments already observed are kept, future ones average to zero.
    """
    N = path.shape[0]
    if not 0 <= m <= N:
        raise ValueError(f"truncation index m={m} outside 0..{N}")
    out = np.zeros_like(path)
    out[:m] = path[:m]
    return out


def coarsen_path(path: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of `factor` increments.

    The coarse path is the restriction of the same Brownian path to the
    coarser grid, which is what a refinement study needs to share samples
    across time-step levels.
    """
    N, m_w = path.shape
    if factor < 1 or N % factor != 0:
        raise ValueError(f"coarsening factor {factor} does not divide N={N}")
    return path.reshape(N // factor, factor, m_w).sum(axis=1)
