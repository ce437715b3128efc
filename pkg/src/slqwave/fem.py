"""P1 finite elements on a uniform 1D interval with homogeneous Dirichlet data.

Only interior nodes carry degrees of freedom; boundary values are
structurally zero.  Mass and stiffness matrices are symmetric positive
definite tridiagonal and are stored in LAPACK upper-banded form so that a
single Cholesky factorization can be reused across all solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

# 5-point Gauss-Legendre rule on [-1, 1]; exact up to degree 9, which
# resolves the polynomial-times-trigonometric load data used here to well
# below the discretization error.
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(5)


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh of (0, length) with m_cells cells and interior nodes only."""

    length: float
    m_cells: int

    def __post_init__(self):
        if self.m_cells < 2:
            raise ValueError(
                f"m_cells={self.m_cells}: need at least 2 cells for a nonempty interior space"
            )
        if self.length <= 0:
            raise ValueError(f"domain length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.m_cells

    @property
    def d_h(self) -> int:
        return self.m_cells - 1

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates x_j = j*h, j = 1..d_h."""
        return self.h * np.arange(1, self.m_cells)

    @property
    def nodes_with_boundary(self) -> np.ndarray:
        return self.h * np.arange(0, self.m_cells + 1)


@dataclass(frozen=True)
class FemMatrices:
    """Tridiagonal mass and stiffness matrices in (diagonal, off-diagonal) form."""

    mass_diag: np.ndarray
    mass_off: np.ndarray
    stiff_diag: np.ndarray
    stiff_off: np.ndarray


def assemble(mesh: Mesh1D) -> FemMatrices:
    """Assemble P1 mass and stiffness matrices on the interior nodes.

    Exact for uniform meshes: interior mass row is (h/6)*[1, 4, 1],
    stiffness row is (1/h)*[-1, 2, -1].
    """
    d, h = mesh.d_h, mesh.h
    return FemMatrices(
        mass_diag=np.full(d, 4.0 * h / 6.0),
        mass_off=np.full(d - 1, h / 6.0),
        stiff_diag=np.full(d, 2.0 / h),
        stiff_off=np.full(d - 1, -1.0 / h),
    )


def _banded_upper(diag, off):
    """Pack a symmetric tridiagonal matrix into LAPACK upper-banded storage."""
    ab = np.zeros((2, diag.size))
    ab[0, 1:] = off
    ab[1, :] = diag
    return ab


def _tridiag_matvec(diag, off, v):
    """y = T v for symmetric tridiagonal T; v may be (d,) or (d, k)."""
    if v.ndim == 1:
        y = diag * v
        y[:-1] += off * v[1:]
        y[1:] += off * v[:-1]
    else:
        y = diag[:, None] * v
        y[:-1] += off[:, None] * v[1:]
        y[1:] += off[:, None] * v[:-1]
    return y


class FemSpace:
    """P1 space on a uniform mesh: matrices, factorizations, projections, norms.

    Immutable after construction; safe to share read-only across workers.
    """

    def __init__(self, mesh: Mesh1D):
        self.mesh = mesh
        self.matrices = assemble(mesh)
        m = self.matrices
        # cholesky_banded doubles as the SPD assertion for both matrices
        self._mass_cho = cholesky_banded(_banded_upper(m.mass_diag, m.mass_off))
        self._stiff_cho = cholesky_banded(_banded_upper(m.stiff_diag, m.stiff_off))

    @property
    def d_h(self) -> int:
        return self.mesh.d_h

    # -- matrix actions -------------------------------------------------

    def mass_matvec(self, v):
        return _tridiag_matvec(self.matrices.mass_diag, self.matrices.mass_off, v)

    def stiffness_matvec(self, v):
        return _tridiag_matvec(self.matrices.stiff_diag, self.matrices.stiff_off, v)

    def solve_mass(self, rhs):
        return cho_solve_banded((self._mass_cho, False), rhs)

    def solve_stiffness(self, rhs):
        return cho_solve_banded((self._stiff_cho, False), rhs)

    def dense_mass(self) -> np.ndarray:
        m = self.matrices
        return np.diag(m.mass_diag) + np.diag(m.mass_off, 1) + np.diag(m.mass_off, -1)

    def dense_stiffness(self) -> np.ndarray:
        m = self.matrices
        return np.diag(m.stiff_diag) + np.diag(m.stiff_off, 1) + np.diag(m.stiff_off, -1)

    # -- projections ----------------------------------------------------

    def load_vector(self, f) -> np.ndarray:
        """Load vector load_j = int f(x) phi_j(x) dx by per-cell Gauss quadrature."""
        mesh = self.mesh
        h = mesh.h
        cells_left = h * np.arange(mesh.m_cells)
        # quadrature points per cell, shape (m_cells, 5)
        x = cells_left[:, None] + 0.5 * h * (_GAUSS_NODES[None, :] + 1.0)
        fx = np.asarray(f(x), dtype=float)
        w = 0.5 * h * _GAUSS_WEIGHTS
        # local coordinate in [0, 1] within each cell
        s = 0.5 * (_GAUSS_NODES + 1.0)
        # phi at left node of a cell decays 1->0, at right node grows 0->1
        contrib_right = fx * (w * s)          # weight on node at cell's right end
        contrib_left = fx * (w * (1.0 - s))   # weight on node at cell's left end
        load = np.zeros(mesh.d_h)
        load += contrib_right[:-1].sum(axis=1)  # cells 0..M-2 feed their right node
        load += contrib_left[1:].sum(axis=1)    # cells 1..M-1 feed their left node
        return load

    def l2_project(self, f) -> np.ndarray:
        """L2 projection: coefficients c solving mass*c = load(f)."""
        return self.solve_mass(self.load_vector(f))

    def ritz_project(self, f, boundary_tol: float = 1e-9) -> np.ndarray:
        """Energy (Ritz) projection of an H^1_0 function.

        The load term int f' phi_j' dx evaluates exactly from nodal values of
        f, since phi_j' is piecewise constant:
        (2 f(x_j) - f(x_{j-1}) - f(x_{j+1})) / h.  Rejects f that does not
        vanish at the boundary.
        """
        xs = self.mesh.nodes_with_boundary
        fx = np.asarray(f(xs), dtype=float)
        scale = 1.0 + np.abs(fx).max()
        if abs(fx[0]) > boundary_tol * scale or abs(fx[-1]) > boundary_tol * scale:
            raise ValueError(
                "ritz_project requires f(0) = f(L) = 0; "
                f"got f(0)={fx[0]:.3e}, f(L)={fx[-1]:.3e}"
            )
        load = (2.0 * fx[1:-1] - fx[:-2] - fx[2:]) / self.mesh.h
        return self.solve_stiffness(load)

    def discrete_laplacian(self, v) -> np.ndarray:
        """w solving mass*w = -stiffness*v."""
        return self.solve_mass(-self.stiffness_matvec(v))

    # -- norms ------------------------------------------------------------

    def l2_norm(self, v) -> float:
        return float(np.sqrt(np.dot(v, self.mass_matvec(v))))

    def h1_seminorm(self, v) -> float:
        return float(np.sqrt(np.dot(v, self.stiffness_matvec(v))))

    def norms(self, v):
        return self.l2_norm(v), self.h1_seminorm(v)

    # -- evaluation helpers ----------------------------------------------

    def evaluate(self, coeffs, x):
        """Point values of the P1 function with given interior coefficients."""
        padded = np.concatenate(([0.0], np.asarray(coeffs, dtype=float), [0.0]))
        return np.interp(x, self.mesh.nodes_with_boundary, padded)

    def with_boundary(self, coeffs):
        """Interior coefficients extended by the zero boundary values."""
        arr = np.asarray(coeffs, dtype=float)
        out = np.zeros(arr.shape[:-1] + (self.d_h + 2,))
        out[..., 1:-1] = arr
        return out
