"""Finite-volume diffusion operators with no-flux boundaries and their implicit solves.

Every operator here has the conservative form

    A(f)_c = sigma * sum over faces of c of  w_face * (f_neighbor - f_c) / h^2

with one conductivity per interior face. Boundary faces carry no flux, which
is the mirror-ghost-cell treatment of homogeneous Neumann conditions.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import ConfigError, SolverError
from .geometry import Grid

logger = logging.getLogger(__name__)

FACE_AVERAGES = ("arithmetic", "harmonic")


def face_weights(conductivity: np.ndarray, grid: Grid,
                 average: str = "arithmetic") -> Tuple[np.ndarray, np.ndarray]:
    """
    Average a positive cell field onto interior faces

    Returns:
        (wx, wy) with shapes (nx-1, ny) and (nx, ny-1)
    """
    c = grid.check_field(conductivity, "conductivity")
    if np.any(c <= 0):
        raise ConfigError(f"Conductivity must be positive everywhere, min is {c.min()}")
    left, right = c[:-1, :], c[1:, :]
    low, high = c[:, :-1], c[:, 1:]
    if average == "arithmetic":
        return 0.5 * (left + right), 0.5 * (low + high)
    if average == "harmonic":
        return 2.0 * left * right / (left + right), 2.0 * low * high / (low + high)
    raise ConfigError(f"Unknown face average {average!r}, expected one of {FACE_AVERAGES}")


@dataclass
class StencilOperator:
    """Symmetric negative semi-definite 5-point diffusion operator"""

    sigma: float
    wx: np.ndarray
    wy: np.ndarray
    grid: Grid
    _matrix: Optional[sp.csr_matrix] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        nx, ny = self.grid.shape
        self.wx = np.asarray(self.wx, dtype=float)
        self.wy = np.asarray(self.wy, dtype=float)
        if self.wx.shape != (nx - 1, ny) or self.wy.shape != (nx, ny - 1):
            raise ConfigError(
                f"Face weights have shapes {self.wx.shape}, {self.wy.shape}; "
                f"expected {(nx - 1, ny)}, {(nx, ny - 1)}")
        if self.sigma < 0:
            raise ConfigError(f"Diffusivity must be nonnegative, got {self.sigma}")

    @classmethod
    def laplacian(cls, grid: Grid, sigma: float) -> "StencilOperator":
        """sigma times the Neumann Laplacian"""
        nx, ny = grid.shape
        return cls(sigma, np.ones((nx - 1, ny)), np.ones((nx, ny - 1)), grid)

    @classmethod
    def conductive(cls, grid: Grid, conductivity: np.ndarray, sigma: float,
                   average: str = "arithmetic") -> "StencilOperator":
        """sigma * div(c grad .) with c averaged onto faces"""
        wx, wy = face_weights(conductivity, grid, average)
        return cls(sigma, wx, wy, grid)

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = self.grid.check_field(f)
        out = np.zeros_like(f)
        flux_x = self.wx * (f[1:, :] - f[:-1, :]) / self.grid.dx ** 2
        out[:-1, :] += flux_x
        out[1:, :] -= flux_x
        flux_y = self.wy * (f[:, 1:] - f[:, :-1]) / self.grid.dy ** 2
        out[:, :-1] += flux_y
        out[:, 1:] -= flux_y
        return self.sigma * out

    __call__ = apply

    def matrix(self) -> sp.csr_matrix:
        """Sparse matrix of the operator on C-order flattened fields (cached)"""
        if self._matrix is None:
            nx, ny = self.grid.shape
            index = np.arange(nx * ny).reshape(nx, ny)
            cx = self.sigma * self.wx / self.grid.dx ** 2
            cy = self.sigma * self.wy / self.grid.dy ** 2
            a = np.concatenate([index[:-1, :].ravel(), index[:, :-1].ravel()])
            b = np.concatenate([index[1:, :].ravel(), index[:, 1:].ravel()])
            c = np.concatenate([cx.ravel(), cy.ravel()])
            diagonal = np.zeros(nx * ny)
            np.add.at(diagonal, a, -c)
            np.add.at(diagonal, b, -c)
            rows = np.concatenate([a, b, np.arange(nx * ny)])
            cols = np.concatenate([b, a, np.arange(nx * ny)])
            data = np.concatenate([c, c, diagonal])
            self._matrix = sp.csr_matrix((data, (rows, cols)), shape=(nx * ny, nx * ny))
        return self._matrix

    def diagonal(self) -> np.ndarray:
        return self.matrix().diagonal().reshape(self.grid.shape)

    def max_explicit_rate(self, mass: Optional[np.ndarray] = None) -> float:
        """Largest |diagonal| of mass^-1 A, the explicit Euler stability rate"""
        d = -self.diagonal()
        if mass is not None:
            d = d / mass
        return float(d.max())


def laplacian_apply(field_values: np.ndarray, sigma: float, grid: Grid) -> np.ndarray:
    """sigma times the 5-point Neumann Laplacian of a cell field"""
    return StencilOperator.laplacian(grid, sigma).apply(field_values)


def ideal_free_apply(P: np.ndarray, r_P: np.ndarray, sigma_P: float, grid: Grid,
                     average: str = "arithmetic") -> np.ndarray:
    """
    Ideal-free dispersal sigma_P div(r_P grad(P / r_P))

    P is divided by r_P cell-wise and the flux divergence is taken with r_P
    averaged onto faces.
    """
    r_P = grid.check_field(r_P, "r_P")
    if np.any(r_P <= 0):
        raise ConfigError(f"Ideal-free dispersal needs r_P > 0, min is {r_P.min()}")
    P = grid.check_field(P, "P")
    return StencilOperator.conductive(grid, r_P, sigma_P, average).apply(P / r_P)


class ImplicitDiffusionSystem:
    """
    Backward-Euler system (diag(mass) - dt * op) u = rhs, solved by conjugate gradients

    The matrix and the Jacobi preconditioner are assembled once and reused
    across solves with the same dt.
    """

    def __init__(self, op: StencilOperator, dt: float, mass: Optional[np.ndarray] = None,
                 tol: float = 1e-10, maxiter: Optional[int] = None, preconditioner: str = "jacobi"):
        if not dt > 0:
            raise ConfigError(f"Time step must be positive, got {dt}")
        if preconditioner not in ("jacobi", "none"):
            raise ConfigError(f"Unknown preconditioner {preconditioner!r}")
        self.grid = op.grid
        self.dt = dt
        self.tol = tol
        self.maxiter = maxiter or 10 * op.grid.size
        n = op.grid.size
        if mass is None:
            mass_diag = np.ones(n)
        else:
            mass_diag = op.grid.check_field(mass, "mass").ravel()
            if np.any(mass_diag <= 0):
                raise ConfigError("Mass weights must be positive")
        self.matrix = (sp.diags(mass_diag) - dt * op.matrix()).tocsr()
        self.preconditioner = (sp.diags(1.0 / self.matrix.diagonal())
                               if preconditioner == "jacobi" else None)

    def solve(self, rhs: np.ndarray, x0: Optional[np.ndarray] = None) -> np.ndarray:
        b = self.grid.check_field(rhs, "rhs").ravel()
        guess = b if x0 is None else self.grid.check_field(x0, "x0").ravel()
        u, info = cg(self.matrix, b, x0=guess, rtol=self.tol, atol=0.0,
                     maxiter=self.maxiter, M=self.preconditioner)
        if info != 0:
            residual = np.linalg.norm(b - self.matrix @ u) / max(np.linalg.norm(b), 1e-300)
            raise SolverError(
                f"Implicit diffusion solve did not converge in {self.maxiter} iterations "
                f"(relative residual {residual:.3e}, dt={self.dt})")
        return u.reshape(self.grid.shape)


def implicit_diffusion_solve(rhs: np.ndarray, op: StencilOperator, dt: float,
                             mass: Optional[np.ndarray] = None, tol: float = 1e-10,
                             maxiter: Optional[int] = None, preconditioner: str = "jacobi",
                             x0: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Solve (Identity - dt * op) u = rhs to a relative residual of tol

    Args:
        rhs: right-hand side field
        op: diffusion operator with zero row sums
        dt: time step, > 0
        mass: optional positive diagonal replacing the identity
        preconditioner: "jacobi" or "none"

    Returns:
        Solution field u
    """
    system = ImplicitDiffusionSystem(op, dt, mass=mass, tol=tol, maxiter=maxiter,
                                     preconditioner=preconditioner)
    return system.solve(rhs, x0=x0)
