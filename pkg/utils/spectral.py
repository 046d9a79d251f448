"""Principal eigenpairs of the scalar Neumann operators and the regime classifier.

The generalized problem solved everywhere is

    (-sigma * A_c + diag(q)) phi = lambda * diag(weight) phi

where A_c is the conductive stencil (the plain Laplacian when c = 1). The
smallest eigenvalue is found by shifted inverse iteration. Each iterate is
positive, so the Collatz-Wielandt ratio min(K phi / M phi) is a lower bound
on lambda_1 and the Rayleigh quotient an upper bound. The shift is kept
strictly below the lower bound, so every inner system is SPD.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import cg

from .coefficients import (CoefficientFields, ModelParams, aphid_potential, assemble_fields,
                           infected_aphid_potential)
from .errors import ConfigError, SolverError
from .geometry import Grid, RefugeMask, refuge_frequency_mask
from .operators import StencilOperator

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("min-one", "max-one", "L2-one")
DEFAULT_MARGINAL_TOL = 1e-8
ORACLE_MAX_CELLS = 400


@dataclass(frozen=True)
class SpectralResult:
    """Principal eigenvalue with its positive, normalized eigenfunction"""

    lambda1: float
    eigenfunction: np.ndarray
    residual: float
    normalization: str
    iterations: int = 0
    inner_failures: int = 0

    @property
    def phi_min(self) -> float:
        return float(self.eigenfunction.min())

    @property
    def phi_max(self) -> float:
        return float(self.eigenfunction.max())


class Regime(Enum):
    EXTINCTION = "extinction"
    PERSISTENCE = "persistence"
    MARGINAL = "marginal"


def _normalize(phi: np.ndarray, normalization: str, cell_area: float) -> np.ndarray:
    if normalization == "min-one":
        return phi / phi.min()
    if normalization == "max-one":
        return phi / phi.max()
    if normalization == "L2-one":
        return phi / math.sqrt(float(np.sum(phi ** 2)) * cell_area)
    raise ConfigError(f"Unknown normalization {normalization!r}, expected one of {NORMALIZATIONS}")


def _pencil(sigma: float, q: np.ndarray, grid: Grid, weight: Optional[np.ndarray],
            conductivity: Optional[np.ndarray], face_average: str):
    q = grid.check_field(q, "potential")
    if not np.all(np.isfinite(q)):
        raise ConfigError("Potential contains non-finite values")
    if weight is None:
        m = np.ones(grid.size)
    else:
        m = grid.check_field(weight, "weight").ravel()
        if np.any(m <= 0):
            raise ConfigError(f"Eigenproblem weight must be positive, min is {m.min()}")
    if conductivity is None:
        op = StencilOperator.laplacian(grid, sigma)
    else:
        op = StencilOperator.conductive(grid, conductivity, sigma, face_average)
    K = (sp.diags(q.ravel()) - op.matrix()).tocsr()
    return K, m


def principal_eigenpair(sigma: float, q: np.ndarray, grid: Grid,
                        weight: Optional[np.ndarray] = None,
                        normalization: str = "min-one",
                        conductivity: Optional[np.ndarray] = None,
                        face_average: str = "arithmetic",
                        tol: float = 1e-10,
                        max_iter: int = 500) -> SpectralResult:
    """
    Smallest eigenpair of (-sigma A + diag(q)) phi = lambda diag(weight) phi

    Args:
        sigma: diffusivity
        q: potential field
        grid: grid of q
        weight: positive mass weights (default 1)
        normalization: "min-one", "max-one" or "L2-one"
        conductivity: optional positive face conductivity field (default 1)
        tol: bound on |K phi - lambda M phi| / |M phi|
        max_iter: outer iteration cap

    Returns:
        SpectralResult with a strictly positive eigenfunction
    """
    if normalization not in NORMALIZATIONS:
        raise ConfigError(f"Unknown normalization {normalization!r}, expected one of {NORMALIZATIONS}")
    K, m = _pencil(sigma, q, grid, weight, conductivity, face_average)
    n = grid.size
    scale = float(np.abs(K).sum(axis=1).max() / m.min())
    scale = max(scale, 1e-300)
    gap_floor = 1e-6 * scale

    phi = np.ones(n) / math.sqrt(n)
    lam_prev = math.inf
    inner_failures = 0
    for iteration in range(1, max_iter + 1):
        Kphi = K @ phi
        Mphi = m * phi
        lam = float(phi @ Kphi / (phi @ Mphi))
        lower = float(np.min(Kphi / Mphi))
        residual = float(np.linalg.norm(Kphi - lam * Mphi) / np.linalg.norm(Mphi))
        settled = (abs(lam - lam_prev) < 1e-12 * max(1.0, abs(lam))
                   or lam - lower <= 1e-12 * max(1.0, abs(lam)))
        logger.debug("inverse iteration %d: lambda=%.15g bracket=[%.15g, %.15g] residual=%.3e",
                     iteration, lam, lower, lam, residual)
        if residual <= tol and settled:
            break
        shift = lower - max(lam - lower, gap_floor)
        shifted = (K - sp.diags(shift * m)).tocsr()
        jacobi = sp.diags(1.0 / shifted.diagonal())
        y, info = cg(shifted, Mphi, x0=phi / (lam - shift), rtol=1e-12, atol=0.0,
                     maxiter=5 * n, M=jacobi)
        if info < 0:
            raise SolverError(f"Inner solve rejected its input (info={info}) at iteration {iteration}")
        if info > 0:
            inner_failures += 1
            logger.warning("inner solve stopped at its iteration cap at outer iteration %d", iteration)
        if not np.all(np.isfinite(y)):
            raise SolverError(f"Inner solve produced non-finite values at iteration {iteration}")
        if y.min() < -1e-8 * y.max():
            raise SolverError(
                f"Eigenfunction iterate changed sign at iteration {iteration} "
                f"(min {y.min():.3e}, max {y.max():.3e})")
        y = np.abs(y)
        phi = y / np.linalg.norm(y)
        lam_prev = lam
    else:
        raise SolverError(
            f"Inverse iteration did not converge in {max_iter} iterations "
            f"(lambda={lam:.12g}, residual={residual:.3e})")

    if phi.min() <= 0:
        raise SolverError(f"Principal eigenfunction is not strictly positive (min {phi.min():.3e})")
    eigenfunction = _normalize(phi.reshape(grid.shape), normalization, grid.cell_area)
    return SpectralResult(lam, eigenfunction, residual, normalization, iteration, inner_failures)


def dense_principal_eigenvalue(sigma: float, q: np.ndarray, grid: Grid,
                               weight: Optional[np.ndarray] = None,
                               conductivity: Optional[np.ndarray] = None,
                               face_average: str = "arithmetic") -> float:
    """Reference smallest eigenvalue from a dense symmetric-definite eigensolve"""
    if grid.size > ORACLE_MAX_CELLS:
        raise ConfigError(
            f"Dense oracle is limited to {ORACLE_MAX_CELLS} cells, grid has {grid.size}")
    K, m = _pencil(sigma, q, grid, weight, conductivity, face_average)
    values = eigh(K.toarray(), np.diag(m), eigvals_only=True, subset_by_index=[0, 0])
    return float(values[0])


def lambda1_Vs(fields: CoefficientFields, params: ModelParams, **kwargs) -> SpectralResult:
    """Principal eigenpair of -sigma_V Lap - r_V + h r_P / s_P, min-one normalized"""
    return principal_eigenpair(params.sigma_V, aphid_potential(fields, params), fields.grid,
                               normalization="min-one", **kwargs)


def lambda1_Vi(fields: CoefficientFields, params: ModelParams, **kwargs) -> SpectralResult:
    """Principal eigenpair of -sigma_V Lap + alpha + d_V + h r_P / s_P, max-one normalized"""
    return principal_eigenpair(params.sigma_V, infected_aphid_potential(fields, params),
                               fields.grid, normalization="max-one", **kwargs)


def lambda1_P(fields: CoefficientFields, params: ModelParams,
              face_average: str = "arithmetic", normalization: str = "max-one",
              **kwargs) -> SpectralResult:
    """
    Principal eigenpair of the linearized predator operator at r_P / s_P

    Solves -sigma_P div(r_P grad phi) + r_P^2 phi = lambda r_P phi and returns
    u = r_P phi as the eigenfunction of -sigma_P div(r_P grad(u / r_P)) + r_P u.
    """
    r_P = np.asarray(fields.r_P)
    result = principal_eigenpair(params.sigma_P, r_P ** 2, fields.grid, weight=r_P,
                                 normalization="L2-one", conductivity=r_P,
                                 face_average=face_average, **kwargs)
    if result.lambda1 <= 0:
        raise SolverError(f"Predator eigenvalue must be positive, got {result.lambda1}")
    u = _normalize(r_P * result.eigenfunction, normalization, fields.grid.cell_area)
    return SpectralResult(result.lambda1, u, result.residual, normalization, result.iterations,
                          result.inner_failures)


def classify_eigenvalue(lambda1: float, tol: float = DEFAULT_MARGINAL_TOL) -> Regime:
    if lambda1 > tol:
        return Regime.EXTINCTION
    if lambda1 < -tol:
        return Regime.PERSISTENCE
    return Regime.MARGINAL


def regime_classify(fields: CoefficientFields, params: ModelParams,
                    tol: float = DEFAULT_MARGINAL_TOL) -> Regime:
    """Extinction if lambda_1(L_Vs) > tol, persistence if < -tol, marginal otherwise"""
    result = lambda1_Vs(fields, params)
    regime = classify_eigenvalue(result.lambda1, tol)
    logger.info("lambda_1(L_Vs) = %.10g -> %s", result.lambda1, regime.value)
    return regime


def homogenized_limit(params: ModelParams, area_fraction: float) -> float:
    """Infinite-frequency limit of lambda_1(L_Vs) at a given refuge area fraction"""
    if not (0.0 <= area_fraction <= 1.0):
        raise ConfigError(f"Area fraction must lie in [0, 1], got {area_fraction}")
    return params.field_potential + area_fraction * params.refuge_potential


def refuge_excess_eigenvalue(params: ModelParams, mask: RefugeMask) -> SpectralResult:
    """
    Principal eigenpair of -sigma_V Lap + mu R, mu = -rV_refuge + h rP_refuge / s_P

    lambda_1(L_Vs) on the same mask equals params.field_potential plus this value.
    """
    q = params.refuge_potential * np.asarray(mask.values)
    return principal_eigenpair(params.sigma_V, q, mask.grid, normalization="min-one")


def frequency_lambda1(params: ModelParams, grid: Grid, area: float, n: int) -> float:
    """lambda_1(L_Vs) on the refuge A_n"""
    fields = assemble_fields(params, refuge_frequency_mask(grid, n, area))
    return lambda1_Vs(fields, params).lambda1


def frequency_curve(params: ModelParams, grid: Grid, area: float,
                    n_list: Iterable[int]) -> pd.DataFrame:
    """
    lambda_1(L_Vs) for each refuge frequency

    Returns:
        DataFrame with columns n, lambda1 in ascending n
    """
    n_values = sorted(int(n) for n in n_list)
    if not n_values:
        raise ConfigError("Frequency list is empty")
    # build every mask first so an unresolvable n fails before any solve
    for n in n_values:
        refuge_frequency_mask(grid, n, area)
    rows = []
    for n in n_values:
        lam = frequency_lambda1(params, grid, area, n)
        logger.info("frequency n=%d: lambda_1 = %.10g", n, lam)
        rows.append({"n": n, "lambda1": lam})
    return pd.DataFrame(rows, columns=["n", "lambda1"])
