#!/usr/bin/env python3
"""
Test the Neumann diffusion stencils and the implicit diffusion solves
"""

import os
import sys

import numpy as np
from scipy.linalg import solve

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from utils.coefficients import assemble_fields
from utils.config import load_preset
from utils.errors import ConfigError
from utils.geometry import build_grid, refuge_frequency_mask
from utils.operators import (ImplicitDiffusionSystem, StencilOperator, face_weights,
                             ideal_free_apply, implicit_diffusion_solve, laplacian_apply)


def _piecewise_rP():
    params = load_preset("extinction")
    grid = build_grid(20, 20, 300.0, 300.0)
    fields = assemble_fields(params, refuge_frequency_mask(grid, 2, 3600.0))
    return params, grid, np.asarray(fields.r_P)


def test_diffusion_conserves_mass():
    """Both operators sum to zero over the cells for arbitrary fields"""
    params, grid, r_P = _piecewise_rP()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        f = rng.uniform(0.0, 10.0, grid.shape)
        for values in (laplacian_apply(f, params.sigma_V, grid),
                       ideal_free_apply(f, r_P, params.sigma_P, grid),
                       ideal_free_apply(f, r_P, params.sigma_P, grid, average="harmonic")):
            worst = max(worst, abs(values.sum()) / max(np.abs(values).sum(), 1e-300))
    print(f"   worst relative cell sum {worst:.3e}")
    assert worst < 1e-12


def test_stencil_is_symmetric():
    _, grid, r_P = _piecewise_rP()
    op = StencilOperator.conductive(grid, r_P, 100.0)
    rng = np.random.default_rng(11)
    for _ in range(10):
        x = rng.standard_normal(grid.shape)
        y = rng.standard_normal(grid.shape)
        left, right = np.sum(x * op.apply(y)), np.sum(y * op.apply(x))
        assert abs(left - right) <= 1e-12 * max(abs(left), 1.0)
    assert abs(op.matrix() - op.matrix().T).max() == 0.0


def test_matrix_matches_apply():
    _, grid, r_P = _piecewise_rP()
    op = StencilOperator.conductive(grid, r_P, 100.0, average="harmonic")
    f = np.random.default_rng(3).uniform(size=grid.shape)
    assert np.allclose(op.matrix() @ f.ravel(), op.apply(f).ravel(), rtol=1e-12, atol=1e-14)


def test_equilibria_are_stationary():
    """Constants for the Laplacian, multiples of r_P for ideal-free dispersal"""
    params, grid, r_P = _piecewise_rP()
    assert np.abs(laplacian_apply(grid.full(3.0), params.sigma_V, grid)).max() < 1e-12
    residual = ideal_free_apply(r_P / params.s_P, r_P, params.sigma_P, grid)
    print(f"   ideal-free residual at r_P/s_P: {np.abs(residual).max():.3e}")
    assert np.abs(residual).max() < 1e-10


def test_stencil_is_negative_semidefinite():
    """f . A f <= 0, and zero only for constant f"""
    params, grid, r_P = _piecewise_rP()
    rng = np.random.default_rng(17)
    for op in (StencilOperator.laplacian(grid, params.sigma_V),
               StencilOperator.conductive(grid, r_P, params.sigma_P)):
        for _ in range(10):
            f = rng.standard_normal(grid.shape)
            assert np.sum(f * op.apply(f)) < 0.0
        constant = grid.full(2.5)
        assert abs(np.sum(constant * op.apply(constant))) <= 1e-12


def test_cosine_mode_converges_second_order():
    """cos(pi x / lx) is mapped to about -sigma (pi / lx)^2 cos(pi x / lx)"""
    sigma, lx = 2.0, 10.0
    errors = []
    for nx in (10, 20, 40):
        grid = build_grid(nx, 4, lx, 4.0)
        x, _ = grid.cell_centers()
        f = np.cos(np.pi * x / lx)
        exact = -sigma * (np.pi / lx) ** 2 * f
        errors.append(np.abs(laplacian_apply(f, sigma, grid) - exact).max())
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    print(f"   sup errors {errors}, ratios {ratios}")
    assert all(3.5 <= ratio <= 4.5 for ratio in ratios)


def test_single_spike_stencil():
    sigma = 3.0
    grid = build_grid(5, 4, 10.0, 12.0)
    dx, dy = grid.dx, grid.dy
    spike = grid.zeros()
    spike[2, 1] = 1.0
    expected = grid.zeros()
    expected[2, 1] = -2.0 * sigma / dx ** 2 - 2.0 * sigma / dy ** 2
    expected[1, 1] = expected[3, 1] = sigma / dx ** 2
    expected[2, 0] = expected[2, 2] = sigma / dy ** 2
    assert np.allclose(laplacian_apply(spike, sigma, grid), expected, rtol=1e-14, atol=1e-15)


def test_ideal_free_with_constant_rate_is_laplacian():
    grid = build_grid(12, 9, 120.0, 90.0)
    P = np.random.default_rng(21).uniform(0.0, 5.0, grid.shape)
    brownian = laplacian_apply(P, 100.0, grid)
    ideal_free = ideal_free_apply(P, grid.full(0.7), 100.0, grid)
    assert np.allclose(ideal_free, brownian, rtol=1e-12, atol=1e-12 * np.abs(brownian).max())


def test_implicit_solve_matches_dense_direct_solve():
    grid = build_grid(8, 8, 8.0, 8.0)
    rng = np.random.default_rng(8)
    op = StencilOperator.conductive(grid, rng.uniform(0.5, 2.0, grid.shape), 1.0)
    rhs = rng.uniform(-1.0, 1.0, grid.shape)
    u = implicit_diffusion_solve(rhs, op, dt=0.3)
    dense = solve(np.eye(grid.size) - 0.3 * op.matrix().toarray(), rhs.ravel()).reshape(grid.shape)
    assert np.linalg.norm(u - dense) <= 1e-9 * np.linalg.norm(dense)


def test_implicit_solve_small_step_limit():
    """|u - rhs| <= dt |A rhs| as dt goes to zero"""
    params, grid, _ = _piecewise_rP()
    op = StencilOperator.laplacian(grid, params.sigma_V)
    rhs = np.random.default_rng(13).uniform(0.0, 1.0, grid.shape)
    slope = np.linalg.norm(op.apply(rhs))
    gaps = []
    for dt in (1e-3, 1e-4):
        u = implicit_diffusion_solve(rhs, op, dt=dt)
        gaps.append(np.linalg.norm(u - rhs))
        assert gaps[-1] <= dt * slope + 1e-9 * np.linalg.norm(rhs)
    print(f"   |u - rhs| at dt=1e-3, 1e-4: {gaps}")
    assert 9.0 <= gaps[0] / gaps[1] <= 11.0


def test_laplacian_of_quadratic():
    """Interior cells reproduce the exact second derivative of x^2"""
    grid = build_grid(10, 6, 10.0, 6.0)
    x, _ = grid.cell_centers()
    values = laplacian_apply(x ** 2, 1.0, grid)
    assert np.allclose(values[1:-1, :], 2.0)


def test_face_weights():
    grid = build_grid(2, 2, 2.0, 2.0)
    c = np.array([[1.0, 3.0], [3.0, 3.0]])
    wx, wy = face_weights(c, grid, "arithmetic")
    assert wx.shape == (1, 2) and wy.shape == (2, 1)
    assert wx[0, 0] == 2.0 and wy[0, 0] == 2.0
    wx, wy = face_weights(c, grid, "harmonic")
    assert abs(wx[0, 0] - 1.5) < 1e-15 and wx[0, 1] == 3.0
    for bad_c, average in [(-c, "arithmetic"), (c, "geometric")]:
        try:
            face_weights(bad_c, grid, average)
        except ConfigError:
            pass
        else:
            raise AssertionError(f"face_weights with {average} must fail")


def test_implicit_solve_residual_and_mass():
    params, grid, r_P = _piecewise_rP()
    rng = np.random.default_rng(5)
    rhs = rng.uniform(0.0, 1.0, grid.shape)

    op = StencilOperator.laplacian(grid, params.sigma_V)
    u = implicit_diffusion_solve(rhs, op, dt=0.5)
    residual = np.linalg.norm(u - 0.5 * op.apply(u) - rhs) / np.linalg.norm(rhs)
    assert residual < 1e-9
    assert abs(u.sum() - rhs.sum()) < 1e-9 * rhs.sum()
    assert u.min() > -1e-12

    pop = StencilOperator.conductive(grid, r_P, params.sigma_P)
    system = ImplicitDiffusionSystem(pop, 0.5, mass=r_P)
    p_tilde = system.solve(rhs)
    assert abs((r_P * p_tilde).sum() - rhs.sum()) < 1e-9 * rhs.sum()
    print(f"   relative residual {residual:.3e}")


def test_implicit_solve_warm_start():
    """An exact initial guess is returned without iterating"""
    params, grid, r_P = _piecewise_rP()
    pop = StencilOperator.conductive(grid, r_P, params.sigma_P)
    system = ImplicitDiffusionSystem(pop, 0.0228, mass=r_P)
    p_star = r_P / params.s_P
    p_tilde = system.solve(p_star, x0=p_star / r_P)
    assert np.abs(r_P * p_tilde - p_star).max() < 1e-12


def test_implicit_solve_validation():
    grid = build_grid(4, 4, 4.0, 4.0)
    op = StencilOperator.laplacian(grid, 1.0)
    for kwargs in [{"dt": 0.0}, {"dt": 1.0, "preconditioner": "ilu"},
                   {"dt": 1.0, "mass": np.zeros((4, 4))}]:
        try:
            ImplicitDiffusionSystem(op, **kwargs)
        except ConfigError:
            pass
        else:
            raise AssertionError(f"ImplicitDiffusionSystem({kwargs}) must fail")


def test_explicit_rate():
    grid = build_grid(10, 10, 10.0, 10.0)
    op = StencilOperator.laplacian(grid, 2.0)
    # interior cells have four neighbours
    assert abs(op.max_explicit_rate() - 8.0) < 1e-12
    assert abs(op.max_explicit_rate(mass=grid.full(4.0)) - 2.0) < 1e-12


def main():
    from harness import run_test_functions

    return run_test_functions('operators', [
        test_diffusion_conserves_mass,
        test_stencil_is_symmetric,
        test_matrix_matches_apply,
        test_equilibria_are_stationary,
        test_stencil_is_negative_semidefinite,
        test_cosine_mode_converges_second_order,
        test_single_spike_stencil,
        test_ideal_free_with_constant_rate_is_laplacian,
        test_laplacian_of_quadratic,
        test_face_weights,
        test_implicit_solve_residual_and_mass,
        test_implicit_solve_matches_dense_direct_solve,
        test_implicit_solve_small_step_limit,
        test_implicit_solve_warm_start,
        test_implicit_solve_validation,
        test_explicit_rate,
    ])


if __name__ == "__main__":
    sys.exit(main())
