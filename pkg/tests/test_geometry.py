#!/usr/bin/env python3
"""
Test grids, refuge masks and patch layouts
"""

import os
import sys
import tempfile
from pathlib import Path

import numpy as np

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from utils.config import DEFAULT_LAYOUT
from utils.errors import ConfigError
from utils.geometry import (PatchSpec, RefugeMask, build_grid, empty_mask, format_patch_spec,
                            frequency_square_patch, load_mask, load_patch_spec, mask_area,
                            parse_patch_spec, patches_field, refuge_frequency_mask,
                            refuge_uniform_mask)

FIELD = 300.0
REFUGE_AREA = FIELD * FIELD / 25.0


def test_grid_spacing():
    """Cell sizes, centers and quadrature of a 40 x 40 grid"""
    grid = build_grid(40, 40, FIELD, FIELD)
    assert grid.dx == 7.5 and grid.dy == 7.5
    assert grid.shape == (40, 40)
    x, y = grid.cell_centers()
    assert x.shape == (40, 40)
    assert x[0, 0] == 3.75 and x[39, 0] == 296.25
    assert y[0, 5] == 3.75 + 5 * 7.5
    assert abs(grid.integrate(grid.full(2.0)) - 2.0 * FIELD * FIELD) < 1e-6
    print(f"   dx = {grid.dx}, area = {grid.area}")


def test_grid_rejects_bad_sizes():
    for args in [(1, 10, FIELD, FIELD), (10, 10, -1.0, FIELD), (10, 10, FIELD, float("inf"))]:
        try:
            build_grid(*args)
        except ConfigError as e:
            print(f"   rejected {args}: {e}")
        else:
            raise AssertionError(f"build_grid{args} should fail")


def test_frequency_masks_keep_area():
    """A_n covers exactly |Omega|/25 whenever its edges align with cell edges"""
    grid = build_grid(80, 80, FIELD, FIELD)
    for n in (1, 2, 4, 8, 16):
        mask = refuge_frequency_mask(grid, n, REFUGE_AREA)
        assert mask.is_indicator
        area = mask_area(mask)
        print(f"   n={n:2d}: refuge area {area:.4f} m^2")
        assert abs(area - REFUGE_AREA) < 1e-9 * REFUGE_AREA

    coarse = build_grid(40, 40, FIELD, FIELD)
    for n in (1, 2, 4, 8):
        assert abs(mask_area(refuge_frequency_mask(coarse, n, REFUGE_AREA)) - REFUGE_AREA) < 1e-6


def test_frequency_mask_layout():
    """The n^2 squares sit at the lower corners of the period cells"""
    grid = build_grid(80, 80, FIELD, FIELD)
    values = refuge_frequency_mask(grid, 4, REFUGE_AREA).values
    # side 15 m = 4 cells, period 75 m = 20 cells
    expected_1d = np.zeros(80)
    for m in range(4):
        expected_1d[20 * m:20 * m + 4] = 1.0
    assert np.array_equal(values, np.outer(expected_1d, expected_1d))


def test_unresolvable_frequency_is_rejected():
    grid = build_grid(40, 40, FIELD, FIELD)
    try:
        refuge_frequency_mask(grid, 16, REFUGE_AREA)
    except ConfigError as e:
        assert "unresolvable" in str(e)
        print(f"   {e}")
    else:
        raise AssertionError("n=16 on a 7.5 m grid has sub-cell squares and must fail")


def test_frequency_mask_needs_square_domain():
    grid = build_grid(40, 20, FIELD, 150.0)
    try:
        refuge_frequency_mask(grid, 1, 100.0)
    except ConfigError:
        pass
    else:
        raise AssertionError("non-square domain must fail")


def test_mask_validation():
    grid = build_grid(4, 4, 4.0, 4.0)
    try:
        RefugeMask(grid.full(1.5), grid)
    except ConfigError:
        pass
    else:
        raise AssertionError("densities above 1 must fail")

    mask = refuge_uniform_mask(grid, 0.25)
    assert not mask.is_indicator
    assert abs(mask.area() - 4.0) < 1e-12
    assert mask_area(empty_mask(grid)) == 0.0
    try:
        mask.values[0, 0] = 1.0
    except ValueError:
        pass
    else:
        raise AssertionError("mask values must be read-only")


def test_load_mask_file():
    grid = build_grid(3, 2, 3.0, 2.0)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "mask.csv"
        path.write_text("0,1\n0.5,0\n1,1\n")
        mask = load_mask(path, grid)
        assert mask.values[0, 1] == 1.0 and mask.values[1, 0] == 0.5
        path.write_text("0,1,1\n0,0,0\n")
        try:
            load_mask(path, grid)
        except ConfigError:
            pass
        else:
            raise AssertionError("mask of the wrong shape must fail")


def test_patches_rasterize_by_cell_center():
    grid = build_grid(10, 10, 10.0, 10.0)
    spec = PatchSpec([(0.0, 0.0, 4.0, 4.0), (2.0, 2.0, 4.0, 4.0)], [1.0, 0.5])
    values = patches_field(grid, spec)
    # centers 0.5..3.5 fall in the first square, the overlap takes the second density
    assert values[0, 0] == 1.0
    assert values[3, 3] == 0.5
    assert values[5, 5] == 0.5
    assert values[6, 6] == 0.0
    assert np.count_nonzero(values) == 16 + 16 - 4


def test_patch_outside_domain_is_rejected():
    grid = build_grid(10, 10, 10.0, 10.0)
    try:
        patches_field(grid, PatchSpec([(8.0, 8.0, 4.0, 1.0)], [1.0]))
    except ConfigError:
        pass
    else:
        raise AssertionError("a rectangle leaving the domain must fail")


def test_shipped_layout():
    """Three separate patches on the 80 x 80 framework grid"""
    spec = load_patch_spec(DEFAULT_LAYOUT)
    assert len(spec) == 3
    grid = build_grid(80, 80, FIELD, FIELD)
    values = patches_field(grid, spec)
    assert np.count_nonzero(values) == 14 * 14 + 6 * 5 + 8 * 4

    refuge = refuge_frequency_mask(grid, 1, REFUGE_AREA).values
    first = patches_field(grid, PatchSpec([spec.rectangles[0]], [1.0]))
    assert np.all(refuge[first > 0] == 1.0)


def test_patch_text_format():
    text = "# comment\n\n1 2 3 4 0.5\n10 10 5 5 1\n"
    spec = parse_patch_spec(text)
    assert spec.rectangles == [(1.0, 2.0, 3.0, 4.0), (10.0, 10.0, 5.0, 5.0)]
    assert spec.densities == [0.5, 1.0]
    assert parse_patch_spec(format_patch_spec(spec)) == spec
    for bad in ("1 2 3 4\n", "1 2 x 4 1\n", "1 2 -3 4 1\n"):
        try:
            parse_patch_spec(bad)
        except ConfigError:
            pass
        else:
            raise AssertionError(f"{bad!r} must fail")


def test_frequency_square_patch_matches_refuge():
    grid = build_grid(40, 40, FIELD, FIELD)
    patch = patches_field(grid, frequency_square_patch(REFUGE_AREA))
    refuge = refuge_frequency_mask(grid, 1, REFUGE_AREA).values
    assert np.array_equal(patch, refuge)


def main():
    from harness import run_test_functions

    return run_test_functions('geometry', [
        test_grid_spacing,
        test_grid_rejects_bad_sizes,
        test_frequency_masks_keep_area,
        test_frequency_mask_layout,
        test_unresolvable_frequency_is_rejected,
        test_frequency_mask_needs_square_domain,
        test_mask_validation,
        test_load_mask_file,
        test_patches_rasterize_by_cell_center,
        test_patch_outside_domain_is_rejected,
        test_shipped_layout,
        test_patch_text_format,
        test_frequency_square_patch_matches_refuge,
    ])


if __name__ == "__main__":
    sys.exit(main())
