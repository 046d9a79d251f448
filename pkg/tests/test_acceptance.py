#!/usr/bin/env python3
"""
Long-running scenario checks: refuge frequency and homogenization on the
framework grid, disease persistence, the desk-grid sweep orderings and the
framework run itself
"""

import os
import sys
import time
from dataclasses import replace

import numpy as np

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from utils.analysis import harvest, persistence_check
from utils.config import DATA_DIR, RunConfig, load_preset
from utils.control import sweep_frequency, sweep_quantity
from utils.dynamics import run
from utils.geometry import build_grid
from utils.spectral import frequency_curve, homogenized_limit

CONFIGS = DATA_DIR / "configs"
FIELD = 300.0
REFUGE_AREA = FIELD * FIELD / 25.0


def test_lambda1_increases_with_frequency():
    params = load_preset("extinction")
    grid = build_grid(80, 80, FIELD, FIELD)
    curve = frequency_curve(params, grid, REFUGE_AREA, [1, 2, 4, 8])
    print(curve.to_string(index=False))
    gaps = np.diff(curve["lambda1"].to_numpy())
    assert np.all(gaps >= -1e-10)


def test_lambda1_approaches_homogenized_limit():
    params = load_preset("extinction")
    grid = build_grid(80, 80, FIELD, FIELD)
    limit = homogenized_limit(params, REFUGE_AREA / grid.area)
    curve = frequency_curve(params, grid, REFUGE_AREA, [1, 4, 16]).set_index("n")["lambda1"]
    gaps = {n: abs(curve[n] - limit) for n in (1, 4, 16)}
    print(f"   limit {limit:.8g}, gaps {gaps}")
    assert gaps[16] < gaps[4] < gaps[1]


def test_persistence_regime():
    """Uniform infected aphids under the persistence preset infect the whole field"""
    config = RunConfig(preset="persistence", nx=40, ny=40, T=200.0, steps=2000,
                       ic="uniform", layout_file=None, monitor="abort")
    start = time.time()
    summary = run(config.build_scenario())
    verdict = persistence_check(summary, tol=1e-3, burn_in=100.0, threshold=1e-2)
    print(f"   {verdict.message} ({time.time() - start:.1f}s)")
    assert verdict.applicable
    assert verdict.persistent


def _desk_frequency(ic, **kwargs):
    config = RunConfig.from_file(CONFIGS / "desk_frequency.cfg")
    config = replace(config, ic=ic, **kwargs)
    start = time.time()
    result = sweep_frequency(config.build_sweep_spec("frequency"))
    print(result.table.to_string(index=False))
    print(f"   {ic}: best n = {result.argmax} ({time.time() - start:.1f}s)")
    assert (result.table["status"] == "ok").all()
    return result.table.set_index("axis_value")["harvest"]


def test_random_patches_prefer_some_lower_frequency():
    harvests = _desk_frequency("random_patches")
    ns = list(harvests.index)
    assert any(harvests[a] > harvests[b] for i, a in enumerate(ns) for b in ns[i + 1:])


def test_centered_patch_prefers_one_refuge():
    harvests = _desk_frequency("centered_patch")
    assert harvests.idxmax() == 1


def test_uniform_infestation_prefers_fragmented_refuges():
    harvests = _desk_frequency("uniform")
    values = harvests.sort_index().to_numpy()
    assert np.all(np.diff(values) >= -1e-9 * values[:-1])


def _desk_quantity(vi0_factor):
    config = RunConfig.from_file(CONFIGS / "desk_quantity.cfg")
    config = replace(config, vi0_factor=vi0_factor)
    result = sweep_quantity(config.build_sweep_spec("quantity"))
    print(result.table.to_string(index=False))
    print(f"   vi0_factor={vi0_factor}: best r = {result.argmax}")
    assert (result.table["status"] == "ok").all()
    return result.argmax


def test_light_infestation_needs_no_refuge():
    assert _desk_quantity(0.01) == 0.0


def test_heavy_infestation_needs_refuges():
    assert _desk_quantity(2.0) >= 0.2


def test_framework_run():
    """80 x 80 cells, 4000 steps: almost every beet survives and the aphids collapse"""
    config = RunConfig.from_file(CONFIGS / "framework.cfg")
    scenario = config.build_scenario()
    start = time.time()
    summary = run(scenario)
    report = harvest(summary.final, scenario.fields, scenario.params)
    sup_v0 = float(summary.initial.V.max())
    sup_v = float(summary.final.V.max())
    print(f"   healthy fraction {report.ratio:.6f}, sup V {sup_v0:.4g} -> {sup_v:.4g} "
          f"({time.time() - start:.1f}s)")
    assert summary.monitor.ok
    assert report.ratio > 0.99
    assert sup_v <= 0.01 * sup_v0


def main():
    from harness import run_test_functions

    return run_test_functions('acceptance', [
        test_lambda1_increases_with_frequency,
        test_lambda1_approaches_homogenized_limit,
        test_persistence_regime,
        test_random_patches_prefer_some_lower_frequency,
        test_centered_patch_prefers_one_refuge,
        test_uniform_infestation_prefers_fragmented_refuges,
        test_light_infestation_needs_no_refuge,
        test_heavy_infestation_needs_refuges,
        test_framework_run,
    ])


if __name__ == "__main__":
    sys.exit(main())
