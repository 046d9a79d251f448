#!/usr/bin/env python3
"""
Refuge epidemic simulator command line

Subcommands: simulate, eig, sweep-frequency, sweep-quantity, bounds, render,
layout, expected-harvest. Exit codes: 0 ok, 1 configuration error, 2 solver
failure, 3 monitor abort.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from utils.analysis import (corollary_bounds, harvest, late_decay_rate, persistence_check,
                            theorem_envelope)
from utils.coefficients import aphid_potential, assemble_fields, infected_aphid_potential
from utils.config import RunConfig, setup_logging
from utils.control import sweep_frequency, sweep_quantity, write_sweep_outputs
from utils.dynamics import run
from utils.errors import ConfigError, RefugeError
from utils.geometry import mask_area, save_patch_spec
from utils.layout_generator import random_patch_layout
from utils.snapshots import render_snapshots, write_series_csv, write_snapshots
from utils.spectral import (ORACLE_MAX_CELLS, classify_eigenvalue, dense_principal_eigenvalue,
                            homogenized_limit, lambda1_P, lambda1_Vi, lambda1_Vs)


def load_config(args) -> RunConfig:
    """Run config from --config (or defaults) with command-line overrides applied"""
    config = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {name: getattr(args, name, None)
                 for name in ("preset", "scheme", "out", "nx", "ny", "T", "steps", "dt",
                              "monitor", "workers")}
    config = config.with_overrides(**overrides)
    if overrides["preset"]:
        config = replace(config, params_file=None)
    return config


def write_config(config: RunConfig, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "config.json"
    with open(path, "w") as f:
        json.dump(config.to_dict(), f, indent=2)
    return path


def cmd_simulate(args) -> int:
    config = load_config(args)
    out_dir = Path(config.out)
    write_config(config, out_dir)
    print(f"Building scenario: {config.nx}x{config.ny} grid, refuge={config.refuge}, ic={config.ic}")
    scenario = config.build_scenario()
    summary = run(scenario)
    fields, params = scenario.fields, scenario.params

    write_series_csv(summary, out_dir / "series.csv")
    write_snapshots(summary, out_dir / "snapshots")
    report = harvest(summary.final, fields, params, late_decay_rate(summary))
    (out_dir / "harvest.txt").write_text(report.to_text())

    lambda_s = lambda1_Vs(fields, params).lambda1
    regime = classify_eigenvalue(lambda_s)
    verdict = {"lambda1_Vs": lambda_s, "regime": regime.value,
               "sup_V_initial": float(summary.initial.V.max()),
               "sup_V_final": float(summary.final.V.max()),
               "monitors": summary.monitor.to_dict()}
    if regime.value == "persistence":
        verdict["persistence"] = persistence_check(summary).to_dict()
    with open(out_dir / "regime.json", "w") as f:
        json.dump(verdict, f, indent=2)

    print(f"✅ Simulation finished: {summary.n_steps} steps to t={summary.final.t:g} days")
    print(f"   Healthy beets: {report.harvest:.1f} of {report.total_hosts:.1f} "
          f"({report.ratio:.4%}), tail bound {report.tail_bound:.3g}")
    print(f"   Regime: {regime.value} (lambda_1 = {lambda_s:.6g} / day)")
    print(f"✅ Outputs saved to: {out_dir}")
    return 0


def cmd_eig(args) -> int:
    config = load_config(args)
    out_dir = Path(config.out)
    write_config(config, out_dir)
    params = config.build_params()
    grid = config.build_grid()
    mask = config.build_mask(grid)
    fields = assemble_fields(params, mask)

    s_result = lambda1_Vs(fields, params)
    i_result = lambda1_Vi(fields, params)
    p_result = lambda1_P(fields, params, face_average=config.face_average)
    rows = [
        ("lambda1_Vs", s_result.lambda1),
        ("lambda1_Vi", i_result.lambda1),
        ("lambda1_P", p_result.lambda1),
        ("homogenized_limit", homogenized_limit(params, mask_area(mask) / grid.area)),
        ("regime", classify_eigenvalue(s_result.lambda1).value),
    ]
    if args.oracle:
        if grid.size > ORACLE_MAX_CELLS:
            raise ConfigError(f"--oracle needs a grid of at most {ORACLE_MAX_CELLS} cells, "
                              f"got {grid.size}")
        oracle = {
            "lambda1_Vs": dense_principal_eigenvalue(params.sigma_V, aphid_potential(fields, params), grid),
            "lambda1_Vi": dense_principal_eigenvalue(
                params.sigma_V, infected_aphid_potential(fields, params), grid),
            "lambda1_P": dense_principal_eigenvalue(
                params.sigma_P, fields.r_P ** 2, grid, weight=fields.r_P,
                conductivity=fields.r_P, face_average=config.face_average),
        }
        iterative = dict(rows[:3])
        for name, value in oracle.items():
            rows.append((f"oracle_{name}", value))
            rows.append((f"rel_diff_{name}", abs(iterative[name] - value) / max(abs(value), 1e-300)))

    lines = ["quantity,value"] + [
        f"{name},{value:.12g}" if isinstance(value, float) else f"{name},{value}" for name, value in rows]
    text = "\n".join(lines) + "\n"
    (out_dir / "eigen.csv").write_text(text)
    print(text, end="")
    return 0


def _cmd_sweep(args, axis: str) -> int:
    config = load_config(args)
    out_dir = Path(config.out)
    write_config(config, out_dir)
    spec = config.build_sweep_spec(axis)
    print(f"Sweeping {axis} over {list(spec.values)} with {spec.workers} worker(s)")
    result = sweep_frequency(spec) if axis == "frequency" else sweep_quantity(spec)
    paths = write_sweep_outputs(result, out_dir, f"sweep_{axis}", config.to_dict())
    print(result.table.to_string(index=False))
    print(f"   Best {axis}: {result.argmax}")
    print(f"✅ Sweep saved to: {paths['csv']}")
    failed = (result.table["status"] != "ok").sum()
    if failed:
        print(f"⚠️  {failed} scenario(s) failed; see the status column")
    return 0


def cmd_sweep_frequency(args) -> int:
    return _cmd_sweep(args, "frequency")


def cmd_sweep_quantity(args) -> int:
    return _cmd_sweep(args, "quantity")


def cmd_bounds(args) -> int:
    config = load_config(args)
    out_dir = Path(config.out)
    write_config(config, out_dir)
    scenario = config.build_scenario()
    fields, params = scenario.fields, scenario.params
    s_result = lambda1_Vs(fields, params)
    eps = config.eps_factor * s_result.lambda1 / params.h
    summary = run(scenario)

    envelope = theorem_envelope(fields, params, summary, eps=eps)
    if envelope.applicable:
        envelope.table.to_csv(out_dir / "envelope.csv", index=False, float_format="%.12g")
    report = harvest(summary.final, fields, params, late_decay_rate(summary))
    if envelope.applicable:
        p_dev = float(abs(summary.initial.P - fields.r_P / params.s_P).max())
        bounds = corollary_bounds(fields, params, float(summary.initial.V.max()),
                                  float(summary.initial.Vi.min()), eps, P0_dev=p_dev,
                                  spectra={"Vs": s_result})
        report.lower, report.upper = bounds.lower, bounds.upper
    lines = [f"{key} = {value}" for key, value in envelope.to_dict().items()]
    (out_dir / "bounds.txt").write_text("\n".join(lines) + "\n" + report.to_text())

    print(f"Envelope: {envelope.message}")
    if report.lower is not None:
        print(f"   Healthy fraction {report.ratio:.6f} in [{report.lower:.6f}, {report.upper:.6f}] "
              f"(+/- tail {report.tail_ratio:.3g}): {report.within_sandwich()}")
    print(f"✅ Bounds report saved to: {out_dir / 'bounds.txt'}")
    return 0


def cmd_render(args) -> int:
    frames = render_snapshots(args.snapshot_dir, args.out)
    print(f"✅ Rendered {len(frames)} frames into: {frames[0].parent}")
    return 0


def cmd_layout(args) -> int:
    spec = random_patch_layout(args.lx, args.ly, args.k, args.seed,
                               size_range=(args.min_size, args.max_size))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_patch_spec(spec, out)
    print(f"✅ Layout with {len(spec)} patches saved to: {out}")
    return 0


def cmd_expected_harvest(args) -> int:
    print("The expected-harvest study over random initial infestations is deferred; "
          "nothing to compute.")
    return 0


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run config file (name = value lines)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--preset", choices=["extinction", "persistence"], help="parameter preset")
    parser.add_argument("--scheme", choices=["semi", "explicit"], help="time stepping scheme")
    parser.add_argument("--monitor", choices=["warn", "abort"], help="monitor strictness")
    parser.add_argument("--nx", type=int, help="cells along x")
    parser.add_argument("--ny", type=int, help="cells along y")
    parser.add_argument("--T", type=float, help="horizon in days")
    parser.add_argument("--steps", type=int, help="number of time steps")
    parser.add_argument("--dt", type=float, help="time step in days (instead of --steps)")
    parser.add_argument("--workers", type=int, help="worker processes for sweeps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Refuge epidemic simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, handler, help_text in [
        ("simulate", cmd_simulate, "run one scenario"),
        ("eig", cmd_eig, "principal eigenvalues and regime verdict"),
        ("sweep-frequency", cmd_sweep_frequency, "harvest versus refuge frequency"),
        ("sweep-quantity", cmd_sweep_quantity, "harvest versus uniform refuge density"),
        ("bounds", cmd_bounds, "check the extinction envelopes and the harvest sandwich"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_run_options(p)
        if name == "eig":
            p.add_argument("--oracle", action="store_true",
                           help="compare with a dense eigensolver (small grids only)")
        p.set_defaults(handler=handler)

    p = sub.add_parser("render", help="render snapshot frames as graymaps")
    p.add_argument("snapshot_dir", help="directory written by simulate")
    p.add_argument("--out", help="frame directory (default: <snapshot_dir>/frames)")
    p.set_defaults(handler=cmd_render)

    p = sub.add_parser("layout", help="write a seeded random patch layout")
    p.add_argument("--k", type=int, default=3, help="number of patches")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lx", type=float, default=300.0)
    p.add_argument("--ly", type=float, default=300.0)
    p.add_argument("--min-size", type=float, default=10.0)
    p.add_argument("--max-size", type=float, default=50.0)
    p.add_argument("--out", default="layout.txt")
    p.set_defaults(handler=cmd_layout)

    p = sub.add_parser("expected-harvest", help="deferred probabilistic study")
    p.set_defaults(handler=cmd_expected_harvest)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except RefugeError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
