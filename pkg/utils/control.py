"""Harvest sweeps over refuge frequency and refuge quantity."""

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .analysis import harvest, late_decay_rate
from .coefficients import ModelParams, assemble_fields
from .dynamics import InitialCondition, MonitorConfig, Scenario, build_initial_state, run
from .errors import ConfigError, RefugeError
from .geometry import Grid, refuge_frequency_mask, refuge_uniform_mask
from .spectral import frequency_lambda1, lambda1_Vs

logger = logging.getLogger(__name__)

AXES = ("frequency", "quantity")
RESULT_COLUMNS = ["axis_value", "lambda1", "harvest", "healthy_fraction", "status"]


@dataclass(frozen=True)
class SweepSpec:
    """
    A family of runs that differ only in the refuge

    The base scenario is described by its refuge-independent parts (params,
    grid, horizon, initial-condition recipe, stepping options); each axis value
    supplies the refuge: A_n with the given total area, or a uniform density r.
    """

    params: ModelParams
    grid: Grid
    axis: str
    values: Sequence[float]
    ic: InitialCondition
    T: float
    dt: float
    total_area: Optional[float] = None
    monitors: MonitorConfig = field(default_factory=MonitorConfig)
    scheme: str = "semi"
    face_average: str = "arithmetic"
    predator_dispersal: str = "ideal_free"
    workers: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"Unknown sweep axis {self.axis!r}, expected one of {AXES}")
        if len(self.values) == 0:
            raise ConfigError(f"The {self.axis} sweep needs at least one axis value")
        if self.workers < 1:
            raise ConfigError(f"Worker count must be >= 1, got {self.workers}")
        if self.axis == "frequency":
            if not self.total_area:
                raise ConfigError("Frequency sweeps need the total refuge area")
            values = [int(v) for v in self.values]
            if any(v != w for v, w in zip(values, self.values)):
                raise ConfigError(f"Frequencies must be integers, got {list(self.values)}")
            for n in values:
                refuge_frequency_mask(self.grid, n, self.total_area)
        else:
            values = [float(v) for v in self.values]
            for r in values:
                if not (0.0 <= r < 1.0):
                    raise ConfigError(f"Refuge quantity must lie in [0, 1), got {r}")
        if self.ic.layout is not None:
            self.ic.layout.check_inside(self.grid)
        object.__setattr__(self, "values", tuple(values))

    def mask_for(self, value):
        if self.axis == "frequency":
            return refuge_frequency_mask(self.grid, int(value), self.total_area)
        return refuge_uniform_mask(self.grid, float(value))

    def to_dict(self) -> Dict[str, Any]:
        ic = self.ic
        return {
            "axis": self.axis, "values": list(self.values), "params": self.params.to_dict(),
            "grid": self.grid.to_dict(), "T": self.T, "dt": self.dt, "total_area": self.total_area,
            "ic": {"mode": ic.mode, "vi0_factor": ic.vi0_factor, "vs0_factor": ic.vs0_factor,
                   "p0_scale": ic.p0_scale, "total_area": ic.total_area,
                   "layout": None if ic.layout is None else
                   [list(r) + [d] for r, d in zip(ic.layout.rectangles, ic.layout.densities)]},
            "monitor": self.monitors.strictness, "scheme": self.scheme,
            "face_average": self.face_average, "predator_dispersal": self.predator_dispersal,
            "workers": self.workers,
        }


def _run_point(spec: SweepSpec, value) -> Dict[str, Any]:
    """One row of a sweep; failures become rows marked failed"""
    row = {"axis_value": value, "lambda1": math.nan, "harvest": math.nan,
           "healthy_fraction": math.nan, "status": "ok"}
    try:
        if spec.axis == "frequency":
            row["lambda1"] = frequency_lambda1(spec.params, spec.grid, spec.total_area, int(value))
        mask = spec.mask_for(value)
        fields = assemble_fields(spec.params, mask)
        if spec.axis == "quantity":
            row["lambda1"] = lambda1_Vs(fields, spec.params).lambda1
        initial = build_initial_state(fields, spec.params, spec.ic)
        scenario = Scenario(fields, spec.params, initial, spec.T, spec.dt, monitors=spec.monitors,
                            scheme=spec.scheme, face_average=spec.face_average,
                            predator_dispersal=spec.predator_dispersal)
        summary = run(scenario)
        report = harvest(summary.final, fields, spec.params, late_decay_rate(summary))
        row["harvest"] = report.harvest
        row["healthy_fraction"] = report.ratio
    except RefugeError as e:
        logger.warning("Sweep point %s=%s failed: %s", spec.axis, value, e)
        row["status"] = f"failed: {e}"
    except Exception as e:
        logger.exception("Sweep point %s=%s raised %s", spec.axis, value, type(e).__name__)
        row["status"] = f"failed: {type(e).__name__}: {e}"
    logger.info("Sweep point %s=%s: harvest=%.10g (%s)", spec.axis, value, row["harvest"],
                row["status"])
    return row


@dataclass
class SweepResult:
    axis: str
    table: pd.DataFrame
    spec: SweepSpec

    @property
    def argmax(self):
        """Axis value with the largest harvest among successful rows"""
        ok = self.table[self.table["status"] == "ok"]
        if ok.empty:
            return None
        return ok.loc[ok["harvest"].idxmax(), "axis_value"]


def _sweep(spec: SweepSpec) -> SweepResult:
    values = list(spec.values)
    if spec.workers > 1 and len(values) > 1:
        with ProcessPoolExecutor(max_workers=min(spec.workers, len(values))) as executor:
            rows = list(executor.map(_run_point, [spec] * len(values), values))
    else:
        rows = [_run_point(spec, value) for value in values]
    table = pd.DataFrame(rows, columns=RESULT_COLUMNS)
    return SweepResult(spec.axis, table, spec)


def sweep_frequency(spec: SweepSpec) -> SweepResult:
    """
    Harvest and lambda_1(L_Vs) for each refuge frequency n

    Rows follow the order of spec.values whatever order the workers finish in.
    """
    if spec.axis != "frequency":
        raise ConfigError(f"sweep_frequency needs a frequency axis, got {spec.axis!r}")
    return _sweep(spec)


def sweep_quantity(spec: SweepSpec) -> SweepResult:
    """Harvest for each uniform refuge density r in [0, 1); SweepResult.argmax is the best r"""
    if spec.axis != "quantity":
        raise ConfigError(f"sweep_quantity needs a quantity axis, got {spec.axis!r}")
    result = _sweep(spec)
    logger.info("Quantity sweep argmax r = %s", result.argmax)
    return result


def write_sweep_outputs(result: SweepResult, out_dir: Union[str, Path], name: str,
                        config: Optional[Dict[str, Any]] = None) -> Dict[str, Path]:
    """Write the result CSV and a JSON sidecar with the resolved configuration"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{name}.csv"
    json_path = out_dir / f"{name}.json"
    result.table.to_csv(csv_path, index=False, float_format="%.12g")
    sidecar = {"sweep": result.spec.to_dict(), "argmax": _plain(result.argmax),
               "config": config or {}}
    with open(json_path, "w") as f:
        json.dump(sidecar, f, indent=2, default=_plain)
    return {"csv": csv_path, "json": json_path}


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return str(value) if not isinstance(value, (int, float, str, type(None))) else value
