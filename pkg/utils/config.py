"""Environment, parameter files, presets and run configuration.

Parameter and run files share one format: ``name = value`` per line, ``#``
starts a comment, blank lines are skipped. Lists are comma separated.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields as dataclass_fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from dotenv import load_dotenv

from .coefficients import ModelParams, assemble_fields
from .dynamics import IC_MODES, InitialCondition, MonitorConfig, Scenario, build_initial_state
from .errors import ConfigError
from .geometry import (Grid, RefugeMask, build_grid, empty_mask, load_mask, load_patch_spec,
                       refuge_frequency_mask, refuge_uniform_mask)

logger = logging.getLogger(__name__)

REPO_ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = REPO_ROOT / "data"
PRESET_DIR = DATA_DIR / "presets"
DEFAULT_LAYOUT = DATA_DIR / "layouts" / "random_patches.txt"

# sign of lambda_1(L_Vs) each shipped preset is calibrated to
PRESET_CLAIMS = {"extinction": 1, "persistence": -1}

REFUGE_KINDS = ("none", "frequency", "uniform", "mask")

_env_loaded = False


def load_env() -> None:
    """Load .env from the working directory once"""
    global _env_loaded
    if not _env_loaded:
        load_dotenv()
        _env_loaded = True


def setup_logging(level: Optional[str] = None) -> None:
    load_env()
    level = (level or os.getenv("REFUGE_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def default_output_dir() -> str:
    load_env()
    return os.getenv("REFUGE_OUTPUT_DIR", "outputs")


def default_workers() -> int:
    load_env()
    value = os.getenv("REFUGE_WORKERS", "1")
    try:
        return max(1, int(value))
    except ValueError as e:
        raise ConfigError(f"REFUGE_WORKERS must be an integer, got {value!r}") from e


def default_monitor() -> str:
    load_env()
    return os.getenv("REFUGE_MONITOR", "abort")


def parse_key_value_text(text: str, source: str = "<text>") -> Dict[str, str]:
    """Parse ``name = value`` lines; duplicate keys are an error"""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'name = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing name before '='")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def read_key_value_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Configuration file not found: {path}")
    return parse_key_value_text(path.read_text(), str(path))


def _to_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError as e:
        raise ConfigError(f"Value of {key!r} must be numeric, got {value!r}") from e


def load_params(path: Union[str, Path]) -> ModelParams:
    """Read a model parameter file; unknown, missing and duplicate keys are errors"""
    raw = read_key_value_file(path)
    return ModelParams.from_dict({key: _to_float(key, value) for key, value in raw.items()})


def verify_preset(name: str, params: ModelParams) -> None:
    """
    Check a preset's calibration claim on the sign of lambda_1(L_Vs)

    Checked with no refuge (closed form) and with the frequency-4 refuge of
    area |Omega|/25 on a 20x20 grid of a 300 m field.
    """
    from .spectral import lambda1_Vs

    sign = PRESET_CLAIMS.get(name)
    if sign is None:
        return
    grid = build_grid(20, 20, 300.0, 300.0)
    checks = {
        "no refuge": params.field_potential,
        "frequency-4 refuge": lambda1_Vs(
            assemble_fields(params, refuge_frequency_mask(grid, 4, grid.area / 25.0)), params).lambda1,
    }
    for label, value in checks.items():
        if value * sign <= 0:
            raise ConfigError(
                f"Preset {name!r} claims lambda_1(L_Vs) {'>' if sign > 0 else '<'} 0 but "
                f"{label} gives {value:.6g}")
    logger.debug("Preset %s verified: %s", name, checks)


def load_preset(name: str, verify: bool = True) -> ModelParams:
    path = PRESET_DIR / f"{name}.cfg"
    if not path.exists():
        available = sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))
        raise ConfigError(f"Unknown preset {name!r}; available: {', '.join(available)}")
    params = load_params(path)
    if verify:
        verify_preset(name, params)
    return params


def _parse_list(key: str, value: str, kind=float) -> List:
    items = [item.strip() for item in value.split(",") if item.strip()]
    try:
        return [kind(item) for item in items]
    except ValueError as e:
        raise ConfigError(f"Value of {key!r} must be a comma separated list, got {value!r}") from e


@dataclass(frozen=True)
class RunConfig:
    """Fully explicit description of a command-line run"""

    preset: str = "extinction"
    params_file: Optional[str] = None
    nx: int = 40
    ny: int = 40
    lx: float = 300.0
    ly: float = 300.0
    T: float = 91.25
    steps: Optional[int] = 1000
    dt: Optional[float] = None
    refuge: str = "frequency"
    refuge_n: int = 4
    area_fraction: float = 0.04
    refuge_r: float = 0.0
    refuge_mask_file: Optional[str] = None
    ic: str = "random_patches"
    layout_file: Optional[str] = str(DEFAULT_LAYOUT)
    vi0_factor: float = 0.01
    vs0_factor: float = 0.09
    scheme: str = "semi"
    monitor: str = field(default_factory=default_monitor)
    snapshot_stride: int = 0
    face_average: str = "arithmetic"
    predator_dispersal: str = "ideal_free"
    n_list: List[int] = field(default_factory=lambda: [1, 2, 4, 8])
    r_list: List[float] = field(default_factory=lambda: [round(0.1 * k, 10) for k in range(10)])
    workers: int = field(default_factory=default_workers)
    eps_factor: float = 0.5
    out: str = field(default_factory=default_output_dir)

    def __post_init__(self):
        if self.refuge not in REFUGE_KINDS:
            raise ConfigError(f"Unknown refuge kind {self.refuge!r}, expected one of {REFUGE_KINDS}")
        if self.ic not in IC_MODES:
            raise ConfigError(f"Unknown initial condition {self.ic!r}, expected one of {IC_MODES}")
        if self.refuge == "mask" and not self.refuge_mask_file:
            raise ConfigError("refuge = mask needs refuge_mask_file")
        if self.ic == "random_patches" and not self.layout_file:
            raise ConfigError("ic = random_patches needs layout_file")
        if not (0.0 < self.area_fraction <= 1.0):
            raise ConfigError(f"area_fraction must lie in (0, 1], got {self.area_fraction}")
        if self.steps is None and self.dt is None:
            raise ConfigError("Give either steps or dt")
        if self.steps is not None and self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if not (0.0 < self.eps_factor < 1.0):
            raise ConfigError(f"eps_factor must lie in (0, 1), got {self.eps_factor}")

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in dataclass_fields(cls)]

    @classmethod
    def from_mapping(cls, raw: Dict[str, str], base_dir: Optional[Path] = None) -> "RunConfig":
        """Typed RunConfig from string values; relative paths resolve against base_dir"""
        unknown = sorted(set(raw) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"Unknown run config key(s): {', '.join(unknown)}")
        values: Dict[str, Any] = {}
        for key, value in raw.items():
            if key in ("nx", "ny", "refuge_n", "snapshot_stride", "workers", "steps"):
                number = _to_float(key, value)
                if number != int(number):
                    raise ConfigError(f"Value of {key!r} must be an integer, got {value!r}")
                values[key] = int(number)
            elif key in ("lx", "ly", "T", "dt", "area_fraction", "refuge_r", "vi0_factor",
                         "vs0_factor", "eps_factor"):
                values[key] = _to_float(key, value)
            elif key == "n_list":
                values[key] = _parse_list(key, value, int)
            elif key == "r_list":
                values[key] = _parse_list(key, value, float)
            elif key in ("params_file", "refuge_mask_file", "layout_file", "out"):
                path = Path(value)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                values[key] = str(path)
            else:
                values[key] = value
        if "dt" in values and "steps" not in values:
            values["steps"] = None
        return cls(**values)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunConfig":
        """Read a key=value run file, or a config.json sidecar written by an earlier run"""
        path = Path(path)
        if path.suffix == ".json":
            if not path.exists():
                raise ConfigError(f"Configuration file not found: {path}")
            try:
                data = json.loads(path.read_text())
            except json.JSONDecodeError as e:
                raise ConfigError(f"Corrupt config sidecar {path}: {e}") from e
            data.pop("resolved_dt", None)
            unknown = sorted(set(data) - set(cls.keys()))
            if unknown:
                raise ConfigError(f"Unknown run config key(s): {', '.join(unknown)}")
            return cls(**data)
        return cls.from_mapping(read_key_value_file(path), path.resolve().parent)

    def with_overrides(self, **overrides) -> "RunConfig":
        changes = {k: v for k, v in overrides.items() if v is not None}
        if "dt" in changes and "steps" not in changes:
            changes["steps"] = None
        return replace(self, **changes)

    @property
    def time_step(self) -> float:
        if self.steps is not None:
            return self.T / self.steps
        return float(self.dt)

    @property
    def total_area(self) -> float:
        return self.area_fraction * self.lx * self.ly

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values["resolved_dt"] = self.time_step
        return values

    def build_params(self) -> ModelParams:
        if self.params_file:
            return load_params(self.params_file)
        return load_preset(self.preset)

    def build_grid(self) -> Grid:
        return build_grid(self.nx, self.ny, self.lx, self.ly)

    def build_mask(self, grid: Grid) -> RefugeMask:
        if self.refuge == "none":
            return empty_mask(grid)
        if self.refuge == "frequency":
            return refuge_frequency_mask(grid, self.refuge_n, self.total_area)
        if self.refuge == "uniform":
            return refuge_uniform_mask(grid, self.refuge_r)
        return load_mask(self.refuge_mask_file, grid)

    def build_initial_condition(self) -> InitialCondition:
        layout = load_patch_spec(self.layout_file) if self.ic == "random_patches" else None
        return InitialCondition(mode=self.ic, layout=layout, vi0_factor=self.vi0_factor,
                                vs0_factor=self.vs0_factor, total_area=self.total_area)

    def build_monitors(self) -> MonitorConfig:
        return MonitorConfig(strictness=self.monitor)

    def build_scenario(self, params: Optional[ModelParams] = None) -> Scenario:
        params = params or self.build_params()
        grid = self.build_grid()
        fields = assemble_fields(params, self.build_mask(grid))
        initial = build_initial_state(fields, params, self.build_initial_condition())
        scenario = Scenario(fields, params, initial, self.T, self.time_step,
                            monitors=self.build_monitors(), snapshot_stride=self.snapshot_stride,
                            scheme=self.scheme, face_average=self.face_average,
                            predator_dispersal=self.predator_dispersal)
        # builds the operators, which also applies the explicit-scheme CFL guard
        _ = scenario.stepper
        return scenario

    def build_sweep_spec(self, axis: str, params: Optional[ModelParams] = None):
        from .control import SweepSpec

        values = self.n_list if axis == "frequency" else self.r_list
        return SweepSpec(params=params or self.build_params(), grid=self.build_grid(), axis=axis,
                         values=values, ic=self.build_initial_condition(), T=self.T,
                         dt=self.time_step, total_area=self.total_area,
                         monitors=self.build_monitors(), scheme=self.scheme,
                         face_average=self.face_average,
                         predator_dispersal=self.predator_dispersal, workers=self.workers)


