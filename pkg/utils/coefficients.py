"""Model constants and the heterogeneous coefficient fields built from a refuge mask."""

import logging
import math
from dataclasses import dataclass, fields as dataclass_fields, asdict
from typing import Any, Dict

import numpy as np

from .errors import ConfigError
from .geometry import Grid, RefugeMask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelParams:
    """
    Positive model constants (days, meters)

    Densities are per m^2. ``rV_*`` and ``rP_*`` are Malthusian growth rates of
    aphids and predators in the field and the extra rate a full refuge adds.
    """

    beta_VH: float
    beta_HV: float
    alpha: float
    d_V_const: float
    s_V: float
    h: float
    gamma: float
    s_P: float
    sigma_V: float
    sigma_P: float
    rV_field: float
    rV_refuge: float
    rP_field: float
    rP_refuge: float
    H_field: float

    def __post_init__(self):
        for f in dataclass_fields(self):
            value = getattr(self, f.name)
            try:
                value = float(value)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"Parameter {f.name} must be numeric, got {value!r}") from e
            if not math.isfinite(value):
                raise ConfigError(f"Parameter {f.name} must be finite, got {value}")
            if f.name == "alpha":
                if value < 0:
                    raise ConfigError(f"Parameter alpha must be >= 0, got {value}")
            elif value <= 0:
                raise ConfigError(f"Parameter {f.name} must be > 0, got {value}")
            object.__setattr__(self, f.name, value)

    @classmethod
    def names(cls):
        return [f.name for f in dataclass_fields(cls)]

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "ModelParams":
        """Build from a mapping, rejecting unknown and missing keys"""
        known = set(cls.names())
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown parameter(s): {', '.join(unknown)}")
        missing = [name for name in cls.names() if name not in values]
        if missing:
            raise ConfigError(f"Missing parameter(s): {', '.join(missing)}")
        return cls(**{name: values[name] for name in cls.names()})

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def replace(self, **changes) -> "ModelParams":
        values = self.to_dict()
        values.update(changes)
        return ModelParams.from_dict(values)

    @property
    def field_carrying_capacity(self) -> float:
        """Aphid carrying capacity in the field, rV_field / s_V"""
        return self.rV_field / self.s_V

    @property
    def field_potential(self) -> float:
        """Potential of the aphid operator with no refuge: -rV_field + h rP_field / s_P"""
        return -self.rV_field + self.h * self.rP_field / self.s_P

    @property
    def refuge_potential(self) -> float:
        """Potential added by a full refuge: -rV_refuge + h rP_refuge / s_P"""
        return -self.rV_refuge + self.h * self.rP_refuge / self.s_P


@dataclass(frozen=True)
class CoefficientFields:
    """Coefficient fields on the grid, affine in the refuge density R"""

    r_V: np.ndarray
    r_P: np.ndarray
    H: np.ndarray
    b_V: np.ndarray
    d_V: np.ndarray
    mask: RefugeMask

    def __post_init__(self):
        for name in ("r_V", "r_P", "H", "b_V", "d_V"):
            values = np.array(self.grid.check_field(getattr(self, name), name), dtype=float)
            values.setflags(write=False)
            object.__setattr__(self, name, values)
        if np.any(self.r_P <= 0):
            raise ConfigError(f"Predator growth rate r_P must be positive, min is {self.r_P.min()}")
        if np.any(self.H < 0):
            raise ConfigError(f"Host density H must be nonnegative, min is {self.H.min()}")

    @property
    def grid(self) -> Grid:
        return self.mask.grid

    def total_hosts(self) -> float:
        return self.grid.integrate(self.H)


def assemble_fields(params: ModelParams, mask: RefugeMask) -> CoefficientFields:
    """
    Assemble r_V, r_P, H, b_V and d_V from a refuge mask

    Args:
        params: model constants
        mask: refuge density R on its grid

    Returns:
        CoefficientFields with r_V = rV_field + rV_refuge R, r_P = rP_field + rP_refuge R,
        H = H_field (1 - R), d_V = d_V_const and b_V = r_V + d_V
    """
    R = np.asarray(mask.values, dtype=float)
    r_V = params.rV_field + params.rV_refuge * R
    r_P = params.rP_field + params.rP_refuge * R
    H = params.H_field * (1.0 - R)
    d_V = np.full(R.shape, params.d_V_const)
    b_V = r_V + d_V
    logger.debug("Assembled coefficient fields on %dx%d grid, refuge area %.6g m^2",
                 mask.grid.nx, mask.grid.ny, mask.area())
    return CoefficientFields(r_V=r_V, r_P=r_P, H=H, b_V=b_V, d_V=d_V, mask=mask)


def predator_equilibrium(fields: CoefficientFields, params: ModelParams) -> np.ndarray:
    """Predator equilibrium with no aphids, P* = r_P / s_P"""
    return fields.r_P / params.s_P


def aphid_potential(fields: CoefficientFields, params: ModelParams) -> np.ndarray:
    """Zeroth-order term of the susceptible-aphid operator: -r_V + h r_P / s_P"""
    return -fields.r_V + params.h * fields.r_P / params.s_P


def infected_aphid_potential(fields: CoefficientFields, params: ModelParams) -> np.ndarray:
    """Zeroth-order term of the infected-aphid operator: alpha + d_V + h r_P / s_P"""
    return params.alpha + fields.d_V + params.h * fields.r_P / params.s_P
