"""Time stepping of the host / aphid / predator system with invariant monitors.

Fields:
    I   infected beets           dI/dt  = beta_VH (H - I) V_i
    V_i infected aphids          dV_i/dt = sigma_V Lap V_i + beta_HV I V_s - (alpha + d_V + s_V V + h P) V_i
    V_s susceptible aphids       dV_s/dt = sigma_V Lap V_s - beta_HV I V_s + alpha V_i - (d_V + s_V V + h P) V_s + b_V V
    P   predators                dP/dt  = sigma_P div(r_P grad(P / r_P)) + gamma h V P + r_P P - s_P P^2

The semi-explicit scheme takes the reactions explicitly and the diffusion by
backward Euler. Predators are solved for P~ = P / r_P.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from .coefficients import CoefficientFields, ModelParams, predator_equilibrium
from .errors import ConfigError, MonitorAbort, SolverError
from .geometry import PatchSpec, frequency_square_patch, patches_field
from .operators import FACE_AVERAGES, ImplicitDiffusionSystem, StencilOperator

logger = logging.getLogger(__name__)

SCHEMES = ("semi", "explicit")
PREDATOR_DISPERSALS = ("ideal_free", "brownian")
IC_MODES = ("random_patches", "centered_patch", "uniform", "none")
MONITOR_NAMES = ("positivity", "host", "v_bound", "p_bound")
SERIES_COLUMNS = ["t", "supI", "supVi", "supVs", "supP", "intI", "intV", "intP"]


@dataclass
class State:
    """Densities per m^2 at time t, plus the running integral of V_i"""

    I: np.ndarray
    Vi: np.ndarray
    Vs: np.ndarray
    P: np.ndarray
    t: float = 0.0
    cumVi: Optional[np.ndarray] = None

    def __post_init__(self):
        self.I = np.asarray(self.I, dtype=float)
        self.Vi = np.asarray(self.Vi, dtype=float)
        self.Vs = np.asarray(self.Vs, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        shapes = {self.I.shape, self.Vi.shape, self.Vs.shape, self.P.shape}
        if len(shapes) != 1:
            raise ConfigError(f"State fields have mismatched shapes: {sorted(shapes)}")
        if self.cumVi is None:
            self.cumVi = np.zeros_like(self.Vi)

    @property
    def V(self) -> np.ndarray:
        return self.Vi + self.Vs

    def copy(self) -> "State":
        return State(self.I.copy(), self.Vi.copy(), self.Vs.copy(), self.P.copy(),
                     self.t, self.cumVi.copy())

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {"I": self.I, "Vi": self.Vi, "Vs": self.Vs, "P": self.P, "cumVi": self.cumVi}


@dataclass(frozen=True)
class InitialCondition:
    """
    Recipe for the initial state

    I starts at zero. Aphid densities are vi0_factor and vs0_factor times the
    field carrying capacity rV_field / s_V, placed on the patch layout, on the
    frequency-1 refuge square, or uniformly. Predators start at p0_scale
    times their equilibrium r_P / s_P.
    """

    mode: str = "random_patches"
    layout: Optional[PatchSpec] = None
    vi0_factor: float = 0.01
    vs0_factor: float = 0.09
    total_area: Optional[float] = None
    p0_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in IC_MODES:
            raise ConfigError(f"Unknown initial condition mode {self.mode!r}, expected one of {IC_MODES}")
        if self.mode == "random_patches" and self.layout is None:
            raise ConfigError("Initial condition 'random_patches' needs a patch layout")
        if self.mode == "centered_patch" and not self.total_area:
            raise ConfigError("Initial condition 'centered_patch' needs the refuge area")
        for name in ("vi0_factor", "vs0_factor", "p0_scale"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be finite and nonnegative, got {value}")


def build_initial_state(fields: CoefficientFields, params: ModelParams,
                        ic: InitialCondition) -> State:
    grid = fields.grid
    capacity = params.field_carrying_capacity
    if ic.mode == "random_patches":
        shape = patches_field(grid, ic.layout)
    elif ic.mode == "centered_patch":
        shape = patches_field(grid, frequency_square_patch(ic.total_area))
    elif ic.mode == "uniform":
        shape = grid.full(1.0)
    else:
        shape = grid.zeros()
    return State(I=grid.zeros(),
                 Vi=ic.vi0_factor * capacity * shape,
                 Vs=ic.vs0_factor * capacity * shape,
                 P=ic.p0_scale * predator_equilibrium(fields, params))


@dataclass(frozen=True)
class MonitorConfig:
    strictness: str = "abort"
    tolerance: float = 1e-6
    clamp_fraction: float = 1e-8
    enabled: FrozenSet[str] = frozenset(MONITOR_NAMES)

    def __post_init__(self):
        if self.strictness not in ("warn", "abort"):
            raise ConfigError(f"Monitor strictness must be 'warn' or 'abort', got {self.strictness!r}")
        unknown = set(self.enabled) - set(MONITOR_NAMES)
        if unknown:
            raise ConfigError(f"Unknown monitor(s): {sorted(unknown)}")
        object.__setattr__(self, "enabled", frozenset(self.enabled))


@dataclass
class MonitorReport:
    """Accumulated invariant diagnostics of a run"""

    clamp_mass: float = 0.0
    solver_clamp_mass: float = 0.0
    reference_mass: float = 0.0
    max_v_ratio: float = 0.0
    max_p_ratio: float = 0.0
    max_predator_drift: float = 0.0
    breaches: Dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.breaches

    def to_dict(self) -> Dict[str, object]:
        return {"clamp_mass": self.clamp_mass, "solver_clamp_mass": self.solver_clamp_mass,
                "reference_mass": self.reference_mass, "max_v_ratio": self.max_v_ratio,
                "max_p_ratio": self.max_p_ratio, "max_predator_drift": self.max_predator_drift,
                "ok": self.ok, "breaches": dict(self.breaches)}


@dataclass
class Scenario:
    """Everything a run needs: coefficients, constants, initial state and stepping controls"""

    fields: CoefficientFields
    params: ModelParams
    initial: State
    T: float
    dt: float
    monitors: MonitorConfig = field(default_factory=MonitorConfig)
    snapshot_stride: int = 0
    scheme: str = "semi"
    face_average: str = "arithmetic"
    predator_dispersal: str = "ideal_free"
    solver_tol: float = 1e-10

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"Time step must be positive, got dt={self.dt}")
        if not (math.isfinite(self.T) and self.T >= self.dt * (1 - 1e-12)):
            raise ConfigError(f"Horizon must satisfy T >= dt, got T={self.T}, dt={self.dt}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"Unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.face_average not in FACE_AVERAGES:
            raise ConfigError(f"Unknown face average {self.face_average!r}")
        if self.predator_dispersal not in PREDATOR_DISPERSALS:
            raise ConfigError(f"Unknown predator dispersal {self.predator_dispersal!r}, "
                              f"expected one of {PREDATOR_DISPERSALS}")
        if self.snapshot_stride < 0:
            raise ConfigError(f"Snapshot stride must be >= 0, got {self.snapshot_stride}")
        grid = self.fields.grid
        for name, values in self.initial.as_dict().items():
            grid.check_field(values, f"initial {name}")
            if np.any(values < 0) or not np.all(np.isfinite(values)):
                raise ConfigError(f"Initial {name} must be finite and nonnegative")
        if np.any(self.initial.I != 0):
            raise ConfigError("Initial infected hosts must be identically zero")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    @cached_property
    def stepper(self) -> "SemiExplicitStepper":
        return SemiExplicitStepper(self)


def reaction_rates(I: np.ndarray, Vi: np.ndarray, Vs: np.ndarray, P: np.ndarray,
                   fields: CoefficientFields, params: ModelParams
                   ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Pointwise reaction terms (dI, dVi, dVs, dP) of the four-field system"""
    V = Vi + Vs
    loss = params.s_V * V + params.h * P
    infection = params.beta_HV * I * Vs
    dI = params.beta_VH * (fields.H - I) * Vi
    dVi = infection - (params.alpha + fields.d_V + loss) * Vi
    dVs = -infection + params.alpha * Vi - (fields.d_V + loss) * Vs + fields.b_V * V
    dP = params.gamma * params.h * V * P + fields.r_P * P - params.s_P * P ** 2
    return dI, dVi, dVs, dP


def _clamp(values: np.ndarray, cell_area: float) -> Tuple[np.ndarray, float]:
    negative = np.minimum(values, 0.0)
    mass = float(-negative.sum() * cell_area)
    if mass > 0:
        values = np.maximum(values, 0.0)
    return values, mass


class SemiExplicitStepper:
    """Advances a State by one time step of a Scenario"""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        fields, params = scenario.fields, scenario.params
        grid = fields.grid
        self.vector_op = StencilOperator.laplacian(grid, params.sigma_V)
        if scenario.predator_dispersal == "ideal_free":
            self.predator_scale = np.asarray(fields.r_P, dtype=float)
            self.predator_op = StencilOperator.conductive(grid, fields.r_P, params.sigma_P,
                                                          scenario.face_average)
        else:
            self.predator_scale = np.ones(grid.shape)
            self.predator_op = StencilOperator.laplacian(grid, params.sigma_P)
        self._systems: Dict[float, Tuple[ImplicitDiffusionSystem, ImplicitDiffusionSystem]] = {}
        if scenario.scheme == "explicit":
            limit = self.cfl_limit()
            if scenario.dt > limit:
                raise ConfigError(
                    f"Explicit scheme is unstable: dt={scenario.dt:.6g} exceeds the CFL bound "
                    f"{limit:.6g} days")

    def cfl_limit(self) -> float:
        """Largest stable explicit step, 1 / max diagonal rate of both diffusion updates"""
        rate = max(self.vector_op.max_explicit_rate(),
                   self.predator_op.max_explicit_rate(self.predator_scale))
        return math.inf if rate == 0 else 1.0 / rate

    def _systems_for(self, dt: float):
        if dt not in self._systems:
            tol = self.scenario.solver_tol
            self._systems[dt] = (
                ImplicitDiffusionSystem(self.vector_op, dt, tol=tol),
                ImplicitDiffusionSystem(self.predator_op, dt, mass=self.predator_scale, tol=tol),
            )
        return self._systems[dt]

    def step(self, state: State, dt: Optional[float] = None) -> Tuple[State, Dict[str, float]]:
        """
        One step of length dt (scenario dt by default)

        Returns:
            (new state, clamp masses) where clamps["reaction"] is the mass removed
            from the explicit reaction update and clamps["solver"] the mass removed
            after the diffusion solves
        """
        scenario = self.scenario
        fields, params = scenario.fields, scenario.params
        dt = scenario.dt if dt is None else dt
        area = fields.grid.cell_area

        dI, dVi, dVs, dP = reaction_rates(state.I, state.Vi, state.Vs, state.P, fields, params)
        I_new = np.clip(state.I + dt * dI, 0.0, fields.H)
        Vi_star, c1 = _clamp(state.Vi + dt * dVi, area)
        Vs_star, c2 = _clamp(state.Vs + dt * dVs, area)
        P_star, c3 = _clamp(state.P + dt * dP, area)

        if scenario.scheme == "semi":
            vector_system, predator_system = self._systems_for(dt)
            Vi_new = vector_system.solve(Vi_star)
            Vs_new = vector_system.solve(Vs_star)
            P_tilde = predator_system.solve(P_star, x0=state.P / self.predator_scale)
            P_new = self.predator_scale * P_tilde
        else:
            Vi_new = Vi_star + dt * self.vector_op.apply(state.Vi)
            Vs_new = Vs_star + dt * self.vector_op.apply(state.Vs)
            P_new = P_star + dt * self.predator_op.apply(state.P / self.predator_scale)

        Vi_new, s1 = _clamp(Vi_new, area)
        Vs_new, s2 = _clamp(Vs_new, area)
        P_new, s3 = _clamp(P_new, area)
        cumVi = state.cumVi + 0.5 * dt * (state.Vi + Vi_new)
        new_state = State(I_new, Vi_new, Vs_new, P_new, state.t + dt, cumVi)
        return new_state, {"reaction": c1 + c2 + c3, "solver": s1 + s2 + s3}


def step(state: State, scenario: Scenario) -> State:
    """One semi-explicit (or explicit) step of the scenario"""
    return scenario.stepper.step(state)[0]


class InvariantMonitor:
    """Checks positivity, host monotonicity and the V and P supersolution bounds after every step"""

    def __init__(self, scenario: Scenario):
        self.config = scenario.monitors
        self.fields = scenario.fields
        self.params = scenario.params
        self.ideal_free = scenario.predator_dispersal == "ideal_free"
        initial = scenario.initial
        grid = self.fields.grid
        r_P = np.asarray(self.fields.r_P)
        self.v0 = float(initial.V.max())
        self.r_V_max = float(np.max(self.fields.r_V))
        self.v_cap = max(self.v0, self.r_V_max / self.params.s_V)
        # explicit Euler companion of the logistic bound, for the explicit reaction step
        self.v_euler = self.v0
        growth = self.params.gamma * self.params.h * self.v_cap
        if self.ideal_free:
            self.p_cap = max(float(np.max(initial.P / r_P)),
                             (1.0 + growth / float(r_P.min())) / self.params.s_P)
        else:
            self.p_cap = max(float(initial.P.max()), (float(r_P.max()) + growth) / self.params.s_P)
        self.equilibrium = predator_equilibrium(self.fields, self.params)
        self.report = MonitorReport(reference_mass=grid.integrate(initial.V + initial.P))

    def v_bound(self, t: float) -> float:
        """Logistic supersolution for sup V at time t, never above v_cap"""
        exact = float(logistic_supersolution(self.v0, self.r_V_max, self.params.s_V, t))
        return min(max(exact, self.v_euler), self.v_cap)

    def _breach(self, name: str, message: str) -> None:
        first = name not in self.report.breaches
        self.report.breaches.setdefault(name, message)
        if self.config.strictness == "abort":
            raise MonitorAbort(message, self.report)
        if first:
            logger.warning("Monitor %s breached: %s", name, message)

    def check(self, old: State, new: State, clamps: Dict[str, float]) -> None:
        report, config = self.report, self.config
        grid = self.fields.grid
        report.clamp_mass += clamps["reaction"]
        report.solver_clamp_mass += clamps["solver"]
        report.reference_mass = max(report.reference_mass, grid.integrate(new.V + new.P))
        p_ratio_field = new.P / self.fields.r_P if self.ideal_free else new.P
        w, dt = self.v_euler, new.t - old.t
        self.v_euler = w + dt * (self.r_V_max * w - self.params.s_V * w * w)
        sup_v = float(new.V.max())
        v_bound = self.v_bound(new.t)
        if v_bound > 0:
            v_ratio = sup_v / v_bound
        else:
            v_ratio = 0.0 if sup_v == 0 else math.inf
        report.max_v_ratio = max(report.max_v_ratio, v_ratio)
        report.max_p_ratio = max(report.max_p_ratio, float(p_ratio_field.max()) / self.p_cap)
        report.max_predator_drift = max(report.max_predator_drift,
                                        float(np.max(np.abs(new.P - self.equilibrium))))
        limit = 1.0 + config.tolerance

        if "positivity" in config.enabled and \
                report.clamp_mass > config.clamp_fraction * max(report.reference_mass, 1e-300):
            self._breach("positivity",
                         f"clamp mass {report.clamp_mass:.3e} exceeds {config.clamp_fraction:g} of the "
                         f"field integral {report.reference_mass:.3e} at t={new.t:.6g}; reduce dt")
        if "host" in config.enabled:
            if np.any(new.I < old.I) or np.any(new.I < 0) or np.any(new.I > self.fields.H):
                self._breach("host", f"infected hosts left [I_old, H] at t={new.t:.6g}")
        if "v_bound" in config.enabled and v_ratio > limit:
            self._breach("v_bound",
                         f"sup V = {sup_v:.6g} exceeds the logistic supersolution bound "
                         f"{v_bound:.6g} at t={new.t:.6g}")
        if "p_bound" in config.enabled and report.max_p_ratio > limit:
            self._breach("p_bound",
                         f"predator density exceeds the supersolution bound "
                         f"(ratio {report.max_p_ratio:.6g}) at t={new.t:.6g}")


@dataclass
class RunSummary:
    scenario: Scenario
    initial: State
    final: State
    series: pd.DataFrame
    monitor: MonitorReport
    snapshots: List[State]
    n_steps: int


def _series_row(state: State, grid) -> Dict[str, float]:
    return {
        "t": state.t,
        "supI": float(state.I.max()),
        "supVi": float(state.Vi.max()),
        "supVs": float(state.Vs.max()),
        "supP": float(state.P.max()),
        "intI": grid.integrate(state.I),
        "intV": grid.integrate(state.V),
        "intP": grid.integrate(state.P),
        "infVi": float(state.Vi.min()),
        "supV": float(state.V.max()),
        "intVi": grid.integrate(state.Vi),
    }


def run(scenario: Scenario) -> RunSummary:
    """
    Step the scenario from t = 0 to t = T

    The last step is shortened when T is not a multiple of dt. Snapshots are
    kept every snapshot_stride steps (plus the initial and final state).
    """
    grid = scenario.fields.grid
    stepper = scenario.stepper
    monitor = InvariantMonitor(scenario)
    n_steps = scenario.n_steps
    state = scenario.initial.copy()
    rows = [_series_row(state, grid)]
    snapshots = [state.copy()]
    logger.info("Running %d steps of dt=%.6g to T=%.6g (%s scheme)",
                n_steps, scenario.dt, scenario.T, scenario.scheme)
    for k in range(1, n_steps + 1):
        dt = scenario.dt if k < n_steps else scenario.T - (n_steps - 1) * scenario.dt
        new_state, clamps = stepper.step(state, dt)
        new_state.t = scenario.T if k == n_steps else k * scenario.dt
        monitor.check(state, new_state, clamps)
        state = new_state
        rows.append(_series_row(state, grid))
        stride = scenario.snapshot_stride
        if k == n_steps or (stride and k % stride == 0):
            snapshots.append(state.copy())
    logger.info("Run finished at t=%.6g: sup V=%.6g, monitors %s", state.t, float(state.V.max()),
                "ok" if monitor.report.ok else "breached")
    series = pd.DataFrame(rows)
    return RunSummary(scenario, scenario.initial.copy(), state, series, monitor.report,
                      snapshots, n_steps)


def closed_form_I(H: np.ndarray, cumVi: np.ndarray, beta_VH: float) -> np.ndarray:
    """Infected hosts from the running integral of V_i: H (1 - exp(-beta_VH cumVi))"""
    cumVi = np.asarray(cumVi, dtype=float)
    if np.any(cumVi < 0):
        raise ConfigError("Running integral of V_i must be nonnegative")
    return np.asarray(H, dtype=float) * -np.expm1(-beta_VH * cumVi)


def fit_decay_rate(series: pd.Series, window: Sequence[float]) -> float:
    """
    Exponential decay rate of a positive series over a time window

    Args:
        series: values indexed by time
        window: (t_start, t_end), inclusive

    Returns:
        minus the least-squares slope of log(series) against time
    """
    t0, t1 = window
    if not t1 > t0:
        raise ConfigError(f"Decay window must have t_end > t_start, got {window}")
    times = np.asarray(series.index, dtype=float)
    values = np.asarray(series.values, dtype=float)
    inside = (times >= t0) & (times <= t1)
    if inside.sum() < 2:
        raise ConfigError(f"Decay window {window} holds fewer than two samples")
    if np.any(values[inside] <= 0):
        raise ConfigError(f"Series is not positive on the decay window {window}")
    log_values = np.log(values[inside])
    if np.all(log_values == log_values[0]):
        return 0.0
    slope = np.polyfit(times[inside], log_values, 1)[0]
    return float(-slope)


def logistic_supersolution(v0: float, r: float, s: float, t) -> np.ndarray:
    """Solution of V' = r V - s V^2 from v0, evaluated at times t"""
    t = np.asarray(t, dtype=float)
    if v0 <= 0:
        return np.zeros_like(t)
    capacity = r / s
    growth = np.exp(r * t)
    return capacity * v0 * growth / (capacity + v0 * (growth - 1.0))


def integrate_homogeneous(params: ModelParams, y0: Sequence[float], T: float,
                          t_eval: Optional[Sequence[float]] = None,
                          refuge: float = 0.0) -> pd.DataFrame:
    """
    Reference solve of the spatially homogeneous system

    Args:
        params: model constants
        y0: initial (I, V_i, V_s, P)
        T: horizon in days
        t_eval: output times (default: 201 evenly spaced)
        refuge: uniform refuge density setting r_V, r_P and H

    Returns:
        DataFrame with columns t, I, Vi, Vs, P
    """
    r_V = params.rV_field + params.rV_refuge * refuge
    r_P = params.rP_field + params.rP_refuge * refuge
    H = params.H_field * (1.0 - refuge)
    d_V = params.d_V_const
    b_V = r_V + d_V

    def rhs(_t, y):
        I, Vi, Vs, P = y
        V = Vi + Vs
        loss = params.s_V * V + params.h * P
        infection = params.beta_HV * I * Vs
        return [params.beta_VH * (H - I) * Vi,
                infection - (params.alpha + d_V + loss) * Vi,
                -infection + params.alpha * Vi - (d_V + loss) * Vs + b_V * V,
                params.gamma * params.h * V * P + r_P * P - params.s_P * P ** 2]

    if t_eval is None:
        t_eval = np.linspace(0.0, T, 201)
    solution = solve_ivp(rhs, (0.0, T), list(y0), method="DOP853", t_eval=t_eval,
                         rtol=1e-11, atol=1e-12)
    if not solution.success:
        raise SolverError(f"Reference ODE solve failed: {solution.message}")
    return pd.DataFrame({"t": solution.t, "I": solution.y[0], "Vi": solution.y[1],
                         "Vs": solution.y[2], "P": solution.y[3]})
