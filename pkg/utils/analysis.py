"""Harvest functional, long-time envelopes and regime verdicts for finished runs."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional

import numpy as np
import pandas as pd

from .coefficients import CoefficientFields, ModelParams, predator_equilibrium
from .dynamics import RunSummary, State, fit_decay_rate
from .errors import ConfigError
from .spectral import SpectralResult, lambda1_Vi, lambda1_Vs

logger = logging.getLogger(__name__)

DEFAULT_ENVELOPE_SLACK = 0.05


@dataclass
class HarvestReport:
    """Healthy-beet count at the horizon with a bound on the infections still to come"""

    harvest: float
    total_hosts: float
    ratio: float
    tail_bound: float
    lower: Optional[float] = None
    upper: Optional[float] = None

    @property
    def tail_ratio(self) -> float:
        if self.total_hosts <= 0:
            return 0.0
        return self.tail_bound / self.total_hosts

    def within_sandwich(self) -> Optional[bool]:
        if self.lower is None or self.upper is None:
            return None
        slack = self.tail_ratio
        return self.lower - slack <= self.ratio <= self.upper + slack

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {"harvest": self.harvest, "total_hosts": self.total_hosts,
                "healthy_fraction": self.ratio, "tail_bound": self.tail_bound,
                "lower": self.lower, "upper": self.upper}

    def to_text(self) -> str:
        lines = []
        for key, value in self.to_dict().items():
            lines.append(f"{key} = {'n/a' if value is None else format(value, '.10g')}")
        return "\n".join(lines) + "\n"


def harvest(final: State, fields: CoefficientFields, params: ModelParams,
            decay: Optional[float] = None) -> HarvestReport:
    """
    Healthy beets at the end of a run

    Args:
        final: state at the horizon T
        fields: coefficient fields of the run
        params: model constants (beta_VH enters the tail bound)
        decay: fitted decay rate of sup V_i, if known

    Returns:
        HarvestReport; tail_bound bounds the infections after T and is
        infinite when no positive decay rate is available
    """
    grid = fields.grid
    total = fields.total_hosts()
    value = grid.integrate(fields.H - final.I)
    ratio = value / total if total > 0 else 0.0
    sup_vi = float(final.Vi.max())
    if sup_vi == 0.0:
        tail = 0.0
    elif decay is not None and decay > 0:
        tail = total * params.beta_VH * sup_vi / decay
    else:
        tail = math.inf
    return HarvestReport(harvest=value, total_hosts=total, ratio=ratio, tail_bound=tail)


def late_decay_rate(run: RunSummary, column: str = "supVi", fraction: float = 0.25) -> Optional[float]:
    """Decay rate fitted on the last fraction of the run, None when the series is not positive there"""
    series = run.series.set_index("t")[column]
    t_end = float(series.index[-1])
    window = (t_end * (1.0 - fraction), t_end)
    try:
        return fit_decay_rate(series, window)
    except ConfigError:
        return None


def harvest_series(run: RunSummary) -> pd.DataFrame:
    """Harvest at every snapshot of a run, columns t and harvest"""
    fields = run.scenario.fields
    rows = [{"t": snap.t, "harvest": fields.grid.integrate(fields.H - snap.I)}
            for snap in run.snapshots]
    return pd.DataFrame(rows, columns=["t", "harvest"])


class HarvestBounds(NamedTuple):
    lower: float
    upper: float


def default_eps(lambda_s: float, params: ModelParams) -> float:
    return 0.5 * lambda_s / params.h


def corollary_bounds(fields: CoefficientFields, params: ModelParams, V0_sup: float,
                     Vi0_inf: float, eps: float, P0_dev: Optional[float] = None,
                     spectra: Optional[Dict[str, SpectralResult]] = None) -> HarvestBounds:
    """
    Sandwich on the long-time healthy fraction for well-prepared initial data

    lower = exp(-beta_VH V0_sup max phi_s / (lambda_s - h eps))
    upper = exp(-beta_VH Vi0_inf min phi_i / (lambda_i + s_V eps + h eps))

    Args:
        fields, params: the scenario coefficients
        V0_sup: sup of the initial total aphid density
        Vi0_inf: inf of the initial infected aphid density
        eps: preparation level, with lambda_s - h eps > 0
        P0_dev: sup |P0 - r_P / s_P|, checked against eps when given
        spectra: precomputed {"Vs": ..., "Vi": ...} eigenpairs

    Returns:
        HarvestBounds(lower, upper)
    """
    spectra = spectra or {}
    s_result = spectra.get("Vs") or lambda1_Vs(fields, params)
    i_result = spectra.get("Vi") or lambda1_Vi(fields, params)
    margin = s_result.lambda1 - params.h * eps
    if not (eps > 0 and margin > 0):
        raise ConfigError(
            f"eps={eps:.6g} violates lambda_1(L_Vs) - h eps > 0 "
            f"(lambda_1 = {s_result.lambda1:.6g}, h = {params.h:.6g})")
    if V0_sup < 0 or Vi0_inf < 0:
        raise ConfigError("Initial aphid densities must be nonnegative")
    if V0_sup > eps * (1 + 1e-12):
        raise ConfigError(f"Initial data is not well prepared: sup V0 = {V0_sup:.6g} > eps = {eps:.6g}")
    if P0_dev is not None and P0_dev > eps * (1 + 1e-12):
        raise ConfigError(
            f"Initial data is not well prepared: sup |P0 - r_P/s_P| = {P0_dev:.6g} > eps = {eps:.6g}")
    kappa = i_result.lambda1 + params.s_V * eps + params.h * eps
    lower = math.exp(-params.beta_VH * V0_sup * s_result.phi_max / margin)
    upper = math.exp(-params.beta_VH * Vi0_inf * i_result.phi_min / kappa)
    return HarvestBounds(lower, upper)


@dataclass
class EnvelopeReport:
    """Snapshot-by-snapshot comparison of a run with the extinction estimates"""

    applicable: bool
    message: str
    table: pd.DataFrame = field(default_factory=pd.DataFrame)
    slack: float = DEFAULT_ENVELOPE_SLACK
    worst_v: float = math.nan
    worst_i_upper: float = math.nan
    worst_i_lower: float = math.nan

    @property
    def holds(self) -> bool:
        if not self.applicable:
            return False
        return max(self.worst_v, self.worst_i_upper, self.worst_i_lower) <= self.slack

    def to_dict(self) -> Dict[str, object]:
        return {"applicable": self.applicable, "message": self.message, "slack": self.slack,
                "worst_v": self.worst_v, "worst_i_upper": self.worst_i_upper,
                "worst_i_lower": self.worst_i_lower, "holds": self.holds}


def _exposure(rate: float, t: np.ndarray) -> np.ndarray:
    """Integral of exp(-rate s) over [0, t]"""
    return -np.expm1(-rate * t) / rate


def theorem_envelope(fields: CoefficientFields, params: ModelParams, run: RunSummary,
                     eps: Optional[float] = None,
                     slack: float = DEFAULT_ENVELOPE_SLACK) -> EnvelopeReport:
    """
    Check the exponential extinction estimates at every snapshot

    With lambda_s = lambda_1(L_Vs) > 0 and well-prepared data:
        sup V(t)       <= sup V0 max phi_s exp(-(lambda_s - h eps) t)
        I/H            <= 1 - exp(-beta_VH sup V0 max phi_s E(lambda_s - h eps, t))
        I/H            >= 1 - exp(-beta_VH inf Vi0 min phi_i E(lambda_i + s_V eps + h eps, t))
    where E(k, t) = (1 - exp(-k t)) / k. Worst values are reported as relative
    excess over the bound (negative when the bound holds with margin).
    """
    if not np.any(fields.H > 0):
        message = "not applicable: no hosts"
        logger.warning("Envelope check %s", message)
        return EnvelopeReport(False, message, slack=slack)
    s_result = lambda1_Vs(fields, params)
    lambda_s = s_result.lambda1
    if lambda_s <= 0:
        message = f"not applicable: lambda_1(L_Vs) = {lambda_s:.6g} is not positive (no extinction)"
        logger.warning("Envelope check %s", message)
        return EnvelopeReport(False, message, slack=slack)
    eps = default_eps(lambda_s, params) if eps is None else eps
    initial = run.initial
    v0_sup = float(initial.V.max())
    p0_dev = float(np.max(np.abs(initial.P - predator_equilibrium(fields, params))))
    margin = lambda_s - params.h * eps
    if margin <= 0:
        message = f"not applicable: eps={eps:.6g} leaves lambda_1 - h eps = {margin:.6g} <= 0"
        logger.warning("Envelope check %s", message)
        return EnvelopeReport(False, message, slack=slack)
    if v0_sup > eps * (1 + 1e-12) or p0_dev > eps * (1 + 1e-12):
        message = (f"not applicable: initial data is not well prepared "
                   f"(sup V0 = {v0_sup:.6g}, sup |P0 - r_P/s_P| = {p0_dev:.6g}, eps = {eps:.6g})")
        logger.warning("Envelope check %s", message)
        return EnvelopeReport(False, message, slack=slack)

    i_result = lambda1_Vi(fields, params)
    kappa = i_result.lambda1 + params.s_V * eps + params.h * eps
    vi0_inf = float(initial.Vi.min())
    hosts = fields.H > 0

    times = np.array([snap.t for snap in run.snapshots])
    v_sup = np.array([float(snap.V.max()) for snap in run.snapshots])
    ratio_max = np.array([float(np.max(snap.I[hosts] / fields.H[hosts])) for snap in run.snapshots])
    ratio_min = np.array([float(np.min(snap.I[hosts] / fields.H[hosts])) for snap in run.snapshots])
    v_bound = v0_sup * s_result.phi_max * np.exp(-margin * times)
    i_upper = -np.expm1(-params.beta_VH * v0_sup * s_result.phi_max * _exposure(margin, times))
    i_lower = -np.expm1(-params.beta_VH * vi0_inf * i_result.phi_min * _exposure(kappa, times))

    def _excess(value, bound):
        return np.where(bound > 0, value / np.where(bound > 0, bound, 1.0) - 1.0,
                        np.where(value > 0, np.inf, -1.0))

    v_excess = _excess(v_sup, v_bound)
    upper_excess = _excess(ratio_max, i_upper)
    # for the lower bound the excess is the relative shortfall below it
    lower_excess = np.where(i_lower > 0, 1.0 - ratio_min / np.where(i_lower > 0, i_lower, 1.0), -1.0)
    table = pd.DataFrame({"t": times, "v_sup": v_sup, "v_bound": v_bound,
                          "i_ratio_max": ratio_max, "i_upper": i_upper,
                          "i_ratio_min": ratio_min, "i_lower": i_lower})
    if vi0_inf == 0:
        logger.warning("Envelope lower I/H bound is vacuous: inf V_i0 = 0")
    report = EnvelopeReport(True, "checked", table, slack,
                            float(v_excess.max()), float(upper_excess.max()), float(lower_excess.max()))
    report.message = (f"checked {len(times)} snapshots, eps={eps:.6g}: "
                      f"{'all bounds hold' if report.holds else 'bound violated'} within {slack:.0%}")
    return report


@dataclass
class PersistenceVerdict:
    applicable: bool
    persistent: bool
    inf_vi_after_burn_in: float
    infection_gap: float
    message: str

    def to_dict(self) -> Dict[str, object]:
        return {"applicable": self.applicable, "persistent": self.persistent,
                "inf_vi_after_burn_in": self.inf_vi_after_burn_in,
                "infection_gap": self.infection_gap, "message": self.message}


def persistence_check(run: RunSummary, tol: float = 1e-3, burn_in: Optional[float] = None,
                      threshold: float = 1e-2) -> PersistenceVerdict:
    """
    Verdict on disease persistence

    Persistent when inf V_i stays >= tol after the burn-in time and
    sup |I(T) - H| / sup H <= threshold at the horizon.
    """
    fields = run.scenario.fields
    if not np.any(run.initial.Vi > 0):
        return PersistenceVerdict(False, False, 0.0, math.nan,
                                  "not applicable: no infected aphids at t = 0")
    t_end = float(run.series["t"].iloc[-1])
    burn_in = 0.5 * t_end if burn_in is None else burn_in
    late = run.series[run.series["t"] >= burn_in]
    inf_vi = float(late["infVi"].min()) if len(late) else math.nan
    sup_H = float(fields.H.max())
    gap = float(np.max(np.abs(run.final.I - fields.H)) / sup_H) if sup_H > 0 else 0.0
    persistent = bool(inf_vi >= tol and gap <= threshold)
    message = (f"inf V_i after t={burn_in:.6g}: {inf_vi:.6g} (floor {tol:g}); "
               f"sup|I - H|/sup H at T: {gap:.3e} (threshold {threshold:g})")
    return PersistenceVerdict(True, persistent, inf_vi, gap, message)


def reports_table(reports: Dict[str, HarvestReport]) -> pd.DataFrame:
    """One CSV-ready row per scenario id"""
    rows = [{"scenario": key, **report.to_dict()} for key, report in reports.items()]
    return pd.DataFrame(rows)
