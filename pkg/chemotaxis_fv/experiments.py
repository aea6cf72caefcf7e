"""
experiments.py - Multi-run harnesses: mu sweeps with (ln mu / mu)^k scaling
fits, and grid / time step refinement studies
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, List, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import linregress

from chemotaxis_fv import config, diagnostics
from chemotaxis_fv.core import Grid2D, Parameters, ScalarField, State, make_initial
from chemotaxis_fv.discrete_ops import norm_lp, restrict
from chemotaxis_fv.errors import ChemotaxisError, DomainError
from chemotaxis_fv.solver import advance, run, stable_dt, step

if TYPE_CHECKING:
    from chemotaxis_fv.cli_io import RunConfig

logger = logging.getLogger(__name__)

# claim id, SweepRow metric, claimed exponent k in "metric <= C (ln mu / mu)^k"
CLAIMS = (
    ("cc2", "sup_l2_grad_w_sq", 1.0),
    ("mm0", "sup_linf_u", 1.0),
    ("v1", "sup_u_sq_plus_grad_w_4", 2.0),
    ("b1", "sup_l2_U", 1.5),
)
# metrics expected to fall with mu, up to this relative ripple
MONOTONE_METRICS = ("sup_linf_u", "sup_l2_grad_w_sq", "sup_l2_U")
MONOTONE_RIPPLE = 0.05
EXPONENT_SLACK = 0.25
RATIO_SLOPE_MAX = 0.1
MIN_SWEEP_ROWS = 4
MAX_REFINED_CELLS = 512
DEGENERATE_ERROR = 1e-13


@dataclass(frozen=True)
class SweepRow:
    """Sup of each tracked metric over the records after the mass-bound transient"""
    mu: float
    sup_linf_u: float = math.nan
    sup_l2_grad_w_sq: float = math.nan
    sup_l4_grad_w_4: float = math.nan
    sup_u_sq_plus_grad_w_4: float = math.nan
    sup_l2_U: float = math.nan
    sup_linf_grad_v_over_v: float = math.nan
    linf_u_at_transient: float = math.nan
    transient_t: float = math.nan
    fitted_decay_rate: float = math.nan
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


SWEEP_COLUMNS = ("mu", "sup_linf_u", "sup_l2_grad_w_sq", "sup_l4_grad_w_4", "sup_u_sq_plus_grad_w_4",
                 "sup_l2_U", "sup_linf_grad_v_over_v", "linf_u_at_transient", "transient_t",
                 "fitted_decay_rate", "error")


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    intercept: float
    r_squared: float
    rows_used: int
    # slope of log(metric / (ln mu / mu)^k) against log mu
    ratio_slope: float = math.nan
    claimed_exponent: float = math.nan

    @property
    def passed(self) -> bool:
        return (self.exponent >= self.claimed_exponent - EXPONENT_SLACK
                or self.ratio_slope <= RATIO_SLOPE_MAX)


@dataclass
class RefinementReport:
    cells: List[int]
    t_probe: float
    errors_u: List[float] = field(default_factory=list)
    errors_v: List[float] = field(default_factory=list)
    orders_u: List[float] = field(default_factory=list)
    orders_v: List[float] = field(default_factory=list)
    temporal_errors_u: List[float] = field(default_factory=list)
    temporal_errors_v: List[float] = field(default_factory=list)
    temporal_order_u: float = math.nan
    temporal_order_v: float = math.nan
    energy_residuals: List[float] = field(default_factory=list)
    w_gaps: List[float] = field(default_factory=list)
    notice: Optional[str] = None

    @property
    def degenerate(self) -> bool:
        return self.notice is not None


def _sweep_config(base: "RunConfig", mu: float) -> "RunConfig":
    """Same grid and IC shape, with u scaled to the carrying capacity r/mu"""
    return replace(base, mu=mu, u_base=base.r / mu)


def _sup_after(records, t0: float, value: Callable[[diagnostics.DiagnosticsRecord], float]) -> float:
    return max(value(rec) for rec in records if rec.t >= t0)


def _sweep_row(cfg: "RunConfig") -> SweepRow:
    try:
        p = cfg.parameters()
        result = run(cfg.initial_condition(), cfg.grid(), p, cfg.record_every, evolve_w=cfg.evolve_w,
                     upvq_exponents=cfg.upvq_exponents)
    except ChemotaxisError as e:
        logger.warning("sweep row mu=%g failed: %s", cfg.mu, e)
        return SweepRow(mu=cfg.mu, error=str(e))

    records = result.trajectory
    t0 = diagnostics.transient_time(records, diagnostics.mass_bound_predicate(p, cfg.grid().area))
    if t0 is None:
        return SweepRow(mu=cfg.mu, error="mass bound never settled")
    at_t0 = next(rec for rec in records if rec.t == t0)

    decay = math.nan
    tail = [rec for rec in records if rec.t >= t0]
    try:
        fit = diagnostics.fit_decay_rate([rec.t for rec in tail], [rec.linf_U for rec in tail],
                                         (t0, records[-1].t))
        decay = fit.rate
    except DomainError as e:
        logger.info("mu=%g: no decay fit (%s)", cfg.mu, e)

    return SweepRow(
        mu=cfg.mu,
        sup_linf_u=_sup_after(records, t0, lambda rec: rec.linf_u),
        sup_l2_grad_w_sq=_sup_after(records, t0, lambda rec: rec.l2_grad_w ** 2),
        sup_l4_grad_w_4=_sup_after(records, t0, lambda rec: rec.l4_grad_w ** 4),
        sup_u_sq_plus_grad_w_4=_sup_after(records, t0, lambda rec: rec.l2_u ** 2 + rec.l4_grad_w ** 4),
        sup_l2_U=_sup_after(records, t0, lambda rec: rec.l2_U),
        sup_linf_grad_v_over_v=_sup_after(records, t0, lambda rec: rec.linf_grad_v_over_v),
        linf_u_at_transient=at_t0.linf_u,
        transient_t=t0,
        fitted_decay_rate=decay,
    )


def mu_sweep(base_config: "RunConfig", mu_list: Sequence[float], n_jobs: Optional[int] = None) -> List[SweepRow]:
    """
    One run per mu; rows come back ordered by mu and a failed run becomes a
    row carrying its error text.

    Args:
        base_config: grid, IC and every parameter except mu
        mu_list: strictly increasing, positive, at least 4 values
        n_jobs: joblib workers, default from CHEMOTAXIS_SWEEP_JOBS
    """
    mus = [float(mu) for mu in mu_list]
    if len(mus) < MIN_SWEEP_ROWS:
        raise DomainError(f"mu_sweep needs at least {MIN_SWEEP_ROWS} values of mu, got {len(mus)}")
    if any(mu <= 0 for mu in mus):
        raise DomainError("mu values must be > 0")
    if any(b <= a for a, b in zip(mus, mus[1:])):
        raise DomainError("mu values must be strictly increasing")

    jobs = config.get_sweep_jobs() if n_jobs is None else n_jobs
    configs = [_sweep_config(base_config, mu) for mu in mus]
    logger.info("sweeping %d values of mu with %d job(s)", len(mus), jobs)
    rows = Parallel(n_jobs=jobs)(delayed(_sweep_row)(cfg) for cfg in configs)
    return sorted(rows, key=lambda row: row.mu)


def _selector(metric: Union[str, Callable[[SweepRow], float]]) -> Callable[[SweepRow], float]:
    if callable(metric):
        return metric
    if metric not in SWEEP_COLUMNS:
        raise DomainError(f"unknown sweep metric {metric!r}")
    return lambda row: getattr(row, metric)


def scaling_fit(rows: Sequence[SweepRow], metric_selector: Union[str, Callable[[SweepRow], float]],
                claimed_exponent: float) -> ScalingFit:
    """Least squares of log(metric) against log(ln mu / mu) over the successful rows"""
    select = _selector(metric_selector)
    used = [row for row in rows if row.ok]
    if len(used) < MIN_SWEEP_ROWS:
        raise DomainError(f"scaling_fit needs {MIN_SWEEP_ROWS} successful rows, got {len(used)}")
    mu = np.array([row.mu for row in used])
    metric = np.array([select(row) for row in used], dtype=float)
    if np.any(~np.isfinite(metric)) or np.any(metric <= 0):
        raise DomainError("scaling_fit needs a positive finite metric on every row")
    if np.any(mu <= 1):
        raise DomainError("scaling_fit needs mu > 1 so that ln(mu)/mu > 0")

    law = np.log(np.log(mu) / mu)
    log_metric = np.log(metric)
    fit = linregress(law, log_metric)
    ratio = linregress(np.log(mu), log_metric - claimed_exponent * law)
    return ScalingFit(exponent=float(fit.slope), intercept=float(fit.intercept),
                      r_squared=float(fit.rvalue ** 2), rows_used=len(used),
                      ratio_slope=float(ratio.slope), claimed_exponent=claimed_exponent)


def nonincreasing_in_mu(rows: Sequence[SweepRow], metric: str, ripple: float = MONOTONE_RIPPLE) -> bool:
    values = [getattr(row, metric) for row in rows if row.ok]
    return all(b <= a * (1.0 + ripple) for a, b in zip(values, values[1:]))


def observed_orders(errors: Sequence[float], ratio: float = 2.0) -> List[float]:
    """log_ratio(e_k / e_{k+1}) for consecutive errors; nan where an error vanishes"""
    orders = []
    for coarse, fine in zip(errors, errors[1:]):
        if coarse > 0 and fine > 0:
            orders.append(math.log(coarse / fine) / math.log(ratio))
        else:
            orders.append(math.nan)
    return orders


def _fixed_dt(t_probe: float, cap: float) -> float:
    """Largest dt <= cap that divides t_probe into whole steps"""
    return t_probe / math.ceil(t_probe / cap * (1.0 - 1e-12))


def _level_dt(g: Grid2D, p: Parameters) -> float:
    """Half the diffusive limit h^2/8, scaled by the CFL safety factor"""
    return 0.5 * p.cfl_safety * g.h ** 2 / 8.0


def _diff(a: ScalarField, b: ScalarField) -> float:
    return norm_lp(ScalarField(a.grid, a.values - b.values), 2)


def _w_gap(s: State) -> float:
    """Max distance between the evolved w and -ln(v / v0_sup)"""
    gap = s.w_evolved.values - diagnostics.w_from_v(s.v, s.v0_sup).values
    return float(np.max(np.abs(gap)))


def refinement_study(base_config: "RunConfig", levels: int,
                     state_factory: Optional[Callable[[Grid2D, Parameters], State]] = None,
                     t_probe: Optional[float] = None) -> RefinementReport:
    """
    Self-convergence of the scheme.

    Spatial: grids n, 2n, ... all stepped with the finest grid's dt, each
    solution compared with the next finer one restricted by block averaging,
    so the differences carry no time stepping error.
    Temporal: the middle grid at its own dt, dt/2 and dt/4.
    The energy identity residual of each level is measured over a step
    proportional to that level's h^2, and with evolve_w the w gap of each
    level comes from a run on that level's own dt, also proportional to h^2.

    Args:
        base_config: coarsest grid, parameters and IC
        levels: number of grids, at least 3
        state_factory: builds the initial state on a grid, instead of the IC
        t_probe: comparison time, default t_end

    Returns:
        RefinementReport; spatial errors below 1e-13 at every level leave a
        degenerate notice
    """
    if levels < 3:
        raise DomainError(f"refinement_study needs levels >= 3, got {levels}")
    p = base_config.parameters()
    base = base_config.grid()
    factor = 2 ** (levels - 1)
    if max(base.nx, base.ny) * factor > MAX_REFINED_CELLS:
        raise DomainError(f"finest grid {base.nx * factor}x{base.ny * factor} exceeds "
                          f"{MAX_REFINED_CELLS}x{MAX_REFINED_CELLS}")
    t_probe = p.t_end if t_probe is None else t_probe
    if not t_probe > 0:
        raise DomainError("refinement_study needs a positive comparison time")

    def initial(g: Grid2D) -> State:
        s = state_factory(g, p) if state_factory is not None else make_initial(base_config.initial_condition(), g, p)
        return s.with_evolved_w() if base_config.evolve_w and s.w_evolved is None else s

    grids = [base.refined(2 ** k) for k in range(levels)]
    report = RefinementReport(cells=[g.nx for g in grids], t_probe=t_probe)
    dt_fine = _fixed_dt(t_probe, _level_dt(grids[-1], p))
    finals = []
    for g in grids:
        final, steps = advance(initial(g), p, t_probe, dt_cap=dt_fine)
        logger.info("refine %dx%d: %d steps of dt=%g", g.nx, g.ny, steps, dt_fine)
        finals.append(final)
        ahead, _ = step(final, p, min(_level_dt(g, p), stable_dt(final, p)))
        report.energy_residuals.append(diagnostics.energy_identity_residual(final, ahead, p))
        if final.w_evolved is not None:
            own = final if g is grids[-1] else advance(initial(g), p, t_probe,
                                                       dt_cap=_fixed_dt(t_probe, _level_dt(g, p)))[0]
            report.w_gaps.append(_w_gap(own))

    for coarse, fine in zip(finals, finals[1:]):
        report.errors_u.append(_diff(restrict(fine.u), coarse.u))
        report.errors_v.append(_diff(restrict(fine.v), coarse.v))

    middle = grids[1]
    dt0 = _fixed_dt(t_probe, _level_dt(middle, p))
    timed = [advance(initial(middle), p, t_probe, dt_cap=dt0 / 2 ** k)[0] for k in range(3)]
    for a, b in zip(timed, timed[1:]):
        report.temporal_errors_u.append(_diff(a.u, b.u))
        report.temporal_errors_v.append(_diff(a.v, b.v))

    def orders(errors: List[float]) -> List[float]:
        if max(errors) < DEGENERATE_ERROR:
            return [math.nan] * (len(errors) - 1)
        return observed_orders(errors)

    report.orders_u = orders(report.errors_u)
    report.orders_v = orders(report.errors_v)
    report.temporal_order_u = orders(report.temporal_errors_u)[0]
    report.temporal_order_v = orders(report.temporal_errors_v)[0]
    if max(report.errors_u + report.errors_v) < DEGENERATE_ERROR:
        report.notice = "spatial errors at rounding level: the solution is uniform in space on every grid"
        logger.info(report.notice)
    return report


def spatial_order(report: RefinementReport) -> float:
    """Order on the two finest grids: v's order, or u's when v is degenerate"""
    for orders in (report.orders_v, report.orders_u):
        if orders and not math.isnan(orders[-1]):
            return orders[-1]
    return math.nan


def temporal_order(report: RefinementReport) -> float:
    for order in (report.temporal_order_v, report.temporal_order_u):
        if not math.isnan(order):
            return order
    return math.nan

