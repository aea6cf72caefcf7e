"""
diagnostics.py - Functionals tracked along a run: masses and norms, the energy
F = int G(u) + 1/2 int |grad w|^2 with its dissipation budget, the ODI check,
Gagliardo-Nirenberg ratio witnesses and decay-rate fits
"""

import logging
import math
from dataclasses import dataclass, fields
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import linregress

from chemotaxis_fv.config import U_FLOOR_FACTOR
from chemotaxis_fv.core import Parameters, ScalarField, State, big_g_field, g_prime_field
from chemotaxis_fv.discrete_ops import (
    face_velocity, grad_arrays, grad_norm_linf, grad_norm_lp, grad_sq_array, lap_array, norm_linf, norm_lp,
    upwind_flux_arrays, velocity_arrays,
)
from chemotaxis_fv.errors import ContractError, DegenerateInputError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass_u: float
    l2_u: float
    linf_u: float
    min_u: float
    mass_ode_residual: float
    linf_U: float
    l2_U: float
    linf_v: float
    min_v: float
    l2_grad_w: float
    l4_grad_w: float
    linf_grad_w: float
    linf_grad_v_over_v: float
    energy_F: float
    energy_identity_residual: float
    gn1_ratio: Optional[float]
    gn2_ratio: Optional[float]
    upvq: Optional[float]
    dt_last: float


CSV_COLUMNS = tuple(f.name for f in fields(DiagnosticsRecord))
OPTIONAL_COLUMNS = ("gn1_ratio", "gn2_ratio", "upvq")


@dataclass(frozen=True)
class EnergyBudget:
    """
    Terms of dF/dt evaluated with the discrete operators.

    rhs = -grad_u_over_s - lap_w_sq + cubic + cross_work - logistic, where
    cross_work vanishes in the continuum and measures the upwind flux error.
    """
    grad_u_over_s: float
    lap_w_sq: float
    cubic: float
    cross_work: float
    logistic: float
    excluded_cells: int

    @property
    def rhs(self) -> float:
        return -self.grad_u_over_s - self.lap_w_sq + self.cubic + self.cross_work - self.logistic


@dataclass(frozen=True)
class OdiReport:
    hypothesis_ok: bool
    monotone_ok: bool
    budget_ok: bool
    worst_violation: float


@dataclass(frozen=True)
class DecayFit:
    rate: float
    prefactor: float
    r_squared: float
    window: Tuple[float, float]


def integral_u(s: State) -> float:
    return float(np.sum(s.u.values)) * s.grid.h ** 2


def w_from_v(v: ScalarField, v0_sup: float) -> ScalarField:
    """w = -ln(v / v0_sup); >= 0 whenever v <= v0_sup"""
    if np.min(v.values) <= 0:
        raise DomainError("w_from_v needs v > 0")
    v_max = float(np.max(v.values))
    if v_max > v0_sup * (1.0 + 1e-12):
        logger.warning("v exceeds its initial sup (%r > %r); the max bound was violated upstream",
                       v_max, v0_sup)
    return ScalarField(v.grid, -np.log(v.values / v0_sup))


def energy(s: State, p: Parameters) -> float:
    w = w_from_v(s.v, s.v0_sup)
    h2 = s.grid.h ** 2
    return float(np.sum(big_g_field(s.u.values, p))) * h2 + 0.5 * grad_norm_lp(w, 2) ** 2


def energy_budget(s: State, p: Parameters) -> EnergyBudget:
    """
    The right-hand side of the energy identity at state s.

    Cells with u below 1e-12 r/mu are left out of the terms that involve
    1/S or g'(u), and so are the faces touching them; their count is reported.
    """
    h = s.grid.h
    h2 = h * h
    a = p.carrying_capacity
    u = s.u.values
    excluded = u < U_FLOOR_FACTOR * a

    gp = np.where(excluded, 0.0, g_prime_field(np.where(excluded, a, u), p))
    gp_x, gp_y = grad_arrays(gp, h)
    du_x, du_y = grad_arrays(u, h)
    keep_x = np.zeros_like(gp_x, dtype=bool)
    keep_y = np.zeros_like(gp_y, dtype=bool)
    keep_x[:, 1:-1] = ~(excluded[:, 1:] | excluded[:, :-1])
    keep_y[1:-1, :] = ~(excluded[1:, :] | excluded[:-1, :])
    gp_x = np.where(keep_x, gp_x, 0.0)
    gp_y = np.where(keep_y, gp_y, 0.0)

    grad_u_over_s = (float(np.sum(gp_x * du_x)) + float(np.sum(gp_y * du_y))) * h2

    w = -np.log(s.v.values / s.v0_sup)
    ax, ay = velocity_arrays(s.v.values, h)
    fx, fy = upwind_flux_arrays(u, ax, ay, p)
    gw_x, gw_y = grad_arrays(w, h)
    cross_work = (float(np.sum(gp_x * fx)) + float(np.sum(gp_y * fy))
                  + float(np.sum(du_x * gw_x)) + float(np.sum(du_y * gw_y))) * h2

    lap_w = lap_array(w, h)
    lap_w_sq = float(np.sum(lap_w * lap_w)) * h2
    cubic = float(np.sum(lap_w * grad_sq_array(w, h))) * h2
    logistic = p.mu * float(np.sum(u * (u - a) * gp)) * h2

    return EnergyBudget(grad_u_over_s=grad_u_over_s, lap_w_sq=lap_w_sq, cubic=cubic,
                        cross_work=cross_work, logistic=logistic,
                        excluded_cells=int(np.count_nonzero(excluded)))


def energy_identity_residual(s_prev: State, s_next: State, p: Parameters) -> float:
    """|(F(next) - F(prev))/dt - rhs(prev)| for two states one step apart"""
    dt = s_next.t - s_prev.t
    if not dt > 0:
        raise ContractError(f"states must be one positive step apart, got dt={dt!r}")
    rate = (energy(s_next, p) - energy(s_prev, p)) / dt
    return abs(rate - energy_budget(s_prev, p).rhs)


def odi_verify(t: Sequence[float], y: Sequence[float], h: Sequence[float], g: Sequence[float],
               chi: float, eta: float, tol: float) -> OdiReport:
    """
    Check the conclusions of the comparison argument for y' + (chi - eta y) h + g <= 0
    on sampled series: y stays nonincreasing, and
    y(t) + 1/2 int h + int g <= y(t0) + tol at every sample after t0.
    The hypothesis y(t0) < chi/(2 eta) is reported, and the other flags are
    evaluated whether or not it holds.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    if not (t.shape == y.shape == h.shape == g.shape) or t.size == 0:
        raise DomainError("odi_verify needs nonempty series of equal length")
    if np.any(np.diff(t) <= 0):
        raise DomainError("odi_verify needs strictly increasing t")
    if np.any(h < 0) or np.any(g < 0):
        raise DomainError("odi_verify needs h, g >= 0")
    if not (chi > 0 and eta > 0):
        raise DomainError("odi_verify needs chi, eta > 0")

    hypothesis_ok = bool(y[0] < chi / (2.0 * eta))
    monotone_ok = bool(np.all(np.diff(y) <= tol)) if y.size > 1 else True
    excess = (y + 0.5 * cumulative_trapezoid(h, t, initial=0.0)
              + cumulative_trapezoid(g, t, initial=0.0) - y[0])
    # excess[0] is y(t0) - y(t0) and is not tested; sampled equality passes
    budget_ok = bool(np.all(excess[1:] <= tol))
    return OdiReport(hypothesis_ok=hypothesis_ok, monotone_ok=monotone_ok,
                     budget_ok=budget_ok, worst_violation=float(np.max(excess)))


def gn1_ratio(w: ScalarField) -> float:
    """2 ||grad w||_4^4 / (||Lap w||_2^2 ||grad w||_2^2); a lower witness for L1"""
    g2 = grad_norm_lp(w, 2) ** 2
    lap = lap_array(w.values, w.grid.h)
    l2 = float(np.sum(lap * lap)) * w.grid.h ** 2
    if g2 == 0 or l2 == 0:
        raise DegenerateInputError("gn1_ratio is undefined for a constant field")
    return 2.0 * grad_norm_lp(w, 4) ** 4 / (l2 * g2)


def gn2_ratio(f: ScalarField) -> float:
    """||f||_3^3 / (||f||_{W^{1,2}}^2 ||f||_1 + ||f||_1^3); a lower witness for L2"""
    l1 = norm_lp(f, 1)
    if l1 == 0:
        raise DegenerateInputError("gn2_ratio is undefined for the zero field")
    w12_sq = norm_lp(f, 2) ** 2 + grad_norm_lp(f, 2) ** 2
    return norm_lp(f, 3) ** 3 / (w12_sq * l1 + l1 ** 3)


def _optional_ratio(fn: Callable[[ScalarField], float], f: ScalarField) -> Optional[float]:
    try:
        return fn(f)
    except DegenerateInputError:
        return None


def grad_v_over_v(v: ScalarField) -> np.ndarray:
    """Per cell, |grad v|/v from the face velocities averaged like cell_grad_sq"""
    velocity = face_velocity(v)
    ax, ay = velocity.x_faces, velocity.y_faces
    sq = 0.5 * (ax[:, 1:] ** 2 + ax[:, :-1] ** 2) + 0.5 * (ay[1:, :] ** 2 + ay[:-1, :] ** 2)
    return np.sqrt(sq)


def convergence_metrics(s: State, p: Parameters) -> Tuple[float, float, float]:
    """(||u - r/mu||_inf, ||v||_inf, max |grad v|/v): the triple tending to 0"""
    linf_U = float(np.max(np.abs(s.u.values - p.carrying_capacity)))
    return linf_U, norm_linf(s.v), float(np.max(grad_v_over_v(s.v)))


def mean_deviation(u: ScalarField) -> float:
    """||u - mean(u)||_inf"""
    return float(np.max(np.abs(u.values - np.mean(u.values))))


def w_mass_rate(s: State) -> float:
    """d/dt int w = -int |grad w|^2 + int u, evaluated at s"""
    w = w_from_v(s.v, s.v0_sup)
    return -grad_norm_lp(w, 2) ** 2 + integral_u(s)


def fit_decay_rate(t: Sequence[float], y: Sequence[float], window: Tuple[float, float]) -> DecayFit:
    """Least-squares line through (t, ln y) on the window; rate = -slope"""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    t_lo, t_hi = window
    if not t_lo < t_hi:
        raise DomainError(f"empty window {window!r}")
    inside = (t >= t_lo) & (t <= t_hi)
    if np.count_nonzero(inside) < 5:
        raise DomainError("fit_decay_rate needs at least 5 samples in the window")
    ys = y[inside]
    if np.any(ys <= 0):
        raise DomainError("fit_decay_rate needs y > 0 on the window")
    ts = t[inside]
    logs = np.log(ys)
    fit = linregress(ts, logs)
    slope, intercept = float(fit.slope), float(fit.intercept)
    ss_res = float(np.sum((logs - (slope * ts + intercept)) ** 2))
    ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
    if ss_tot == 0:
        r_squared = 1.0
    else:
        r_squared = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return DecayFit(rate=-slope, prefactor=math.exp(intercept), r_squared=r_squared,
                    window=(t_lo, t_hi))


def up_vq_integral(s: State, p_exp: float, q_exp: float, params: Parameters) -> float:
    """int u^p v^-q, with 0 < q < min(mu p, p - 1) and p > 1"""
    if not p_exp > 1:
        raise DomainError(f"upvq needs p > 1, got {p_exp!r}")
    if not 0 < q_exp < min(params.mu * p_exp, p_exp - 1.0):
        raise DomainError(f"upvq needs 0 < q < min(mu p, p - 1), got p={p_exp!r}, q={q_exp!r}")
    if np.min(s.v.values) <= 0:
        raise DomainError("upvq needs v > 0")
    return float(np.sum(s.u.values ** p_exp * s.v.values ** (-q_exp))) * s.grid.h ** 2


def transient_time(trajectory: Sequence[DiagnosticsRecord],
                   predicate: Callable[[DiagnosticsRecord], bool]) -> Optional[float]:
    """Earliest record time from which the predicate holds for every later record"""
    if not trajectory:
        raise DomainError("transient_time needs a nonempty trajectory")
    start = None
    for record in reversed(trajectory):
        if not predicate(record):
            break
        start = record.t
    return start


def mass_bound_predicate(p: Parameters, area: float) -> Callable[[DiagnosticsRecord], bool]:
    """int u <= 2 |Omega| r / mu"""
    bound = 2.0 * area * p.r / p.mu
    return lambda record: record.mass_u <= bound


def worst_increase(values: Sequence[float]) -> float:
    """Largest step-to-step increase of a series (0 for fewer than 2 samples)"""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(max(0.0, np.max(np.diff(values))))


def make_record(s: State, p: Parameters, ahead: State, mass_ode_residual: float, dt_last: float,
                upvq_exponents: Optional[Tuple[float, float]] = None) -> Tuple[DiagnosticsRecord, EnergyBudget]:
    """All tracked functionals at s; ahead is s advanced by one stable step"""
    u = s.u
    w = w_from_v(s.v, s.v0_sup)
    U = ScalarField(s.grid, u.values - p.carrying_capacity)
    linf_U, linf_v, linf_gvv = convergence_metrics(s, p)
    budget = energy_budget(s, p)
    f_now = energy(s, p)
    rate = (energy(ahead, p) - f_now) / (ahead.t - s.t)
    upvq = None
    if upvq_exponents is not None:
        upvq = up_vq_integral(s, upvq_exponents[0], upvq_exponents[1], p)
    record = DiagnosticsRecord(
        t=s.t,
        mass_u=integral_u(s),
        l2_u=norm_lp(u, 2),
        linf_u=norm_linf(u),
        min_u=float(np.min(u.values)),
        mass_ode_residual=mass_ode_residual,
        linf_U=linf_U,
        l2_U=norm_lp(U, 2),
        linf_v=linf_v,
        min_v=float(np.min(s.v.values)),
        l2_grad_w=grad_norm_lp(w, 2),
        l4_grad_w=grad_norm_lp(w, 4),
        linf_grad_w=grad_norm_linf(w),
        linf_grad_v_over_v=linf_gvv,
        energy_F=f_now,
        energy_identity_residual=abs(rate - budget.rhs),
        gn1_ratio=_optional_ratio(gn1_ratio, w),
        gn2_ratio=_optional_ratio(gn2_ratio, u),
        upvq=upvq,
        dt_last=dt_last,
    )
    return record, budget
