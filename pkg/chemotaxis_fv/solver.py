"""
solver.py - Explicit CFL-controlled forward Euler for
u_t = Lap u - div(S(u)/v grad v) + r u - mu u^2,  v_t = Lap v - u v
with an optional co-evolved w_t = Lap w - |grad w|^2 + u
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from chemotaxis_fv import diagnostics
from chemotaxis_fv.core import Grid2D, InitialCondition, Parameters, ScalarField, State, make_initial
from chemotaxis_fv.discrete_ops import div_array, grad_sq_array, lap_array, upwind_flux_arrays, velocity_arrays
from chemotaxis_fv.errors import ChemotaxisError, ContractError, DivergenceError, PositivityError, SolverFailure

logger = logging.getLogger(__name__)

BINDINGS = ("diffusion", "advection", "reaction", "absorption")
# a last step within this fraction of dt of the target absorbs the rounding remainder
STEP_SNAP = 1e-6


@dataclass(frozen=True)
class StepReport:
    dt_used: float
    max_u: float
    min_v: float
    cfl_binding: str
    # dt * integral of (r u - mu u^2) and dt * integral of (r u + mu u^2), pre-step
    mass_source: float = 0.0
    mass_source_scale: float = 0.0


@dataclass
class RunResult:
    trajectory: List["diagnostics.DiagnosticsRecord"]
    final_state: State
    snapshots: List[State] = field(default_factory=list)
    budgets: List["diagnostics.EnergyBudget"] = field(default_factory=list)
    steps: int = 0
    bindings: Dict[str, int] = field(default_factory=dict)


def _check_finite(s: State):
    for name, f in (("u", s.u), ("v", s.v)):
        if not np.all(np.isfinite(f.values)):
            raise DivergenceError(f"{name} is not finite", s.t)


def _limits(s: State, p: Parameters, ax: np.ndarray, ay: np.ndarray) -> Dict[str, float]:
    h = s.grid.h
    u_sup = float(np.max(s.u.values))
    speed = float(np.max(np.abs(ax))) + float(np.max(np.abs(ay)))
    return {
        "diffusion": h * h / 8.0,
        # donor-cell outflow through all four faces stays below u
        "advection": h / (2.0 * p.chi * speed) if speed > 0 else math.inf,
        "reaction": 1.0 / (p.r + 2.0 * p.mu * u_sup),
        "absorption": 1.0 / (u_sup + 4.0 / (h * h)),
    }


def cfl_limits(s: State, p: Parameters) -> Dict[str, float]:
    """The four unscaled time step limits, keyed by constraint name"""
    _check_finite(s)
    ax, ay = velocity_arrays(s.v.values, s.grid.h)
    return _limits(s, p, ax, ay)


def stable_dt(s: State, p: Parameters) -> float:
    return p.cfl_safety * min(cfl_limits(s, p).values())


def _euler(s: State, p: Parameters, dt: float, ax: np.ndarray, ay: np.ndarray,
           binding: str, t_new: Optional[float] = None) -> Tuple[State, StepReport]:
    h = s.grid.h
    u = s.u.values
    v = s.v.values
    fx, fy = upwind_flux_arrays(u, ax, ay, p)
    reaction = u * (p.r - p.mu * u)
    u_next = u + dt * (lap_array(u, h) - div_array(fx, fy, h) + reaction)
    v_next = v + dt * (lap_array(v, h) - u * v)
    t_next = s.t + dt if t_new is None else t_new

    if not (np.all(np.isfinite(u_next)) and np.all(np.isfinite(v_next))):
        raise DivergenceError("non-finite value after step", t_next)
    if np.min(u_next) < 0:
        raise PositivityError(f"u went negative (min {np.min(u_next)!r})", t_next)
    if np.min(v_next) <= 0:
        raise PositivityError(f"v went nonpositive (min {np.min(v_next)!r})", t_next)

    w_next = None
    if s.w_evolved is not None:
        w = s.w_evolved.values
        w_next = w + dt * (lap_array(w, h) - grad_sq_array(w, h) + u)
        if not np.all(np.isfinite(w_next)):
            raise DivergenceError("w is not finite after step", t_next)
        w_next = ScalarField(s.grid, w_next)

    h2 = h * h
    report = StepReport(
        dt_used=dt,
        max_u=float(np.max(u_next)),
        min_v=float(np.min(v_next)),
        cfl_binding=binding,
        mass_source=dt * float(np.sum(reaction)) * h2,
        mass_source_scale=dt * float(np.sum(p.r * u + p.mu * u * u)) * h2,
    )
    nxt = replace(s, t=t_next, u=ScalarField(s.grid, u_next), v=ScalarField(s.grid, v_next),
                  w_evolved=w_next)
    return nxt, report


def _prepare(s: State, p: Parameters):
    _check_finite(s)
    ax, ay = velocity_arrays(s.v.values, s.grid.h)
    limits = _limits(s, p, ax, ay)
    binding = min(BINDINGS, key=lambda name: limits[name])
    return ax, ay, p.cfl_safety * limits[binding], binding


def step(s: State, p: Parameters, dt: float) -> Tuple[State, StepReport]:
    """One forward Euler step; dt must not exceed stable_dt(s, p)"""
    ax, ay, bound, binding = _prepare(s, p)
    if not 0 < dt <= bound * (1.0 + 1e-12):
        raise ContractError(f"dt={dt!r} outside (0, stable_dt={bound!r}]")
    return _euler(s, p, dt, ax, ay, binding)


def advance(s: State, p: Parameters, t_target: float, dt_cap: Optional[float] = None) -> Tuple[State, int]:
    """
    Step from s.t to exactly t_target without recording.

    dt is the stable step, further capped by dt_cap; refinement studies pass
    a cap below the stable step to get a fixed dt.
    """
    steps = 0
    warned = False
    while s.t < t_target:
        ax, ay, bound, binding = _prepare(s, p)
        dt = bound if dt_cap is None else min(bound, dt_cap)
        if dt_cap is not None and bound < dt_cap and not warned:
            logger.warning("stable dt %g below requested cap %g at t=%g", bound, dt_cap, s.t)
            warned = True
        remaining = t_target - s.t
        t_new = None
        if remaining <= dt * (1.0 + STEP_SNAP):
            dt, t_new = remaining, t_target
        try:
            s, _ = _euler(s, p, dt, ax, ay, binding, t_new)
        except ChemotaxisError as e:
            raise SolverFailure(e, s.t) from e
        steps += 1
    return s, steps


def record_times(t_end: float, record_every: float) -> List[float]:
    """0, record_every, 2 record_every, ... and t_end itself"""
    if not record_every > 0:
        raise ContractError(f"record_every must be > 0, got {record_every!r}")
    count = int(math.floor(t_end / record_every * (1.0 + 1e-12)))
    times = [k * record_every for k in range(count + 1)]
    if t_end - times[-1] > 1e-12 * max(1.0, t_end):
        times.append(t_end)
    else:
        times[-1] = t_end if count else 0.0
    return times


def run(ic: InitialCondition, g: Grid2D, p: Parameters, record_every: float,
        evolve_w: bool = False, upvq_exponents: Optional[Tuple[float, float]] = None,
        keep_snapshots: bool = False, initial_state: Optional[State] = None) -> RunResult:
    """
    Integrate from t = 0 to p.t_end, emitting one DiagnosticsRecord per record time.

    Args:
        ic: initial condition (ignored when initial_state is given)
        g: grid
        p: parameters
        record_every: record spacing; the step before each record is shortened
            so records land exactly on k * record_every
        evolve_w: co-evolve w alongside v for the transform consistency check
        upvq_exponents: (p, q) of the tracked integral of u^p v^-q, or None
        keep_snapshots: keep the State at every record time
        initial_state: start from this state instead of make_initial(ic, g, p)

    Returns:
        RunResult with the trajectory, final state, snapshots and energy budgets
    """
    state = initial_state if initial_state is not None else make_initial(ic, g, p)
    state.validate()
    if evolve_w and state.w_evolved is None:
        state = state.with_evolved_w()
    times = record_times(p.t_end, record_every)
    logger.info("run: %dx%d grid, r=%g mu=%g beta=%g chi=%g, t_end=%g, %d records",
                state.grid.nx, state.grid.ny, p.r, p.mu, p.beta, p.chi, p.t_end, len(times))

    result = RunResult(trajectory=[], final_state=state)
    bindings = Counter()
    mass_prev = diagnostics.integral_u(state)
    source = 0.0
    source_scale = 0.0
    dt_last = 0.0

    def emit(s: State):
        residual = 0.0
        mass_now = diagnostics.integral_u(s)
        if source_scale > 0:
            residual = abs((mass_now - mass_prev) - source) / source_scale
        try:
            ax, ay, bound, binding = _prepare(s, p)
            ahead, _ = _euler(s, p, bound, ax, ay, binding)
        except ChemotaxisError as e:
            raise SolverFailure(e, s.t) from e
        record, budget = diagnostics.make_record(s, p, ahead, residual, dt_last, upvq_exponents)
        result.trajectory.append(record)
        result.budgets.append(budget)
        if keep_snapshots:
            result.snapshots.append(s)
        logger.debug("t=%g mass=%g F=%g min_u=%g min_v=%g", record.t, record.mass_u,
                     record.energy_F, record.min_u, record.min_v)
        return mass_now

    mass_prev = emit(state)
    for t_next in times[1:]:
        source = 0.0
        source_scale = 0.0
        while state.t < t_next:
            ax, ay, dt, binding = _prepare(state, p)
            remaining = t_next - state.t
            t_new = None
            if remaining <= dt * (1.0 + STEP_SNAP):
                dt, t_new = remaining, t_next
            try:
                state, report = _euler(state, p, dt, ax, ay, binding, t_new)
            except ChemotaxisError as e:
                raise SolverFailure(e, state.t) from e
            source += report.mass_source
            source_scale += report.mass_source_scale
            dt_last = dt
            bindings[binding] += 1
            result.steps += 1
        mass_prev = emit(state)

    result.final_state = state
    result.bindings = dict(bindings)
    logger.info("run finished: %d steps, bindings %s", result.steps, dict(bindings))
    return result
