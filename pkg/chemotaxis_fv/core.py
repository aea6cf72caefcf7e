"""
core.py - Domain types, the sensitivity S(u) = chi*u*(u+1)^(beta-1),
the nested integral G with its derivative, steady state and initial data
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from chemotaxis_fv.config import DEFAULT_QUAD_TOL
from chemotaxis_fv.errors import DomainError
from chemotaxis_fv.quadrature import adaptive_simpson, panel_moments

logger = logging.getLogger(__name__)

IC_MODES = ("constant", "bump", "random_fourier", "file")

# consecutive breakpoints of the field quadrature differ by at most this ratio
_LADDER_RATIO = 1.05


@dataclass(frozen=True)
class Parameters:
    """Model coefficients and numerical controls of one run"""
    r: float
    mu: float
    beta: float
    chi: float
    t_end: float
    cfl_safety: float = 0.8
    quad_tol: float = DEFAULT_QUAD_TOL

    def __post_init__(self):
        for name in ("r", "mu", "beta", "chi", "t_end", "cfl_safety", "quad_tol"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        if self.r <= 0:
            raise DomainError(f"r must be > 0, got {self.r!r}")
        if self.mu <= 0:
            raise DomainError(f"mu must be > 0, got {self.mu!r}")
        if self.chi <= 0:
            raise DomainError(f"chi must be > 0, got {self.chi!r}")
        if not 0 < self.cfl_safety <= 1:
            raise DomainError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety!r}")
        if self.quad_tol <= 0:
            raise DomainError(f"quad_tol must be > 0, got {self.quad_tol!r}")
        if self.beta >= 1:
            raise DomainError(f"beta must be < 1, got {self.beta!r}")
        if self.t_end < 0:
            raise DomainError(f"t_end must be >= 0, got {self.t_end!r}")

    @property
    def carrying_capacity(self) -> float:
        return self.r / self.mu

    @property
    def in_decay_regime(self) -> bool:
        """0 <= beta < 1, where the energy and convergence statements apply"""
        return 0.0 <= self.beta < 1.0


@dataclass(frozen=True)
class Grid2D:
    """Uniform cell-centred mesh on [0, lx] x [0, ly] with square cells"""
    nx: int
    ny: int
    lx: float
    ly: float

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise DomainError(f"need at least 4 cells per direction, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise DomainError(f"domain lengths must be > 0, got lx={self.lx!r}, ly={self.ly!r}")
        if not math.isclose(self.lx / self.nx, self.ly / self.ny, rel_tol=1e-12):
            raise DomainError(
                f"cells must be square: lx/nx={self.lx / self.nx!r} != ly/ny={self.ly / self.ny!r}")

    @property
    def h(self) -> float:
        return self.lx / self.nx

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def lambda1(self) -> float:
        """First nonzero Neumann eigenvalue of -Laplace on the rectangle"""
        return math.pi ** 2 * min(1.0 / self.lx ** 2, 1.0 / self.ly ** 2)

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """(X, Y) arrays of shape (ny, nx); row j holds y = (j + 1/2) h"""
        x = (np.arange(self.nx) + 0.5) * self.h
        y = (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(x, y)

    def refined(self, factor: int = 2) -> "Grid2D":
        return Grid2D(self.nx * factor, self.ny * factor, self.lx, self.ly)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One cell-centred unknown; values has shape (ny, nx), row 0 at y-min"""
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1 and values.size == self.grid.nx * self.grid.ny:
            values = values.reshape(self.grid.shape)
        if values.shape != self.grid.shape:
            raise DomainError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid2D, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @property
    def flat(self) -> np.ndarray:
        """Row-major values, x fastest"""
        return self.values.ravel()

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScalarField):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class State:
    """Solution pair (u, v) at time t, plus an optionally co-evolved w"""
    t: float
    u: ScalarField
    v: ScalarField
    v0_sup: float
    w_evolved: Optional[ScalarField] = None

    def __post_init__(self):
        if self.u.grid != self.v.grid:
            raise DomainError("u and v live on different grids")
        if self.w_evolved is not None and self.w_evolved.grid != self.u.grid:
            raise DomainError("w lives on a different grid than u")
        if not self.v0_sup > 0:
            raise DomainError(f"v0_sup must be > 0, got {self.v0_sup!r}")

    @property
    def grid(self) -> Grid2D:
        return self.u.grid

    def validate(self):
        """Raise DomainError unless u >= 0 and v > 0 everywhere"""
        if np.min(self.u.values) < 0:
            raise DomainError(f"u has negative cells (min {np.min(self.u.values)!r})")
        if np.min(self.v.values) <= 0:
            raise DomainError(f"v has nonpositive cells (min {np.min(self.v.values)!r})")
        return self

    def with_evolved_w(self) -> "State":
        """Start co-evolving w from the transform of the current v"""
        w = -np.log(self.v.values / self.v0_sup)
        return replace(self, w_evolved=ScalarField(self.grid, w))


@dataclass(frozen=True)
class InitialCondition:
    mode: str
    u_base: float
    v_base: float
    amplitude: float = 0.1
    modes_k: int = 4
    seed: int = 0
    u_file: Optional[str] = None
    v_file: Optional[str] = None

    def __post_init__(self):
        if self.mode not in IC_MODES:
            raise DomainError(f"ic_mode must be one of {IC_MODES}, got {self.mode!r}")
        if not self.u_base > 0:
            raise DomainError(f"u_base must be > 0 so that u0 is not identically 0, got {self.u_base!r}")
        if not self.v_base > 0:
            raise DomainError(f"v_base must be > 0, got {self.v_base!r}")
        if not 0 <= self.amplitude < 1:
            raise DomainError(f"amplitude must lie in [0, 1), got {self.amplitude!r}")
        if self.v_base * (1.0 - self.amplitude) <= 0:
            raise DomainError("v_base*(1 - amplitude) must be > 0")
        if self.modes_k < 1:
            raise DomainError(f"modes_k must be >= 1, got {self.modes_k!r}")
        if self.seed < 0:
            raise DomainError(f"seed must be >= 0, got {self.seed!r}")
        if self.mode == "file" and not (self.u_file and self.v_file):
            raise DomainError("file mode needs both u_file and v_file")


def sensitivity(u: np.ndarray, p: Parameters) -> np.ndarray:
    """Vectorized S(u) for u >= 0"""
    u = np.asarray(u, dtype=float)
    return p.chi * u * (u + 1.0) ** (p.beta - 1.0)


def sensitivity_value(u: float, p: Parameters) -> float:
    if u < 0:
        raise DomainError(f"S(u) needs u >= 0, got {u!r}")
    return p.chi * u * (u + 1.0) ** (p.beta - 1.0)


def _inverse_sensitivity(p: Parameters):
    def inv(sigma):
        return (sigma + 1.0) ** (1.0 - p.beta) / (p.chi * sigma)
    return inv


def _sigma_over_sensitivity(p: Parameters):
    """sigma/S(sigma) = (1 + sigma)^(1 - beta)/chi, smooth down to sigma = 0"""
    def ratio(sigma):
        return (sigma + 1.0) ** (1.0 - p.beta) / p.chi
    return ratio


def g_prime(s: float, p: Parameters) -> float:
    """
    Integral of 1/S from r/mu to s.

    Integrated in tau = ln(sigma), where the integrand sigma/S(sigma) has no
    1/sigma end for small s.
    """
    if not s > 0:
        raise DomainError(f"g_prime needs s > 0, got {s!r}")
    ratio = _sigma_over_sensitivity(p)
    return adaptive_simpson(lambda tau: ratio(math.exp(tau)),
                            math.log(p.carrying_capacity), math.log(s), p.quad_tol)


def big_g(s: float, p: Parameters) -> float:
    """
    G(s): the double integral of 1/S from r/mu, once to rho and once to s.

    Exchanging the order of integration collapses it to a single integral
    of (s - sigma)/S(sigma) over [r/mu, s], which is what gets handed to the
    adaptive Simpson rule, in tau = ln(sigma) like g_prime.
    """
    if not s > 0:
        raise DomainError(f"G needs s > 0, got {s!r}")
    ratio = _sigma_over_sensitivity(p)

    def integrand(tau):
        sigma = math.exp(tau)
        return (s - sigma) * ratio(sigma)

    value = adaptive_simpson(integrand, math.log(p.carrying_capacity), math.log(s), p.quad_tol)
    return max(value, 0.0)


def _ladder(start: float, stop: float) -> np.ndarray:
    """Geometric points strictly between start and stop, ratio <= 1.05"""
    lo, hi = min(start, stop), max(start, stop)
    count = int(math.ceil(math.log(hi / lo) / math.log(_LADDER_RATIO)))
    if count <= 1:
        return np.empty(0)
    return np.geomspace(lo, hi, count + 1)[1:-1]


def _tabulate(values: np.ndarray, p: Parameters) -> Tuple[np.ndarray, np.ndarray]:
    """g' and G at every entry of values (>= 0), integrating outward from r/mu"""
    a = p.carrying_capacity
    inv = _inverse_sensitivity(p)
    gp = np.zeros(values.shape)
    gg = np.zeros(values.shape)

    upper = values > a
    if np.any(upper):
        targets = np.unique(values[upper])
        bp = np.unique(np.concatenate(([a], _ladder(a, targets[-1]), targets)))
        lo, hi = bp[:-1], bp[1:]
        plain, weighted = panel_moments(inv, lo, hi, anchor=hi)
        i0 = np.concatenate(([0.0], np.cumsum(plain)))
        g_at = np.concatenate(([0.0], np.cumsum((hi - lo) * i0[:-1] + weighted)))
        idx = np.searchsorted(bp, values[upper])
        gp[upper] = i0[idx]
        gg[upper] = g_at[idx]

    lower = values < a
    if np.any(lower):
        targets = np.unique(values[lower])
        smallest_positive = targets[targets > 0]
        pieces = [[a], targets]
        if smallest_positive.size:
            pieces.append(_ladder(smallest_positive[0], a))
        bp = np.unique(np.concatenate(pieces))[::-1]
        hi, lo = bp[:-1], bp[1:]
        plain, weighted = panel_moments(inv, lo, hi, anchor=lo)
        i0 = np.concatenate(([0.0], np.cumsum(plain)))
        g_at = np.concatenate(([0.0], np.cumsum((hi - lo) * i0[:-1] + weighted)))
        # bp is descending, so search the reversed ascending copy
        asc = bp[::-1]
        idx = len(bp) - 1 - np.searchsorted(asc, values[lower])
        gp[lower] = -i0[idx]
        gg[lower] = g_at[idx]
        gp[lower & (values == 0)] = -np.inf
    return gp, gg


def _field_values(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError("field quadrature needs finite values >= 0")
    return arr


def g_prime_field(values, p: Parameters) -> np.ndarray:
    """g' at every cell at once; -inf where the value is exactly 0"""
    arr = _field_values(values)
    return _tabulate(arr.ravel(), p)[0].reshape(arr.shape)


def big_g_field(values, p: Parameters) -> np.ndarray:
    """G at every cell at once; G(0) is the finite limit"""
    arr = _field_values(values)
    return _tabulate(arr.ravel(), p)[1].reshape(arr.shape)


def steady_state(p: Parameters) -> Tuple[float, float]:
    return (p.r / p.mu, 0.0)


def _cosine_perturbation(grid: Grid2D, modes_k: int, rng: np.random.Generator) -> np.ndarray:
    """Random Neumann-compatible cosine series scaled to sup 1 over the cells"""
    x, y = grid.cell_centers()
    k = np.arange(modes_k + 1)
    cx = np.cos(np.pi * k[:, None] * x[0][None, :] / grid.lx)
    cy = np.cos(np.pi * k[:, None] * y[:, 0][None, :] / grid.ly)
    coeffs = rng.uniform(-1.0, 1.0, size=(modes_k + 1, modes_k + 1))
    coeffs[0, 0] = 0.0
    series = cy.T @ coeffs.T @ cx
    peak = np.max(np.abs(series))
    if peak == 0:
        raise DomainError("random cosine series vanished on this grid")
    return series / peak


def _bump(grid: Grid2D) -> np.ndarray:
    x, y = grid.cell_centers()
    width = 0.1 * min(grid.lx, grid.ly)
    r2 = (x - 0.5 * grid.lx) ** 2 + (y - 0.5 * grid.ly) ** 2
    return np.exp(-r2 / (2.0 * width ** 2))


def make_initial(ic: InitialCondition, g: Grid2D, p: Parameters) -> State:
    """Build (u0, v0) with u0 >= 0, u0 not identically 0, v0 > 0"""
    if ic.mode == "constant":
        u = np.full(g.shape, ic.u_base)
        v = np.full(g.shape, ic.v_base)
    elif ic.mode == "random_fourier":
        rng = np.random.default_rng(ic.seed)
        u = ic.u_base * (1.0 + ic.amplitude * _cosine_perturbation(g, ic.modes_k, rng))
        v = ic.v_base * (1.0 + ic.amplitude * _cosine_perturbation(g, ic.modes_k, rng))
    elif ic.mode == "bump":
        bump = _bump(g)
        u = ic.u_base * (1.0 + ic.amplitude * bump)
        v = ic.v_base * (1.0 - ic.amplitude * bump)
    else:
        from chemotaxis_fv.cli_io import read_field_snapshot
        u_field = read_field_snapshot(ic.u_file)[0]
        v_field = read_field_snapshot(ic.v_file)[0]
        if u_field.grid != g or v_field.grid != g:
            raise DomainError("snapshot grid does not match the configured grid")
        u, v = u_field.values, v_field.values

    if np.min(u) < 0 or not np.any(u > 0):
        raise DomainError("initial u must be >= 0 and not identically 0")
    if np.min(v) <= 0:
        raise DomainError("initial v must be > 0")
    state = State(t=0.0, u=ScalarField(g, u), v=ScalarField(g, v), v0_sup=float(np.max(v)))
    logger.debug("initial state (%s): mass %g, v0_sup %g", ic.mode,
                 float(np.sum(u)) * g.h ** 2, state.v0_sup)
    return state
