"""
discrete_ops.py - Finite-volume operators on Grid2D with zero-flux
(homogeneous Neumann) boundaries, and the discrete norms and integrals

Fields are (ny, nx) arrays; x-faces are (ny, nx+1), y-faces (ny+1, nx).
Boundary faces always carry exactly zero gradient and zero flux.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from chemotaxis_fv.core import Grid2D, Parameters, ScalarField, sensitivity
from chemotaxis_fv.errors import ContractError, DomainError, PositivityError


@dataclass(frozen=True, eq=False)
class FaceField:
    """Face-centred values: gradients, velocities or fluxes"""
    grid: Grid2D
    x_faces: np.ndarray
    y_faces: np.ndarray

    def __post_init__(self):
        ny, nx = self.grid.shape
        if self.x_faces.shape != (ny, nx + 1) or self.y_faces.shape != (ny + 1, nx):
            raise DomainError("face arrays do not match the grid")

    @property
    def boundary_is_zero(self) -> bool:
        return (not np.any(self.x_faces[:, 0]) and not np.any(self.x_faces[:, -1])
                and not np.any(self.y_faces[0, :]) and not np.any(self.y_faces[-1, :]))

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.x_faces)), np.max(np.abs(self.y_faces))))


def grad_arrays(a: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    ny, nx = a.shape
    gx = np.zeros((ny, nx + 1))
    gy = np.zeros((ny + 1, nx))
    gx[:, 1:-1] = (a[:, 1:] - a[:, :-1]) / h
    gy[1:-1, :] = (a[1:, :] - a[:-1, :]) / h
    return gx, gy


def div_array(fx: np.ndarray, fy: np.ndarray, h: float) -> np.ndarray:
    return (fx[:, 1:] - fx[:, :-1] + fy[1:, :] - fy[:-1, :]) / h


def lap_array(a: np.ndarray, h: float) -> np.ndarray:
    # divergence of the face gradient: the 5-point stencil with mirrored ghosts
    return div_array(*grad_arrays(a, h), h)


def face_means(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Arithmetic means of the two cells adjoining each interior face"""
    return 0.5 * (a[:, 1:] + a[:, :-1]), 0.5 * (a[1:, :] + a[:-1, :])


def velocity_arrays(v: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    vx, vy = face_means(v)
    if np.min(vx) <= 0 or np.min(vy) <= 0:
        raise PositivityError("face value of v is not positive")
    ax, ay = grad_arrays(v, h)
    ax[:, 1:-1] /= vx
    ay[1:-1, :] /= vy
    return ax, ay


def upwind_flux_arrays(u: np.ndarray, ax: np.ndarray, ay: np.ndarray, p: Parameters) -> Tuple[np.ndarray, np.ndarray]:
    s = sensitivity(u, p)
    fx = np.zeros_like(ax)
    fy = np.zeros_like(ay)
    inner_x = ax[:, 1:-1]
    inner_y = ay[1:-1, :]
    fx[:, 1:-1] = np.where(inner_x > 0, s[:, :-1], s[:, 1:]) * inner_x
    fy[1:-1, :] = np.where(inner_y > 0, s[:-1, :], s[1:, :]) * inner_y
    return fx, fy


def grad_sq_array(a: np.ndarray, h: float) -> np.ndarray:
    gx, gy = grad_arrays(a, h)
    gx2 = gx * gx
    gy2 = gy * gy
    return 0.5 * (gx2[:, 1:] + gx2[:, :-1]) + 0.5 * (gy2[1:, :] + gy2[:-1, :])


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, lap_array(f.values, f.grid.h))


def gradient_faces(f: ScalarField) -> FaceField:
    gx, gy = grad_arrays(f.values, f.grid.h)
    return FaceField(f.grid, gx, gy)


def divergence(flux: FaceField) -> ScalarField:
    if not flux.boundary_is_zero:
        raise ContractError("divergence needs zero flux on boundary faces")
    return ScalarField(flux.grid, div_array(flux.x_faces, flux.y_faces, flux.grid.h))


def face_velocity(v: ScalarField) -> FaceField:
    """Chemotactic face velocity grad(v)/v_face with the arithmetic face mean"""
    ax, ay = velocity_arrays(v.values, v.grid.h)
    return FaceField(v.grid, ax, ay)


def chemotaxis_flux(u: ScalarField, v: ScalarField, p: Parameters) -> FaceField:
    """
    Donor-cell flux S(u_up) * grad(v)/v_face on every interior face.

    u_up is the cell the velocity points away from, which keeps u >= 0
    under the advective time step limit.
    """
    if np.min(u.values) < 0:
        raise DomainError("chemotaxis_flux needs u >= 0")
    ax, ay = velocity_arrays(v.values, v.grid.h)
    fx, fy = upwind_flux_arrays(u.values, ax, ay, p)
    return FaceField(u.grid, fx, fy)


def cell_grad_sq(f: ScalarField) -> ScalarField:
    """|grad f|^2 per cell: mean of squared gradients on opposite faces, summed"""
    return ScalarField(f.grid, grad_sq_array(f.values, f.grid.h))


def integral(f: ScalarField) -> float:
    return float(np.sum(f.values)) * f.grid.h ** 2


def norm_lp(f: ScalarField, p: int) -> float:
    if p not in (1, 2, 3, 4):
        raise DomainError(f"norm_lp supports p in 1..4, got {p!r}")
    return (float(np.sum(np.abs(f.values) ** p)) * f.grid.h ** 2) ** (1.0 / p)


def norm_linf(f: ScalarField) -> float:
    return float(np.max(np.abs(f.values)))


def min_value(f: ScalarField) -> float:
    return float(np.min(f.values))


def face_dot(a: FaceField, b: FaceField) -> float:
    """Sum over faces of a*b, each face weighted by its dual area h^2"""
    h2 = a.grid.h ** 2
    return (float(np.sum(a.x_faces * b.x_faces)) + float(np.sum(a.y_faces * b.y_faces))) * h2


def grad_norm_lp(f: ScalarField, p: int) -> float:
    """
    ||grad f||_p for p in {2, 4}.

    p = 2 sums squared face gradients with face weights h^2 (the Dirichlet
    energy); p = 4 integrates the square of cell_grad_sq.
    """
    h2 = f.grid.h ** 2
    if p == 2:
        gx, gy = grad_arrays(f.values, f.grid.h)
        return float(np.sqrt((float(np.sum(gx * gx)) + float(np.sum(gy * gy))) * h2))
    if p == 4:
        sq = grad_sq_array(f.values, f.grid.h)
        return (float(np.sum(sq * sq)) * h2) ** 0.25
    raise DomainError(f"grad_norm_lp supports p in {{2, 4}}, got {p!r}")


def grad_norm_linf(f: ScalarField) -> float:
    return float(np.sqrt(np.max(grad_sq_array(f.values, f.grid.h))))


def restrict(f: ScalarField, factor: int = 2) -> ScalarField:
    """Average factor x factor blocks onto the next coarser grid"""
    g = f.grid
    if g.nx % factor or g.ny % factor:
        raise DomainError(f"grid {g.nx}x{g.ny} not divisible by {factor}")
    coarse = Grid2D(g.nx // factor, g.ny // factor, g.lx, g.ly)
    blocks = f.values.reshape(coarse.ny, factor, coarse.nx, factor)
    return ScalarField(coarse, blocks.mean(axis=(1, 3)))
