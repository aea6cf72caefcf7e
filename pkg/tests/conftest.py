import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import numpy as np
import pytest

from chemotaxis_fv.core import Grid2D, Parameters, ScalarField, State


def make_state(grid, u, v, t=0.0, v0_sup=None):
    u = ScalarField(grid, np.broadcast_to(np.asarray(u, dtype=float), grid.shape))
    v = ScalarField(grid, np.broadcast_to(np.asarray(v, dtype=float), grid.shape))
    return State(t=t, u=u, v=v, v0_sup=float(np.max(v.values)) if v0_sup is None else v0_sup)


def smooth_fields(grid, u_mean=0.1, v_mean=1.0):
    x, y = grid.cell_centers()
    u = u_mean * (1.0 + 0.3 * np.cos(np.pi * x / grid.lx) * np.cos(np.pi * y / grid.ly))
    v = v_mean * (1.0 - 0.2 * np.cos(np.pi * x / grid.lx) + 0.1 * np.cos(2 * np.pi * y / grid.ly))
    return u, v


@pytest.fixture
def grid8():
    return Grid2D(8, 8, 1.0, 1.0)


@pytest.fixture
def params():
    return Parameters(r=1.0, mu=10.0, beta=0.0, chi=1.0, t_end=1.0)


@pytest.fixture
def smooth_state(grid8):
    u, v = smooth_fields(grid8)
    return make_state(grid8, u, v)
