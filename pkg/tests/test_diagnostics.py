import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemotaxis_fv import diagnostics
from chemotaxis_fv.core import Grid2D, InitialCondition, Parameters, ScalarField
from chemotaxis_fv.diagnostics import (
    CSV_COLUMNS, DiagnosticsRecord, convergence_metrics, energy, energy_budget, energy_identity_residual,
    fit_decay_rate, gn1_ratio, gn2_ratio, mean_deviation, odi_verify, transient_time, up_vq_integral,
    w_from_v, w_mass_rate,
)
from chemotaxis_fv.discrete_ops import grad_norm_lp
from chemotaxis_fv.errors import ContractError, DegenerateInputError, DomainError
from chemotaxis_fv.solver import run, stable_dt, step

from conftest import make_state, smooth_fields


def cosine_signal(grid, v0=1.0, depth=0.1):
    x, _ = grid.cell_centers()
    return v0 * (1.0 - depth * np.cos(np.pi * x / grid.lx))


def test_csv_columns_order():
    assert ",".join(CSV_COLUMNS) == (
        "t,mass_u,l2_u,linf_u,min_u,mass_ode_residual,linf_U,l2_U,linf_v,min_v,l2_grad_w,l4_grad_w,"
        "linf_grad_w,linf_grad_v_over_v,energy_F,energy_identity_residual,gn1_ratio,gn2_ratio,upvq,dt_last")


def test_w_from_v_identities(grid8):
    assert np.all(w_from_v(ScalarField.constant(grid8, 2.0), 2.0).values == 0.0)
    w = w_from_v(ScalarField.constant(grid8, 2.0 * math.exp(-1.0)), 2.0)
    assert np.allclose(w.values, 1.0, rtol=0, atol=1e-14)
    v = ScalarField(grid8, np.linspace(0.2, 3.0, 64))
    back = np.exp(-w_from_v(v, 3.0).values) * 3.0
    assert np.allclose(back, v.values, rtol=1e-14, atol=0)


def test_w_from_v_rejects_and_warns(grid8, caplog):
    with pytest.raises(DomainError):
        w_from_v(ScalarField.constant(grid8, 0.0), 1.0)
    with caplog.at_level(logging.WARNING, logger="chemotaxis_fv.diagnostics"):
        w = w_from_v(ScalarField.constant(grid8, 2.0), 1.0)
    assert np.all(w.values < 0)
    assert any("exceeds its initial sup" in r.getMessage() for r in caplog.records)


def test_energy_at_fixed_point_is_zero(grid8, params):
    assert energy(make_state(grid8, 0.1, 1.0), params) == 0.0


def test_energy_with_flat_u_is_dirichlet_energy(grid8, params):
    s = make_state(grid8, 0.1, cosine_signal(grid8))
    w = w_from_v(s.v, s.v0_sup)
    assert energy(s, params) == pytest.approx(0.5 * grad_norm_lp(w, 2) ** 2, rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_energy_bounds_gradient_of_w(seed):
    g = Grid2D(6, 6, 1.0, 1.0)
    p = Parameters(r=1.0, mu=10.0, beta=0.3, chi=1.0, t_end=1.0)
    rng = np.random.default_rng(seed)
    s = make_state(g, rng.uniform(0.0, 0.5, (6, 6)), rng.uniform(0.1, 2.0, (6, 6)))
    w = w_from_v(s.v, s.v0_sup)
    f = energy(s, p)
    assert f >= 0
    assert f >= 0.5 * grad_norm_lp(w, 2) ** 2 * (1 - 1e-12)


def test_energy_budget_at_fixed_point(grid8, params):
    budget = energy_budget(make_state(grid8, 0.1, 1.0), params)
    assert budget.rhs == 0.0
    assert budget.excluded_cells == 0


def test_energy_budget_with_flat_u_keeps_only_w_terms(grid8, params):
    s = make_state(grid8, 0.1, cosine_signal(grid8))
    budget = energy_budget(s, params)
    assert budget.grad_u_over_s == 0.0
    assert budget.logistic == 0.0
    assert budget.cross_work == 0.0
    assert budget.lap_w_sq > 0
    assert budget.rhs == pytest.approx(-budget.lap_w_sq + budget.cubic)


def test_energy_budget_counts_cells_below_floor(grid8, params):
    u = np.full((8, 8), 0.1)
    u[0, :3] = 0.0
    budget = energy_budget(make_state(grid8, u, cosine_signal(grid8)), params)
    assert budget.excluded_cells == 3
    assert math.isfinite(budget.rhs)


def test_energy_identity_residual_at_fixed_point(grid8, params):
    s = make_state(grid8, 0.1, 1.0)
    nxt, _ = step(s, params, stable_dt(s, params))
    assert energy_identity_residual(s, nxt, params) <= 1e-12


def test_energy_identity_residual_needs_forward_step(smooth_state, params):
    with pytest.raises(ContractError):
        energy_identity_residual(smooth_state, smooth_state, params)


def test_energy_identity_residual_shrinks_under_refinement(params):
    residuals = []
    for n in (8, 16, 32):
        g = Grid2D(n, n, 1.0, 1.0)
        u, v = smooth_fields(g)
        s = make_state(g, u, v)
        nxt, _ = step(s, params, 0.5 * stable_dt(s, params))
        residuals.append(energy_identity_residual(s, nxt, params))
    assert residuals[0] > residuals[1] > residuals[2]
    assert residuals[0] / residuals[2] >= 6.0


def test_odi_all_zero():
    t = np.linspace(0, 1, 5)
    for tol in (1e-12, 0.0):
        report = odi_verify(t, np.zeros(5), np.zeros(5), np.zeros(5), chi=1.0, eta=1.0, tol=tol)
        assert report.hypothesis_ok and report.monotone_ok and report.budget_ok
        assert report.worst_violation == 0.0


def test_odi_budget_ignores_first_sample():
    t = np.linspace(0, 1, 3)
    report = odi_verify(t, [0.2, 0.1, 0.1], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], chi=1.0, eta=1.0, tol=0.0)
    assert report.monotone_ok and report.budget_ok
    rising = odi_verify(t, [0.2, 0.1, 0.1], [0.0, 0.0, 0.0], [0.0, 0.4, 0.4], chi=1.0, eta=1.0, tol=0.0)
    assert not rising.budget_ok
    assert rising.worst_violation == pytest.approx(0.5)


def test_odi_increasing_y_is_not_monotone():
    t = np.linspace(0, 1, 5)
    report = odi_verify(t, 0.01 * t, np.zeros(5), np.zeros(5), chi=1.0, eta=1.0, tol=1e-12)
    assert report.hypothesis_ok
    assert not report.monotone_ok


def test_odi_hypothesis_boundary_still_reports_flags():
    t = np.linspace(0, 5, 51)
    report = odi_verify(t, np.exp(-t), np.ones_like(t), np.zeros_like(t), chi=2.0, eta=1.0, tol=1e-12)
    assert not report.hypothesis_ok
    assert report.monotone_ok
    assert not report.budget_ok
    assert report.worst_violation > 0


def test_odi_rejects_bad_input():
    with pytest.raises(DomainError):
        odi_verify([0.0, 2.0, 1.0], [0, 0, 0], [0, 0, 0], [0, 0, 0], chi=1.0, eta=1.0, tol=0.0)
    with pytest.raises(DomainError):
        odi_verify([0.0, 1.0], [0, 0], [-1.0, 0], [0, 0], chi=1.0, eta=1.0, tol=0.0)


def test_gn1_ratio_is_scale_invariant(grid8):
    w = ScalarField(grid8, np.cos(np.pi * grid8.cell_centers()[0]))
    ratio = gn1_ratio(w)
    assert 0 < ratio < math.inf
    assert gn1_ratio(ScalarField(grid8, -3.5 * w.values)) == pytest.approx(ratio, rel=1e-12)


def test_gn1_ratio_against_dense_cosine_norms():
    # w = cos(pi x): |grad w|_4^4 = 3 pi^4/8, |Lap w|_2^2 = pi^4/2, |grad w|_2^2 = pi^2/2
    g = Grid2D(128, 128, 1.0, 1.0)
    w = ScalarField(g, np.cos(np.pi * g.cell_centers()[0]))
    expected = 2 * (3 * math.pi ** 4 / 8) / ((math.pi ** 4 / 2) * (math.pi ** 2 / 2))
    assert gn1_ratio(w) == pytest.approx(expected, rel=1e-2)


def test_gn1_ratio_constant_is_degenerate(grid8):
    with pytest.raises(DegenerateInputError):
        gn1_ratio(ScalarField.constant(grid8, 1.0))


def test_gn2_ratio_of_constant(grid8):
    for c in (0.1, 1.0, 10.0):
        assert gn2_ratio(ScalarField.constant(grid8, c)) == pytest.approx(0.5)
    with pytest.raises(DegenerateInputError):
        gn2_ratio(ScalarField.constant(grid8, 0.0))


def test_gn2_ratio_on_smooth_field(smooth_state):
    ratio = gn2_ratio(smooth_state.u)
    assert 0 < ratio < math.inf


def test_convergence_metrics(grid8, params):
    assert convergence_metrics(make_state(grid8, 0.1, 0.3), params) == (0.0, 0.3, 0.0)
    linf_U, linf_v, gvv = convergence_metrics(make_state(grid8, 0.1, cosine_signal(grid8)), params)
    assert linf_U == 0.0 and linf_v > 0 and gvv > 0


def test_fit_decay_rate_exact_exponential():
    t = np.linspace(0, 3, 31)
    fit = fit_decay_rate(t, 5.0 * np.exp(-2.0 * t), (0.0, 3.0))
    assert fit.rate == pytest.approx(2.0)
    assert fit.prefactor == pytest.approx(5.0)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.window == (0.0, 3.0)


def test_fit_decay_rate_constant_series():
    t = np.linspace(0, 3, 31)
    fit = fit_decay_rate(t, np.full_like(t, 0.7), (1.0, 3.0))
    assert fit.rate == pytest.approx(0.0, abs=1e-12)
    assert 0.0 <= fit.r_squared <= 1.0


def test_fit_decay_rate_rejects_bad_windows():
    t = np.linspace(0, 1, 11)
    with pytest.raises(DomainError):
        fit_decay_rate(t, np.exp(-t), (0.0, 0.3))
    y = np.exp(-t)
    y[5] = 0.0
    with pytest.raises(DomainError):
        fit_decay_rate(t, y, (0.0, 1.0))
    with pytest.raises(DomainError):
        fit_decay_rate(t, np.exp(-t), (1.0, 0.0))


def test_homogeneous_signal_decay_rate():
    g = Grid2D(4, 4, 1.0, 1.0)
    p = Parameters(r=1.0, mu=10.0, beta=0.0, chi=1.0, t_end=2.0)
    result = run(InitialCondition("constant", u_base=0.1, v_base=1.0), g, p, record_every=0.25)
    records = result.trajectory
    fit = fit_decay_rate([r.t for r in records], [r.linf_v for r in records], (0.0, 2.0))
    assert fit.rate == pytest.approx(0.1, rel=1e-2)


def test_up_vq_integral(grid8):
    p = Parameters(r=1.0, mu=5.0, beta=0.0, chi=1.0, t_end=1.0)
    assert up_vq_integral(make_state(grid8, 0.0, 1.0), 3.0, 1.0, p) == 0.0
    assert up_vq_integral(make_state(grid8, 1.0, 1.0), 3.0, 1.0, p) == pytest.approx(1.0)
    assert up_vq_integral(make_state(grid8, 2.0, 0.5), 3.0, 1.0, p) == pytest.approx(16.0)
    with pytest.raises(DomainError):
        up_vq_integral(make_state(grid8, 2.0, 0.5), 2.0, 1.0, p)
    with pytest.raises(DomainError):
        up_vq_integral(make_state(grid8, 2.0, 0.5), 1.0, 0.1, p)


def _records(values):
    base = {name: 0.0 for name in CSV_COLUMNS}
    out = []
    for t, mass in values:
        base.update(t=t, mass_u=mass, gn1_ratio=None, gn2_ratio=None, upvq=None)
        out.append(DiagnosticsRecord(**base))
    return out


def test_transient_time():
    records = _records([(0.0, 5.0), (1.0, 3.0), (2.0, 1.0), (3.0, 0.5)])
    assert transient_time(records, lambda r: True) == 0.0
    assert transient_time(records, lambda r: False) is None
    assert transient_time(records, lambda r: r.mass_u <= 1.0) == 2.0
    bumpy = _records([(0.0, 0.5), (1.0, 3.0), (2.0, 0.5)])
    assert transient_time(bumpy, lambda r: r.mass_u <= 1.0) == 2.0
    with pytest.raises(DomainError):
        transient_time([], lambda r: True)


def test_mass_bound_predicate(params):
    predicate = diagnostics.mass_bound_predicate(params, area=1.0)
    assert predicate(_records([(0.0, 0.2)])[0])
    assert not predicate(_records([(0.0, 0.21)])[0])


def test_mean_deviation_and_w_mass_rate(grid8):
    u = np.full((8, 8), 0.2)
    u[4, 4] = 0.5
    field = ScalarField(grid8, u)
    assert mean_deviation(field) == pytest.approx(0.5 - np.mean(u))
    s = make_state(grid8, 0.2, 1.0)
    assert w_mass_rate(s) == pytest.approx(0.2)


def test_worst_increase():
    assert diagnostics.worst_increase([3.0, 2.0, 2.5, 1.0]) == pytest.approx(0.5)
    assert diagnostics.worst_increase([1.0]) == 0.0
