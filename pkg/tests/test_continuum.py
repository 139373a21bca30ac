import numpy as np
import pytest

from scsat import continuum as C
from scsat.errors import ParameterError, SolverError
from scsat.system import build_profile_table
from scsat.systems import bec36, identity_system

# frozen from bvp_solve at eps 0.53, alpha 0.05 (cross-checked by pde_relax below)
BVP_MIN_053 = 0.5038668


@pytest.fixture(scope="module")
def identity_table():
    return build_profile_table(identity_system(), 64)


def test_grid_alignment():
    for a in (0.1, 0.05, 0.025, 0.0125, 0.3):
        n = C.grid_size(a)
        cells = (n - 1) * a / 2
        assert abs(cells - round(cells)) < 1e-9 and n >= 512


def test_alpha_checks():
    with pytest.raises(ParameterError):
        C.make_grid(0.0)
    with pytest.raises(ParameterError):
        C.integral_operator(C.profile_from(np.cos, 0.01, 101), identity_system(), v_opt=1.0)


def test_identity_operators_on_quadratic(identity_table):
    a = 0.05
    u = C.profile_from(lambda x: x**2, a)
    Lu = C.integral_operator(u, identity_system(), v_opt=1.0)
    Dt = C.differential_operator(u, identity_table)
    bulk = np.abs(u.x) <= 1 - 2 * a
    np.testing.assert_allclose(Lu.values[bulk], u.x[bulk] ** 2 + 2 * a**2 / 3, atol=1e-13)
    np.testing.assert_allclose(Dt.values[1:-1], u.x[1:-1] ** 2 + 2 * a**2 / 3, atol=1e-10)


def test_uniform_optimum_is_fixed():
    f = bec36(0.47)
    u = C.profile_from(lambda x: 1.0, 0.1)
    out = C.integral_operator(u, f, v_opt=1.0)
    np.testing.assert_allclose(out.values, 1.0, atol=1e-14)


def test_gap_slope(bec36_table):
    rep = C.operator_gap(lambda x: 0.5 + 0.3 * np.cos(np.pi * x), bec36_table.funcs, bec36_table,
                         [0.1, 0.05, 0.025])
    assert np.all(np.diff(rep.bulk_gap) < 0) and rep.slope > 2.5
    assert np.all(rep.total_gap >= rep.bulk_gap)


def test_mechanical_form_agrees(bec36_table):
    u = C.profile_from(lambda x: 0.6 + 0.3 * np.cos(np.pi * x / 2), 0.05)
    lhs, rhs = C.mechanical_residual(u, bec36_table)
    scale = np.max(np.abs(rhs))
    assert np.max(np.abs(lhs - rhs)) < 1e-3 * scale


def test_bvp_stationary_profile(bec36_table):
    f = bec36_table.funcs
    x = C.make_grid(0.05)
    init = C.de_profile(f, 0.05, 200, x)
    sol = C.bvp_solve(f, bec36_table, 0.05, init)
    assert sol.residual_u < C.PDE_TOL
    assert sol.profile.values.min() == pytest.approx(BVP_MIN_053, abs=1e-6)
    assert sol.profile.asymmetry() < 1e-6
    assert sol.profile.values[0] == sol.profile.values[-1] == 1.0


def test_bvp_uniform_case():
    f = bec36(0.47)
    sol = C.bvp_solve(f, build_profile_table(f, 1024), 0.1)
    np.testing.assert_allclose(sol.profile.values, 1.0, atol=1e-12)
    assert sol.form == "u"


def test_bvp_fails_between_thresholds():
    # eps between the MAP and potential thresholds: no stationary profile exists
    f = bec36(0.495)
    table = build_profile_table(f, 2048)
    x = C.make_grid(0.1)
    with pytest.raises(SolverError):
        C.bvp_solve(f, table, 0.1, C.de_profile(f, 0.1, 200, x))


def test_bvp_form_check(bec36_table):
    with pytest.raises(ParameterError):
        C.bvp_solve(bec36_table.funcs, bec36_table, 0.1, form="z")


@pytest.mark.slow
def test_pde_matches_bvp(bec36_table):
    f = bec36_table.funcs
    x = C.make_grid(0.05)
    init = C.de_profile(f, 0.05, 200, x)
    init.values = C._smooth3(init.values)
    res = C.pde_relax(f, bec36_table, 0.05, init, t_max=100)
    sol = C.bvp_solve(f, bec36_table, 0.05, init)
    assert res.converged
    assert np.max(np.abs(res.profile.values - sol.profile.values)) < 1e-5


def test_stable_dt_positive(bec36_table):
    assert 0 < C.stable_dt(bec36_table, 0.05, 1e-3) < 1


def test_csv_writers(tmp_path, bec36_table):
    u = C.profile_from(np.cos, 0.1)
    C.write_profile_csv(tmp_path / "p.csv", u, header="# x")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[:2] == ["# x", "x,u,residual"] and len(lines) == u.n_x + 2
    rep = C.GapReport(np.array([0.1]), np.array([1.0]), np.array([2.0]), 3.0)
    C.write_gap_csv(tmp_path / "g.csv", rep)
    assert (tmp_path / "g.csv").read_text().startswith("alpha,bulk_gap,total_gap")
