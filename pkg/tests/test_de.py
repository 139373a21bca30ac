import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scsat.de import (composite, de_run, de_step, find_fixed_points, initial_state,
                      saturation_check, write_trajectory_csv)
from scsat.errors import ModelError, ParameterError
from scsat.system import SystemFunctions
from scsat.systems import bec36, identity_system, random_monotone_system

# frozen from the plain uncoupled recursion x <- 1 - eps (1 - x^5)^2 (see oracle below)
U_BP_047 = 0.6005774123974006


def _uncoupled(eps, n=200000):
    x = 0.0
    for _ in range(n):
        nx = 1 - eps * (1 - x**5) ** 2
        if abs(nx - x) < 1e-15:
            break
        x = nx
    return x


def test_uncoupled_oracle_matches_frozen():
    assert abs(_uncoupled(0.47) - U_BP_047) < 1e-9


def test_fixed_points_bec36():
    rep = find_fixed_points(bec36(0.47))
    assert rep.u_opt == pytest.approx(1.0, abs=1e-12)
    assert rep.u_BP == pytest.approx(U_BP_047, abs=1e-9)
    kinds = [k for _, k in rep.all_fixed_points]
    assert kinds == ["stable", "unstable", "stable"]
    for u, _ in rep.all_fixed_points:
        assert abs(u - composite(bec36(0.47), u)) < 1e-10


def test_fixed_points_below_bp_threshold():
    rep = find_fixed_points(bec36(0.4))
    assert rep.stable == [pytest.approx(1.0)]
    assert rep.u_BP == pytest.approx(1.0, abs=1e-9)


def test_identity_is_degenerate():
    rep = find_fixed_points(identity_system())
    assert rep.degenerate
    assert all(k == "marginal" for _, k in rep.all_fixed_points)


def test_coupled_saturation_and_stall():
    f = bec36(0.47)
    rep = find_fixed_points(f)
    sat, trace = de_run(f, 100, 8)
    assert trace.converged and saturation_check(sat, rep, 1e-3)
    assert sat.iteration == 172
    one, _ = de_run(f, 100, 1)
    assert not saturation_check(one, rep, 1e-3)
    assert one.u.min() == pytest.approx(U_BP_047, abs=1e-6)


def test_multilinear_shortcut_equals_enumeration():
    f = bec36(0.47)
    plain = dataclasses.replace(f, phi_form=None, psi_form=None)
    rng = np.random.default_rng(0)
    st0 = initial_state(f, 30, 4, 1.0, rng.random(30))
    a = de_step(st0, f)
    b = de_step(st0, plain)
    np.testing.assert_allclose(a.u, b.u, atol=1e-14)
    np.testing.assert_allclose(a.v_inner, b.v_inner, atol=1e-14)


def test_subsampled_tuples_are_close():
    f = dataclasses.replace(bec36(0.47), phi_form=None, psi_form=None)
    st0 = initial_state(f, 40, 6, 1.0, np.linspace(0.2, 0.9, 40))
    exact = de_step(st0, f)
    approx = de_step(st0, f, budget=10, n_sub=20000, seed=3)
    assert np.max(np.abs(exact.u - approx.u)) < 5e-3
    again = de_step(st0, f, budget=10, n_sub=20000, seed=3)
    np.testing.assert_array_equal(approx.u, again.u)


def test_boundary_is_pinned():
    f = bec36(0.47)
    s = de_step(initial_state(f, 20, 5, 1.0), f)
    v = s.v
    np.testing.assert_array_equal(v[:4], 1.0)


def test_circular_runs():
    f = bec36(0.47)
    s, _ = de_run(f, 40, 4, max_iter=50, circular=True)
    assert np.all(np.isfinite(s.u))


def test_parameter_errors():
    f = bec36(0.47)
    with pytest.raises(ParameterError):
        de_run(f, 5, 8)
    with pytest.raises(ParameterError):
        de_run(f, 10, 2, max_iter=-1)
    with pytest.raises(ParameterError):
        find_fixed_points(f, n_scan=4)


def test_arity_mismatch():
    bad = SystemFunctions(d=2, d_tilde=1, phi=lambda V: V[..., 0:2], psi=lambda U: U[..., 0],
                          derivative_mode="finite-difference")
    with pytest.raises(ModelError):
        de_step(initial_state(bad, 10, 2, 1.0), bad)


def test_trajectory_csv(tmp_path):
    _, trace = de_run(bec36(0.47), 12, 3, max_iter=4, record_every=2)
    path = tmp_path / "t.csv"
    write_trajectory_csv(path, trace, "# header")
    lines = path.read_text().splitlines()
    assert lines[0] == "# header" and lines[1] == "iter,l,u,v"
    assert len(lines) == 2 + 12 * len(trace.snapshots)


@settings(max_examples=25, deadline=None)
@given(eps=st.floats(0.3, 0.7), seed=st.integers(0, 1000))
def test_step_preserves_order(eps, seed):
    f = bec36(eps)
    rng = np.random.default_rng(seed)
    lo = rng.random(24)
    hi = np.minimum(lo + rng.random(24) * 0.2, 1.0)
    a = de_step(initial_state(f, 24, 4, 1.0, lo), f)
    b = de_step(initial_state(f, 24, 4, 1.0, hi), f)
    assert np.all(b.u >= a.u - 1e-15)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**5))
def test_monotone_from_bottom(seed):
    f = random_monotone_system(seed, 2, 2)
    _, trace = de_run(f, 16, 3, max_iter=60, record_every=1)
    us = np.array([u for _, u, _ in trace.snapshots])
    assert np.diff(us, axis=0).min() >= -1e-14
