import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scsat.errors import DomainRangeError, ModelError, ParameterError
from scsat.system import (SystemFunctions, build_profile_table, derivative, diagonal_reduce,
                          evaluate_quantities, laplacian_on_diagonal)
from scsat.systems import (bec36, bec_regular_system, identity_system, random_monotone_system,
                           random_scalar_system, tabulated_system)


def test_rejects_bad_arity_and_mode():
    with pytest.raises(ParameterError):
        SystemFunctions(d=0, d_tilde=1, phi=None, psi=None)
    with pytest.raises(ParameterError):
        SystemFunctions(d=1, d_tilde=1, phi=None, psi=None, derivative_mode="symbolic")
    with pytest.raises(ParameterError):
        SystemFunctions(d=1, d_tilde=1, phi=None, psi=None, u_domain=(1.0, 0.0))
    with pytest.raises(ParameterError):
        SystemFunctions(d=1, d_tilde=1, phi=None, psi=None, analytic={"dphi": abs})


def test_bec_parameters():
    with pytest.raises(ParameterError):
        bec_regular_system(1, 6, 0.4)
    with pytest.raises(ParameterError):
        bec36(0.0)


def test_diagonal_reduce_matches_closed_form():
    f = bec36(0.47)
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(diagonal_reduce(f, "psi", x), x**5, atol=1e-15)
    np.testing.assert_allclose(diagonal_reduce(f, "phi", x), 1 - 0.47 * (1 - x) ** 2, atol=1e-15)


def test_domain_check():
    with pytest.raises(DomainRangeError):
        diagonal_reduce(bec36(0.47), "psi", np.array([1.5]))


def test_finite_difference_matches_analytic():
    f = bec36(0.47)
    fd = SystemFunctions(d=f.d, d_tilde=f.d_tilde, phi=f.phi, psi=f.psi,
                         derivative_mode="finite-difference")
    x = np.linspace(0.05, 0.95, 19)
    for which in ("phi", "psi"):
        for k, tol in ((1, 1e-7), (2, 1e-5)):
            np.testing.assert_allclose(derivative(fd, which, x, k), derivative(f, which, x, k),
                                       rtol=tol, atol=tol)
        # multilinear maps have zero diagonal Laplacian
        np.testing.assert_allclose(laplacian_on_diagonal(fd, which, x), 0.0, atol=1e-5)


def test_random_scalar_analytic_derivatives():
    f = random_scalar_system(3)
    fd = SystemFunctions(d=1, d_tilde=1, phi=f.phi, psi=f.psi, derivative_mode="finite-difference")
    x = np.linspace(0.1, 0.9, 9)
    q, r = evaluate_quantities(f, x), evaluate_quantities(fd, x)
    np.testing.assert_allclose(q.dpsi0, r.dpsi0, rtol=1e-7)
    np.testing.assert_allclose(q.dphi0, r.dphi0, rtol=1e-7)
    np.testing.assert_allclose(q.d2psi0, r.d2psi0, rtol=1e-4, atol=1e-5)


def test_profile_table_audit():
    t = build_profile_table(bec36(0.47), 64)
    assert t.clamped == 0
    assert np.all(np.diff(t.values.psi0) >= 0)
    decreasing = SystemFunctions(d=1, d_tilde=1, phi=lambda V: V[..., 0],
                                 psi=lambda U: 1 - U[..., 0], derivative_mode="finite-difference")
    with pytest.raises(ModelError):
        build_profile_table(decreasing, 64)
    with pytest.raises(ParameterError):
        build_profile_table(bec36(0.47), 8)


def test_identity_h_vanishes():
    q = evaluate_quantities(identity_system(), np.linspace(0, 1, 5))
    np.testing.assert_array_equal(q.h, 0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), d=st.integers(1, 3), dt=st.integers(1, 3))
def test_random_monotone_is_increasing(seed, d, dt):
    f = random_monotone_system(seed, d, dt)
    rng = np.random.default_rng(seed)
    a = rng.random((50, max(d, dt)))
    b = np.minimum(a + rng.random(a.shape) * 0.1, 1.0)
    assert np.all(f.phi(b[:, :d]) >= f.phi(a[:, :d]))
    assert np.all(f.psi(b[:, :dt]) >= f.psi(a[:, :dt]))
    assert np.all((f.phi(a[:, :d]) >= 0) & (f.phi(a[:, :d]) <= 1))


def test_tabulated_system_roundtrip(tmp_path):
    t = np.linspace(0, 1, 41)
    path = tmp_path / "sys.csv"
    np.savetxt(path, np.column_stack((t, 1 - 0.47 * (1 - t) ** 2, t**5)), delimiter=",",
               header="t,phi0,psi0", comments="")
    f = tabulated_system(path)
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(diagonal_reduce(f, "psi", x), x**5, atol=2e-4)
    bad = tmp_path / "bad.csv"
    bad.write_text("t,phi0,psi0\n0,0,0\n0.5,0.2,0.2\n")
    with pytest.raises(ParameterError):
        tabulated_system(bad)
