import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from scsat.errors import BracketError
from scsat.potential import (AB, conventional_potential, coordinate_map, equivalence_fit,
                             exponent_D, potential, potential_threshold, write_potential_csv)
from scsat.system import build_profile_table, evaluate_quantities
from scsat.systems import bec36, identity_system, random_scalar_system

# frozen: the in-repo bisection; the closed-form scan below is the oracle
EPS_STAR = 0.5010449409


def _closed_form_delta(eps):
    """V(1) - V(u_low) for bec36 from V'(u) = h(u) / phi0'(psi0(u))."""
    dv = lambda u: (u - 1 + eps * (1 - u**5) ** 2) / (2 * eps * (1 - u**5))
    g = np.linspace(0, 1, 4001)[:-1]
    h = g - (1 - eps * (1 - g**5) ** 2)
    k = np.flatnonzero(h[:-1] * h[1:] < 0)[0]
    low = brentq(lambda x: x - (1 - eps * (1 - x**5) ** 2), g[k], g[k + 1])
    return quad(dv, low, 1, limit=400, epsabs=1e-14, epsrel=1e-13)[0]


def test_eps_star_against_closed_form_oracle():
    oracle = brentq(_closed_form_delta, 0.49, 0.51, xtol=1e-12)
    assert abs(oracle - EPS_STAR) < 1e-6
    got = potential_threshold(bec36, 0.45, 0.60, 1e-7, 1024)
    assert abs(got - EPS_STAR) < 1e-6


def test_bec36_integrand_closed_form():
    eps = 0.47
    table = build_profile_table(bec36(eps), 257)
    prof = potential(table)
    u = table.u[1:-1]
    expect = (u - 1 + eps * (1 - u**5) ** 2) / (2 * eps * (1 - u**5))
    np.testing.assert_allclose(prof.integrand[1:-1], expect, rtol=1e-10, atol=1e-12)


def test_global_minimizer_switch():
    below = potential(build_profile_table(bec36(0.47), 1024))
    above = potential(build_profile_table(bec36(0.52), 1024))
    assert below.opt_is_unique_global_min
    assert not above.opt_is_unique_global_min
    assert [p.kind for p in below.stationary] == ["min", "max", "min"]


def test_identity_potential_vanishes():
    table = build_profile_table(identity_system(), 128)
    prof = potential(table)
    assert np.all(prof.V == 0.0)
    assert prof.global_min_u is None and not prof.unique_global_min


def test_d1_exponent_constant():
    table = build_profile_table(random_scalar_system(5), 512)
    E = potential(table).E
    assert np.ptp(E[np.isfinite(E)]) < 1e-8
    Vc = conventional_potential(table)
    assert np.ptp(potential(table).V * np.exp(-E[0]) - Vc) < 1e-8


def test_exponent_D_finite():
    table = build_profile_table(bec36(0.47), 256)
    D = exponent_D(table, "phi")
    assert np.all(np.isfinite(D[1:-1]))


def test_AB_bec36_closed_form():
    eps = 0.47
    u = np.linspace(0.1, 0.9, 9)
    q = evaluate_quantities(bec36(eps), u)
    A, B = AB(q)
    dphi = 2 * eps * (1 - u**5)
    np.testing.assert_allclose(B, dphi * 5 * u**4 / 3, rtol=1e-13)
    np.testing.assert_allclose(A, dphi * 20 * u**3 / 6, rtol=1e-13)


def test_coordinate_map_identity():
    table = build_profile_table(identity_system(), 65)
    cm = coordinate_map(table)
    np.testing.assert_allclose(cm.C, 0.0, atol=1e-14)
    np.testing.assert_allclose(cm.f, table.u, atol=1e-13)


def test_coordinate_map_inverse_and_monotone():
    table = build_profile_table(bec36(0.53), 1024)
    cm = coordinate_map(table)
    assert np.all(np.diff(cm.f) > 0)
    u = np.linspace(0.05, 0.95, 31)
    np.testing.assert_allclose(cm.u_of_y(cm.y_of_u(u)), u, atol=1e-8)


def test_equivalence_bec36():
    table = build_profile_table(bec36(0.53), 2048)
    k, c, dev = equivalence_fit(potential(table), coordinate_map(table), table)
    assert k > 0 and dev < 1e-6


def test_threshold_bracket_error():
    with pytest.raises(BracketError):
        potential_threshold(bec36, 0.40, 0.45, 1e-4, 256)


def test_potential_csv(tmp_path):
    table = build_profile_table(bec36(0.47), 64)
    path = tmp_path / "v.csv"
    write_potential_csv(path, potential(table), coordinate_map(table), "# h")
    rows = path.read_text().splitlines()
    assert rows[1] == "u,integrand,V,E,A,B,C,f" and len(rows) == 66
