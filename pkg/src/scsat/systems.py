"""Built-in system instances and random monotone test systems."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ParameterError
from .system import MultilinearForm, SystemFunctions


def identity_system() -> SystemFunctions:
    """phi(v) = v, psi(u) = u with d = d~ = 1 (every point is a fixed point)."""
    one = lambda x: np.ones_like(x)
    zero = lambda x: np.zeros_like(x)
    ident = lambda x: np.asarray(x, dtype=float)
    return SystemFunctions(
        d=1, d_tilde=1,
        phi=lambda V: V[..., 0],
        psi=lambda U: U[..., 0],
        analytic=dict(phi0=ident, dphi0=one, d2phi0=zero, lap_phi=zero,
                      psi0=ident, dpsi0=one, d2psi0=zero, lap_psi=zero),
        phi_form=MultilinearForm(ident, ident),
        psi_form=MultilinearForm(ident, ident),
        name="identity",
    )


def bec_regular_system(l: int = 3, r: int = 6, eps: float = 0.45) -> SystemFunctions:
    """(l, r)-regular LDPC over the BEC in success-probability variables.

    u is the probability that a variable-to-check message is known; v the
    probability that a check-to-variable message is known:

        phi(v_1..v_{l-1}) = 1 - eps * prod(1 - v_j),    psi(u_1..u_{r-1}) = prod(u_j)

    Both maps are multilinear, so their diagonal Laplacians vanish.
    """
    if l < 2 or r < 2:
        raise ParameterError("need l >= 2 and r >= 2")
    if not 0.0 < eps <= 1.0:
        raise ParameterError("eps must lie in (0, 1]")
    d, dt = l - 1, r - 1

    def phi0(v):
        return 1.0 - eps * (1.0 - v) ** d

    def psi0(u):
        return u**dt

    analytic = dict(
        phi0=phi0,
        dphi0=lambda v: eps * d * (1.0 - v) ** (d - 1),
        d2phi0=lambda v: -eps * d * (d - 1) * (1.0 - v) ** (d - 2) if d >= 2 else 0.0 * v,
        lap_phi=lambda v: 0.0 * v,
        psi0=psi0,
        dpsi0=lambda u: dt * u ** (dt - 1),
        d2psi0=lambda u: dt * (dt - 1) * u ** (dt - 2) if dt >= 2 else 0.0 * u,
        lap_psi=lambda u: 0.0 * u,
    )
    ident = lambda x: np.asarray(x, dtype=float)
    return SystemFunctions(
        d=d, d_tilde=dt,
        phi=lambda V: 1.0 - eps * np.prod(1.0 - V, axis=-1),
        psi=lambda U: np.prod(U, axis=-1),
        analytic=analytic,
        phi_form=MultilinearForm(ident, phi0),
        psi_form=MultilinearForm(ident, psi0),
        name=f"bec{l}{r}",
        meta={"l": l, "r": r, "eps": eps},
    )


def bec36(eps: float) -> SystemFunctions:
    return bec_regular_system(3, 6, eps)


class _SmoothRamp:
    """Strictly increasing smooth map [0,1] -> [0,1] with closed-form derivatives.

    s(x) = w_lin x + w_pow x^p + w_log (logistic(k(x-c)) normalised to [0,1]).
    """

    def __init__(self, rng: np.random.Generator):
        w = rng.dirichlet([1.0, 1.0, 1.0])
        self.w_lin = 0.15 + 0.85 * w[0]
        rest = 1.0 - self.w_lin
        self.w_pow = rest * w[1] / (w[1] + w[2])
        self.w_log = rest - self.w_pow
        self.p = int(rng.integers(2, 5))
        self.k = rng.uniform(2.0, 12.0)
        self.c = rng.uniform(0.2, 0.8)
        self._lo = self._sig(0.0)
        self._span = self._sig(1.0) - self._lo

    def _sig(self, x):
        return 1.0 / (1.0 + np.exp(-self.k * (x - self.c)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (self.w_lin * x + self.w_pow * np.abs(x) ** self.p
                + self.w_log * (self._sig(x) - self._lo) / self._span)

    def d1(self, x):
        s = self._sig(x)
        return (self.w_lin + self.w_pow * self.p * np.abs(x) ** (self.p - 1)
                + self.w_log * self.k * s * (1 - s) / self._span)

    def d2(self, x):
        s = self._sig(x)
        return (self.w_pow * self.p * (self.p - 1) * np.abs(x) ** (self.p - 2)
                + self.w_log * self.k**2 * s * (1 - s) * (1 - 2 * s) / self._span)


def random_scalar_system(seed: int) -> SystemFunctions:
    """Random smooth strictly increasing d = d~ = 1 system on [0,1] with analytic derivatives.

    phi(v) = a + (1 - a) s_phi(v) keeps phi0 >= a > 0, so u = 0 is never a fixed point.
    """
    rng = np.random.default_rng(seed)
    sp, sq = _SmoothRamp(rng), _SmoothRamp(rng)
    a = rng.uniform(0.02, 0.3)
    phi0 = lambda v: a + (1 - a) * sp(v)
    dphi0 = lambda v: (1 - a) * sp.d1(v)
    d2phi0 = lambda v: (1 - a) * sp.d2(v)
    return SystemFunctions(
        d=1, d_tilde=1,
        phi=lambda V: phi0(V[..., 0]),
        psi=lambda U: sq(U[..., 0]),
        analytic=dict(phi0=phi0, dphi0=dphi0, d2phi0=d2phi0, lap_phi=d2phi0,
                      psi0=sq, dpsi0=sq.d1, d2psi0=sq.d2, lap_psi=sq.d2),
        name=f"random-scalar-{seed}",
        meta={"seed": seed},
    )


def random_monotone_system(seed: int, d: int, d_tilde: int) -> SystemFunctions:
    """Random smooth system, increasing in every argument, not multilinear.

    phi(v) = a + (1 - a) s(sum_j c_j v_j) with positive weights c summing to one.
    Derivatives are left to finite differences.
    """
    rng = np.random.default_rng(seed)
    sp, sq = _SmoothRamp(rng), _SmoothRamp(rng)
    cp = rng.dirichlet(np.ones(d))
    cq = rng.dirichlet(np.ones(d_tilde))
    a = rng.uniform(0.02, 0.3)
    return SystemFunctions(
        d=d, d_tilde=d_tilde,
        phi=lambda V: a + (1 - a) * sp(np.clip(V @ cp, 0.0, 1.0)),
        psi=lambda U: sq(np.clip(U @ cq, 0.0, 1.0)),
        derivative_mode="finite-difference",
        name=f"random-{d}-{d_tilde}-{seed}",
        meta={"seed": seed},
    )


def tabulated_system(path) -> SystemFunctions:
    """d = d~ = 1 system from sampled tables.

    The file is CSV with a header naming the columns ``t,phi0,psi0``: phi0 is
    sampled at v = t and psi0 at u = t, with t covering [0, 1]. Both are
    interpolated by monotone cubics; derivatives use finite differences.
    """
    data = np.genfromtxt(path, delimiter=",", names=True, comments="#")
    try:
        t, ph, ps = (np.asarray(data[c], dtype=float) for c in ("t", "phi0", "psi0"))
    except (ValueError, KeyError):
        raise ParameterError(f"{path}: need columns t, phi0, psi0") from None
    if t.size < 4 or np.any(np.diff(t) <= 0) or t[0] != 0.0 or t[-1] != 1.0:
        raise ParameterError(f"{path}: t must increase strictly from 0 to 1 (at least 4 rows)")
    fphi, fpsi = PchipInterpolator(t, ph), PchipInterpolator(t, ps)
    return SystemFunctions(
        d=1, d_tilde=1,
        phi=lambda V: fphi(V[..., 0]),
        psi=lambda U: fpsi(U[..., 0]),
        derivative_mode="finite-difference",
        name=f"table:{path}",
    )
