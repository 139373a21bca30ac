"""MAP-decoder EXIT function of regular LDPC ensembles over an extrinsic BEC.

EBP curve in the variable-to-check erasure probability x:

    y(x) = 1 - (1 - x)^(r-1),   eps(x) = x / y^(l-1),   h(x) = y^l

h is the extrinsic erasure probability of a code bit. The MAP EXIT curve is
h on the stable branch for eps >= eps_MAP and 0 below; in mutual-information
form g(I) = 1 - h_MAP(1 - I).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre as leg
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, minimize_scalar

from ..errors import ModelError, ParameterError


@dataclass(frozen=True)
class RegularEnsemble:
    l: int = 3
    r: int = 6

    def __post_init__(self):
        if self.l < 3 or self.r <= self.l:
            raise ModelError("supported ensembles: regular (l, r) with 3 <= l < r")

    @property
    def rate(self) -> float:
        return 1.0 - self.l / self.r

    # EBP curve and derivatives in x
    def y(self, x, k: int = 0):
        x = np.asarray(x, dtype=float)
        r = self.r
        if k == 0:
            return 1.0 - (1.0 - x) ** (r - 1)
        if k == 1:
            return (r - 1) * (1.0 - x) ** (r - 2)
        return -(r - 1) * (r - 2) * (1.0 - x) ** (r - 3)

    def eps(self, x, k: int = 0):
        x = np.asarray(x, dtype=float)
        l = self.l
        y, y1, y2 = self.y(x), self.y(x, 1), self.y(x, 2)
        if k == 0:
            return x * y ** (1 - l)
        if k == 1:
            return y ** (1 - l) - (l - 1) * x * y**-l * y1
        return (-2 * (l - 1) * y**-l * y1 + l * (l - 1) * x * y ** (-l - 1) * y1**2
                - (l - 1) * x * y**-l * y2)

    def h(self, x, k: int = 0):
        x = np.asarray(x, dtype=float)
        l = self.l
        y, y1, y2 = self.y(x), self.y(x, 1), self.y(x, 2)
        if k == 0:
            return y**l
        if k == 1:
            return l * y ** (l - 1) * y1
        return l * (l - 1) * y ** (l - 2) * y1**2 + l * y ** (l - 1) * y2

    @cached_property
    def x_bp(self) -> float:
        res = minimize_scalar(self.eps, bounds=(1e-6, 1.0), method="bounded",
                              options={"xatol": 1e-14})
        return float(res.x)

    @cached_property
    def eps_bp(self) -> float:
        """BP threshold: minimum of eps(x) over the EBP curve."""
        return float(self.eps(self.x_bp))

    @cached_property
    def _maxwell(self) -> tuple[float, float]:
        x_star = brentq(self._area_defect, self.x_bp, 1.0 - 1e-12, xtol=1e-15)
        return float(x_star), float(self.eps(x_star))

    def _area_defect(self, xs: float) -> float:
        # area under the stable EBP branch from xs to 1 minus the design rate
        val = quad(lambda x: float(self.h(x) * self.eps(x, 1)), xs, 1.0, limit=200,
                   epsabs=1e-14, epsrel=1e-13)[0]
        return val - self.rate

    @property
    def x_map(self) -> float:
        return self._maxwell[0]

    @property
    def eps_map(self) -> float:
        """MAP threshold from the area theorem on the stable EBP branch."""
        return self._maxwell[1]

    @property
    def I_jump(self) -> float:
        return 1.0 - self.eps_map

    @property
    def z_jump(self) -> float:
        """g just below the jump, 1 - h(x_map)."""
        return float(1.0 - self.h(self.x_map))

    @cached_property
    def _branch(self):
        # dense inverse of eps on the stable branch [x_map, 1]
        t = np.linspace(0.0, 1.0, 4001)
        xs = self.x_map + (1.0 - self.x_map) * t
        return PchipInterpolator(self.eps(xs), xs)

    def x_of_eps(self, e):
        """Stable-branch root of eps(x) = e for e in [eps_map, 1]."""
        e = np.asarray(e, dtype=float)
        x = np.clip(self._branch(e), self.x_map, 1.0)
        for _ in range(4):
            x = np.clip(x - (self.eps(x) - e) / self.eps(x, 1), self.x_map, 1.0)
        return x


def eps_map_maxwell(ens: RegularEnsemble) -> float:
    """Independent MAP threshold: balance of the signed area between the EBP
    curve (in the eps-h plane) and the vertical line at the candidate eps."""
    def balance(xs):
        em = float(ens.eps(xs))
        return quad(lambda x: (float(ens.eps(x)) - em) * float(ens.h(x, 1)), 1e-14, xs,
                    limit=400, epsabs=1e-14, epsrel=1e-13)[0]
    xs = brentq(balance, ens.x_bp, 1.0 - 1e-9, xtol=1e-15)
    return float(ens.eps(xs))


def eps_bp_bisection(ens: RegularEnsemble, tol: float = 1e-8, max_iter: int = 400000) -> float:
    """BP threshold by bisection on convergence of x <- eps lambda(1 - rho(1 - x)) from x = 1."""
    l = ens.l

    def decodes(e):
        x = 1.0
        for _ in range(max_iter):
            nx = e * ens.y(x) ** (l - 1)
            if nx < 1e-10:
                return True
            if abs(nx - x) < 1e-15:
                return False
            x = nx
        return False

    a, b = 0.0, 1.0
    while b - a > tol:
        m = 0.5 * (a + b)
        if decodes(m):
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def decoder_map_exit(ens: RegularEnsemble, I):
    """g(I) = 1 - h_MAP(1 - I); equal to 1 above the jump I_jump = 1 - eps_MAP."""
    I = np.asarray(I, dtype=float)
    if np.any((I < 0) | (I > 1)):
        raise ParameterError("I must lie in [0, 1]")
    out = np.ones_like(I)
    below = I < ens.I_jump
    if np.any(below):
        x = ens.x_of_eps(1.0 - I[below])
        out[below] = 1.0 - ens.h(x)
    return out if out.ndim else float(out)


def decoder_branch(ens: RegularEnsemble, I, k: int = 0):
    """k-th derivative of the continuous branch 1 - h(x(1 - I)) on [0, I_jump]."""
    I = np.asarray(I, dtype=float)
    x = ens.x_of_eps(np.clip(1.0 - I, ens.eps_map, 1.0))
    if k == 0:
        return 1.0 - ens.h(x)
    e1, h1 = ens.eps(x, 1), ens.h(x, 1)
    if k == 1:
        return h1 / e1
    e2, h2 = ens.eps(x, 2), ens.h(x, 2)
    return -(h2 * e1 - h1 * e2) / e1**3


def decoder_inverse(ens: RegularEnsemble, z):
    """Lower inverse of g: I with g(I) = z for z < z_jump, I_jump for z >= z_jump."""
    z = np.asarray(z, dtype=float)
    out = np.full(z.shape, ens.I_jump)
    below = z < ens.z_jump
    if np.any(below):
        y = (1.0 - z[below]) ** (1.0 / ens.l)
        x = 1.0 - (1.0 - y) ** (1.0 / (ens.r - 1))
        out[below] = 1.0 - x / y ** (ens.l - 1)
    return out if out.ndim else float(out)


def _logistic(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


class SmoothDecoderCurve:
    """Smooth strictly increasing surrogate g_n of the MAP EXIT curve.

    The continuous part g_c = g - J H(I - I_jump) (extended by constants outside
    [0, 1]) is convolved with a logistic kernel of scale 1/n, the jump J is
    replaced by J * logistic(n (I - I_jump)), the result is normalised to
    g_n(0) = 0, g_n(1) = 1 and mixed with a linear ramp of weight 1/n^2.
    """

    SUPPORT = 36.0  # kernel truncated at |s| <= SUPPORT / n
    ORDER = 16

    def __init__(self, ens: RegularEnsemble, n: float):
        if n < 1:
            raise ParameterError("smoothing index n must be >= 1")
        self.ens = ens
        self.n = float(n)
        self.Ij = ens.I_jump
        self.J = 1.0 - ens.z_jump
        self.top = 1.0 - self.J  # g_c for I >= I_jump
        self.slope0 = float(decoder_branch(ens, 0.0, 1))
        self.slopeJ = float(decoder_branch(ens, self.Ij, 1))
        self._t, self._w = leg.leggauss(self.ORDER)
        s0, s1 = self._raw(np.array([0.0, 1.0]), 0)
        self._lo, self._span = s0, s1 - s0
        self._ramp = 1.0 / self.n**2
        self._cache = {}

    def _kernel(self, s, k: int = 0):
        t = self.n * s
        p = _logistic(t)
        if k == 0:
            return self.n * p * (1 - p)
        return self.n**2 * p * (1 - p) * (1 - 2 * p)

    def _gc(self, I, k: int):
        I = np.asarray(I, dtype=float)
        inside = (I > 0) & (I < self.Ij)
        out = np.zeros(I.shape)
        if np.any(inside):
            out[inside] = decoder_branch(self.ens, I[inside], k)
        return out

    def _conv(self, I, k: int):
        """(g_c^{(k)} * kernel)(I).

        Only s in (I - I_jump, I) sees the curved branch; the constant part of
        g_c contributes top * logistic(n (I - I_jump)) exactly. The branch
        integral is split at kernel-scaled breakpoints around s = 0.
        """
        S = self.SUPPORT / self.n
        I = np.asarray(I, dtype=float)
        flat = I.ravel()
        a = np.clip(flat - self.Ij, -S, S)
        b = np.maximum(np.clip(flat, -S, S), a)
        fixed = np.array([0.0] + [sg * 2.0**j / self.n for j in range(5) for sg in (-1, 1)])
        pts = np.concatenate((np.broadcast_to(fixed, (flat.size, fixed.size)),
                              a[:, None], b[:, None]), axis=1)
        pts = np.sort(np.clip(pts, a[:, None], b[:, None]), axis=1)
        lo, hi = pts[:, :-1], pts[:, 1:]
        half = 0.5 * (hi - lo)
        s = (0.5 * (lo + hi))[..., None] + half[..., None] * self._t
        vals = self._gc(flat[:, None, None] - s, k) * self._kernel(s)
        total = np.sum(half * (vals @ self._w), axis=1)
        if k == 0:
            total = total + self.top * _logistic(self.n * (flat - self.Ij))
        return total.reshape(I.shape)

    def _raw(self, I, k: int):
        I = np.asarray(I, dtype=float)
        t = self.n * (I - self.Ij)
        p = _logistic(t)
        if k == 0:
            return self._conv(I, 0) + self.J * p
        if k == 1:
            return self._conv(I, 1) + self.J * self.n * p * (1 - p)
        kinks = self.slope0 * self._kernel(I) - self.slopeJ * self._kernel(I - self.Ij)
        return self._conv(I, 2) + kinks + self.J * self.n**2 * p * (1 - p) * (1 - 2 * p)

    def __call__(self, I, k: int = 0):
        """g_n or its k-th derivative (k = 0, 1, 2)."""
        I = np.asarray(I, dtype=float)
        key = None
        if I.size > 256:
            # potential tables reuse the same quadrature nodes across SNR values
            key = (k, I.shape, hash(I.tobytes()))
            if key in self._cache:
                return self._cache[key].copy()
        out = self._eval(I, k)
        if key is not None:
            if len(self._cache) > 32:
                self._cache.clear()
            self._cache[key] = out.copy()
        return out

    def _eval(self, I, k):
        if k == 0:
            G = (self._raw(I, 0) - self._lo) / self._span
            out = (G + self._ramp * I) / (1.0 + self._ramp)
        else:
            out = (self._raw(I, k) / self._span + (self._ramp if k == 1 else 0.0)) / (1.0 + self._ramp)
        return out if out.ndim else float(out)


def smooth_g(ens: RegularEnsemble, I, n: float):
    return SmoothDecoderCurve(ens, n)(I)
