"""Continuum limit of coupled DE: integral operator, differential operator,
time-marched PDE and the stationary boundary-value problem.

x lives on [-1, 1] with section l of a length-L chain at x = 2l/L - 1, so a
window of W sections spans 2 alpha with alpha = W/L. The integral systems are

    v(x) = mean over w in [-a, a]^d~ of psi(u(x - w)),   |x| <= 1 - alpha
    v(x) = v_opt,                                          |x| >  1 - alpha
    L[u](x) = mean over w in [-a, a]^d of phi(v(x + w)),  |x| <= 1

with a = scale * alpha (scale = 1 by default). Expanding to second order
in alpha gives the differential operator

    L~[u] = phi0(psi0(u)) + alpha^2 (A(u) u'^2 + B(u) u'').
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as leg
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.stats import qmc

from .de import de_run, find_fixed_points
from .errors import InstabilityError, ParameterError, SolverError
from .potential import AB, coordinate_map
from .system import (ScalarProfileTable, SystemFunctions, diagonal_reduce,
                     evaluate_quantities)

PDE_TOL = 1e-6
NEWTON_TOL = 1e-10
GL_NODES = 8
QMC_NODES = 10**4
MAX_TENSOR_DIM = 3


@dataclass
class SpatialProfile:
    x: np.ndarray
    values: np.ndarray
    alpha: float
    kind: str = "u"              # "u" or "v"
    meta: dict = field(default_factory=dict)

    @property
    def n_x(self) -> int:
        return self.x.size

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def spline(self) -> CubicSpline:
        return CubicSpline(self.x, self.values)

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.values - self.values[::-1])))


def grid_size(alpha: float, minimum: int = 512) -> int:
    """Smallest n >= max(minimum, ceil(32/alpha)) with alpha a whole number of cells.

    Falls back to the unaligned size if no such n exists within 4096 extra nodes.
    """
    n0 = max(minimum, math.ceil(32.0 / alpha))
    for n in range(n0, n0 + 4096):
        cells = (n - 1) * alpha / 2.0
        if abs(cells - round(cells)) < 1e-9:
            return n
    return n0


def make_grid(alpha: float, n_x: int | None = None) -> np.ndarray:
    _check_alpha(alpha)
    return np.linspace(-1.0, 1.0, n_x or grid_size(alpha))


def profile_from(fun, alpha: float, n_x: int | None = None, kind: str = "u") -> SpatialProfile:
    x = make_grid(alpha, n_x)
    return SpatialProfile(x, np.asarray(fun(x), dtype=float) * np.ones_like(x), alpha, kind,
                          {"source": "function"})


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")


# window quadrature

def _window_rule(centers: np.ndarray, a: float, breaks) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and weights (rows sum to 1) for the mean over [-a, a] at each center.

    Two Gauss-Legendre panels per window, split at a break point of the
    integrand if one falls inside the window, else at the window center.
    """
    t, w = leg.leggauss(GL_NODES)
    split = np.zeros(centers.shape)
    for b in breaks:
        inside = np.abs(b - centers) < a
        split = np.where(inside, b - centers, split)
    lo = np.stack((np.full(centers.shape, -a), split), axis=-1)
    hi = np.stack((split, np.full(centers.shape, a)), axis=-1)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    offs = (mid[..., None] + half[..., None] * t).reshape(centers.shape + (-1,))
    wts = (half[..., None] * w).reshape(centers.shape + (-1,)) / (2.0 * a)
    return offs, wts


def _mean_over_window(f, form, k: int, sample, centers, a: float, breaks, sign: int, seed: int):
    """mean over w in [-a, a]^k of f(sample(centers + sign * w_1), ..., sample(centers + sign * w_k))."""
    if form is not None:
        offs, wts = _window_rule(centers, a, breaks)
        inner = form.inner(sample(centers[:, None] + sign * offs))
        return np.asarray(form.outer_diag(np.sum(inner * wts, axis=1)), dtype=float)
    if k <= MAX_TENSOR_DIM:
        offs, wts = _window_rule(centers, a, breaks)
        m = offs.shape[1]
        grids = np.meshgrid(*([np.arange(m)] * k), indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=-1)
        vals = sample(centers[:, None, None] + sign * offs[:, idx])
        wt = np.prod(wts[:, idx], axis=-1)
        return np.sum(np.asarray(f(vals)) * wt, axis=1)
    pts = qmc.Halton(d=k, scramble=True, seed=seed).random(QMC_NODES)
    offs = a * (2.0 * pts - 1.0)
    out = np.empty(centers.shape)
    for i, c in enumerate(centers):
        out[i] = np.mean(f(sample(c + sign * offs)))
    return out


def _v_opt(funcs: SystemFunctions, v_opt):
    if v_opt is not None:
        return float(v_opt)
    return float(find_fixed_points(funcs).v_opt)


def v_profile(u: SpatialProfile, funcs: SystemFunctions, *, v_opt: float | None = None,
              scale: float = 1.0, seed: int = 0):
    """Callable x -> v(x) built from the u profile (u sampled by a cubic spline)."""
    alpha = u.alpha
    _check_alpha(alpha)
    a = scale * alpha
    vo = _v_opt(funcs, v_opt)
    us = u.spline()
    lo, hi = funcs.u_domain
    sample = lambda x: np.clip(us(np.clip(x, -1.0, 1.0)), lo, hi)
    breaks = (-(1.0 - 2.0 * alpha), 1.0 - 2.0 * alpha)
    edge = 1.0 - alpha

    def v(x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.full(flat.shape, vo)
        inside = np.abs(flat) <= edge + 1e-12
        if np.any(inside):
            out[inside] = _mean_over_window(funcs.psi, funcs.psi_form, funcs.d_tilde, sample,
                                            flat[inside], a, breaks, -1, seed)
        return out.reshape(x.shape)

    return v


def integral_operator(u: SpatialProfile, funcs: SystemFunctions, *, v_opt: float | None = None,
                      scale: float = 1.0, seed: int = 0) -> SpatialProfile:
    """One application of the integral systems, L[u], on the grid of ``u``."""
    if u.alpha * (u.n_x - 1) / 2.0 < 8 - 1e-9:
        raise ParameterError("grid too coarse: the window must span at least 8 cells")
    a = scale * u.alpha
    v = v_profile(u, funcs, v_opt=v_opt, scale=scale, seed=seed)
    edge = 1.0 - u.alpha
    out = _mean_over_window(funcs.phi, funcs.phi_form, funcs.d, v, u.x, a, (-edge, edge), 1, seed)
    lo, hi = funcs.u_domain
    return SpatialProfile(u.x.copy(), np.clip(out, lo, hi), u.alpha, "u",
                          {"operator": "integral", "scale": scale})


def integral_iterate(funcs: SystemFunctions, alpha: float, iterations: int, *,
                     n_x: int | None = None, u0: float | None = None, scale: float = 1.0,
                     v_opt: float | None = None) -> list:
    """Profiles u(x, 0..iterations) starting from u(x, 0) = u_min."""
    vo = _v_opt(funcs, v_opt)
    x = make_grid(alpha, n_x)
    u = SpatialProfile(x, np.full(x.size, funcs.u_min if u0 is None else u0), alpha, "u")
    out = [u]
    for _ in range(iterations):
        u = integral_operator(u, funcs, v_opt=vo, scale=scale)
        out.append(u)
    return out


# differential operator

def _derivs(values: np.ndarray, dx: float):
    d1 = np.gradient(values, dx, edge_order=2)
    d2 = np.empty_like(values)
    d2[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / dx**2
    d2[0] = (2 * values[0] - 5 * values[1] + 4 * values[2] - values[3]) / dx**2
    d2[-1] = (2 * values[-1] - 5 * values[-2] + 4 * values[-3] - values[-4]) / dx**2
    return d1, d2


def differential_operator(u: SpatialProfile, table: ScalarProfileTable) -> SpatialProfile:
    """L~[u] = phi0(psi0(u)) + alpha^2 (A u'^2 + B u'') with finite differences on the grid."""
    q = evaluate_quantities(table.funcs, u.values)
    A, B = AB(q)
    d1, d2 = _derivs(u.values, u.dx)
    out = q.phi0 + u.alpha**2 * (A * d1**2 + B * d2)
    return SpatialProfile(u.x.copy(), out, u.alpha, "u", {"operator": "differential"})


def stationary_residual(u: SpatialProfile, table: ScalarProfileTable) -> np.ndarray:
    """u - L~[u] at the grid nodes (zero at the pinned ends)."""
    r = u.values - differential_operator(u, table).values
    r[[0, -1]] = 0.0
    return r


# operator gap

@dataclass(frozen=True)
class GapReport:
    alphas: np.ndarray
    bulk_gap: np.ndarray
    total_gap: np.ndarray
    slope: float

    def rows(self):
        return zip(self.alphas, self.bulk_gap, self.total_gap)


def _trapezoid(x, y):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def operator_gap(u, funcs: SystemFunctions, table: ScalarProfileTable, alphas, *,
                 v_opt: float | None = None, scale: float = 1.0) -> GapReport:
    """int |L[u] - L~[u]| dx over [-1, 1] and over the bulk |x| < 1 - 2 alpha.

    ``u`` is a callable on [-1, 1] or a SpatialProfile (resampled by spline).
    The slope is the least-squares log-log slope of the bulk gap against alpha.
    """
    fun = u.spline() if isinstance(u, SpatialProfile) else u
    vo = _v_opt(funcs, v_opt)
    alphas = np.asarray(alphas, dtype=float)
    bulk, total = [], []
    for alpha in alphas:
        prof = profile_from(fun, alpha)
        diff = np.abs(integral_operator(prof, funcs, v_opt=vo, scale=scale).values
                      - differential_operator(prof, table).values)
        x = prof.x
        total.append(_trapezoid(x, diff))
        m = np.abs(x) <= 1.0 - 2.0 * alpha + 1e-12
        bulk.append(_trapezoid(x[m], diff[m]))
    bulk, total = np.array(bulk), np.array(total)
    pos = bulk > 0
    slope = float(np.polyfit(np.log(alphas[pos]), np.log(bulk[pos]), 1)[0]) if pos.sum() >= 2 else np.inf
    return GapReport(alphas, bulk, total, slope)


# time-marched PDE

def stable_dt(table: ScalarProfileTable, alpha: float, dx: float) -> float:
    """0.2 min(1, dx^2 / (4 alpha^2 max B))."""
    _, B = AB(table.values)
    bmax = float(np.max(B[np.isfinite(B)]))
    if bmax <= 0:
        return 0.2
    return 0.2 * min(1.0, dx**2 / (alpha**2 * bmax * 4.0))


def de_profile(funcs: SystemFunctions, alpha: float, L: int = 200, x=None,
               max_iter: int = 10**5) -> SpatialProfile:
    """Converged coupled-DE profile (W = round(alpha L)) on x = 2l/L - 1, resampled to ``x``."""
    W = max(1, int(round(alpha * L)))
    state, _ = de_run(funcs, L, W, max_iter=max_iter)
    xl = 2.0 * np.arange(L) / L - 1.0
    xl = np.append(xl, 1.0)
    ul = np.append(state.u, diagonal_reduce(funcs, "phi", state.v_opt))
    x = make_grid(alpha) if x is None else np.asarray(x, dtype=float)
    return SpatialProfile(x, np.interp(x, xl, ul), alpha, "u",
                          {"source": "de", "L": L, "W": W})


def _smooth3(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    out[1:-1] = (values[:-2] + values[1:-1] + values[2:]) / 3.0
    return out


@dataclass
class RelaxResult:
    profile: SpatialProfile
    residual: float
    t: float
    steps: int
    converged: bool


class _Coefficients:
    """phi0(psi0(u)), A(u), B(u) from cubic splines over the table grid.

    Falls back to direct evaluation when a tabulated value is not finite.
    """

    def __init__(self, table: ScalarProfileTable):
        self.funcs = table.funcs
        A, B = AB(table.values)
        vals = np.stack((table.values.phi0, A, B))
        self.spline = CubicSpline(table.u, vals, axis=1) if np.all(np.isfinite(vals)) else None

    def __call__(self, u):
        if self.spline is not None:
            return self.spline(u)
        q = evaluate_quantities(self.funcs, u)
        return (q.phi0, *AB(q))


def pde_relax(funcs: SystemFunctions, table: ScalarProfileTable, alpha: float,
              init: SpatialProfile | None = None, t_max: float = 200.0, dt: float | None = None,
              tol: float = PDE_TOL, u_opt: float | None = None, margin: float = 1e-6,
              check_every: int = 50) -> RelaxResult:
    """Explicit Euler for du/dt = -u + L~[u] with u(+-1, t) = u_opt.

    Stops once max |du/dt| < ``tol`` (checked every ``check_every`` steps) or at ``t_max``.
    """
    _check_alpha(alpha)
    u_opt = float(find_fixed_points(funcs).u_opt) if u_opt is None else float(u_opt)
    if init is None:
        init = de_profile(funcs, alpha)
        init = SpatialProfile(init.x, _smooth3(init.values), alpha, "u", init.meta)
    u = init.values.astype(float).copy()
    u[[0, -1]] = u_opt
    x = init.x
    dx = float(x[1] - x[0])
    dt = stable_dt(table, alpha, dx) if dt is None else float(dt)
    lo, hi = funcs.u_domain
    span = hi - lo
    coef = _Coefficients(table)
    a2 = alpha**2
    t, steps = 0.0, 0
    rate = np.zeros_like(u)
    while t < t_max:
        F, A, B = coef(u[1:-1])
        d1 = (u[2:] - u[:-2]) / (2.0 * dx)
        d2 = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx**2
        rate[1:-1] = F + a2 * (A * d1**2 + B * d2) - u[1:-1]
        if steps % check_every == 0 and float(np.max(np.abs(rate))) < tol:
            break
        u = u + dt * rate
        if np.any(~np.isfinite(u)) or u.min() < lo - margin * span or u.max() > hi + margin * span:
            raise InstabilityError(f"profile left the domain at t = {t:.4g}; use a smaller dt than {dt:.3g}")
        u = np.clip(u, lo, hi)
        t += dt
        steps += 1
    prof = SpatialProfile(x, u, alpha, "u", {"operator": "pde", "dt": dt, "u_opt": u_opt})
    res = float(np.max(np.abs(stationary_residual(prof, table))))
    return RelaxResult(prof, res, t, steps, res < tol)


# stationary BVP

@dataclass
class BvpResult:
    profile: SpatialProfile
    y: np.ndarray | None
    residual_u: float            # max |u - L~[u]|
    residual_y: float            # max |alpha^2 y'' - V~'(y)|, nan for the u-form
    iterations: int
    form: str


def _tridiag_solve(lower, diag, upper, rhs):
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)


def _second_difference(y, dx):
    return (y[2:] - 2.0 * y[1:-1] + y[:-2]) / dx**2


class _YForm:
    """alpha^2 y'' = V~'(y), V~'(y) = h e^C / B at u = f^{-1}(y)."""

    def __init__(self, table, alpha, dx):
        self.funcs = table.funcs
        self.cmap = coordinate_map(table)
        self.a2, self.dx = alpha**2, dx

    def terms(self, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._terms(y)

    def _terms(self, y):
        u = np.clip(self.cmap.u_of_y(y), *self.funcs.u_domain)
        q = evaluate_quantities(self.funcs, u)
        A, B = AB(q)
        eC = np.exp(self.cmap.C_of(u))
        h = q.h
        hp = 1.0 - q.dphi0 * q.dpsi0
        Bp = (q.d2phi0 * q.dpsi0**2 + q.dphi0 * q.d2psi0) / 3.0
        Vp = h * eC / B
        Vpp = hp / B + h * A / B**2 - h * Bp / B**2
        return Vp, Vpp

    def residual(self, y):
        Vp, _ = self.terms(y[1:-1])
        return self.a2 * _second_difference(y, self.dx) - Vp

    def jacobian(self, y):
        _, Vpp = self.terms(y[1:-1])
        n = y.size - 2
        off = np.full(n, self.a2 / self.dx**2)
        return off, -2.0 * self.a2 / self.dx**2 - Vpp, off


class _UForm:
    """u - phi0(psi0(u)) - alpha^2 (A u'^2 + B u'') = 0."""

    def __init__(self, table, alpha, dx):
        self.funcs = table.funcs
        self.a2, self.dx = alpha**2, dx
        lo, hi = self.funcs.u_domain
        self.step = 1e-6 * (hi - lo)

    def _AB(self, u):
        return AB(evaluate_quantities(self.funcs, u))

    def residual(self, u):
        q = evaluate_quantities(self.funcs, u[1:-1])
        A, B = AB(q)
        d1 = (u[2:] - u[:-2]) / (2.0 * self.dx)
        return q.h - self.a2 * (A * d1**2 + B * _second_difference(u, self.dx))

    def jacobian(self, u):
        lo, hi = self.funcs.u_domain
        ui = u[1:-1]
        q = evaluate_quantities(self.funcs, ui)
        A, B = AB(q)
        up = np.minimum(ui + self.step, hi)
        dn = np.maximum(ui - self.step, lo)
        (Ap, Bp), (Am, Bm) = self._AB(up), self._AB(dn)
        dA, dB = (Ap - Am) / (up - dn), (Bp - Bm) / (up - dn)
        d1 = (u[2:] - u[:-2]) / (2.0 * self.dx)
        d2 = _second_difference(u, self.dx)
        hp = 1.0 - q.dphi0 * q.dpsi0
        diag = hp - self.a2 * (dA * d1**2 + dB * d2) + 2.0 * self.a2 * B / self.dx**2
        lower = -self.a2 * (-A * d1 / self.dx + B / self.dx**2)
        upper = -self.a2 * (A * d1 / self.dx + B / self.dx**2)
        return lower, diag, upper


def _newton(problem, z, tol, max_iter, clip):
    res = problem.residual(z)
    norm = float(np.max(np.abs(res)))
    for it in range(1, max_iter + 1):
        if norm < tol:
            return z, norm, it - 1
        lower, diag, upper = problem.jacobian(z)
        step = _tridiag_solve(lower, diag, upper, -res)
        lam = 1.0
        while lam > 1e-6:
            trial = z.copy()
            trial[1:-1] = clip(z[1:-1] + lam * step)
            tres = problem.residual(trial)
            tnorm = float(np.max(np.abs(tres)))
            if np.isfinite(tnorm) and tnorm < (1.0 - 1e-4 * lam) * norm:
                break
            lam *= 0.5
        else:
            raise SolverError(f"Newton line search failed at iteration {it}", residual=norm)
        z, res, norm = trial, tres, tnorm
    if norm < tol:
        return z, norm, max_iter
    raise SolverError(f"Newton did not converge in {max_iter} iterations", residual=norm)


def bvp_solve(funcs: SystemFunctions, table: ScalarProfileTable, alpha: float,
              init: SpatialProfile | None = None, *, form: str = "auto", tol: float = NEWTON_TOL,
              max_iter: int = 100, u_opt: float | None = None, polish: bool = True) -> BvpResult:
    """Stationary profile with u(+-1) = u_opt by damped Newton on central differences.

    form "y" solves the mechanical form in y = f(u) and maps back; "u" solves
    the stationary equation directly; "auto" tries "y" and falls back to "u".
    With ``polish`` a y-form solution is refined by u-form Newton steps, which
    removes the O(dx^2) mismatch between the two discretisations.
    """
    _check_alpha(alpha)
    if form not in ("auto", "y", "u"):
        raise ParameterError(f"unknown form {form!r}")
    u_opt = float(find_fixed_points(funcs).u_opt) if u_opt is None else float(u_opt)
    if init is None:
        x = make_grid(alpha)
        init = SpatialProfile(x, np.full(x.size, u_opt), alpha, "u")
    x = init.x
    dx = float(x[1] - x[0])
    lo, hi = funcs.u_domain
    u0 = np.clip(init.values.astype(float), lo, hi)
    u0[[0, -1]] = u_opt

    def finish(u, y, res_y, its, used):
        prof = SpatialProfile(x.copy(), u, alpha, "u", {"operator": "bvp", "form": used, "u_opt": u_opt})
        res_u = float(np.max(np.abs(stationary_residual(prof, table))))
        return BvpResult(prof, y, res_u, res_y, its, used)

    err = None
    if form in ("auto", "y"):
        try:
            yf = _YForm(table, alpha, dx)
            ylo, yhi = float(yf.cmap.f[0]), float(yf.cmap.f[-1])
            y0 = yf.cmap.y_of_u(u0)
            y, res_y, its = _newton(yf, y0, tol, max_iter, lambda v: np.clip(v, ylo, yhi))
            u = np.clip(yf.cmap.u_of_y(y), lo, hi)
            u[[0, -1]] = u_opt
            if polish:
                u, _, more = _newton(_UForm(table, alpha, dx), u, tol, max_iter,
                                     lambda v: np.clip(v, lo, hi))
                its += more
            return finish(u, y, res_y, its, "y")
        except (SolverError, FloatingPointError, ValueError) as exc:
            if form == "y":
                raise
            err = exc
    uf = _UForm(table, alpha, dx)
    try:
        u, _, its = _newton(uf, u0, tol, max_iter, lambda v: np.clip(v, lo, hi))
    except SolverError as exc:
        if err is not None:
            exc.args = (f"{exc.args[0]} (y-form: {err})",)
        raise
    return finish(u, None, float("nan"), its, "u")


def mechanical_residual(u: SpatialProfile, table: ScalarProfileTable) -> tuple[np.ndarray, np.ndarray]:
    """(alpha^2 y'' - V~'(y), -(e^C / B)(u - L~[u])) on interior nodes, y = f(u)."""
    cmap = coordinate_map(table)
    y = cmap.y_of_u(u.values)
    q = evaluate_quantities(table.funcs, u.values)
    _, B = AB(q)
    eC = np.exp(cmap.C_of(u.values))
    lhs = u.alpha**2 * _second_difference(y, u.dx) - (q.h * eC / B)[1:-1]
    rhs = -(eC / B * stationary_residual(u, table))[1:-1]
    return lhs, rhs


def de_bvp_difference(funcs: SystemFunctions, table: ScalarProfileTable, alpha: float, L: int,
                      max_iter: int = 10**5) -> tuple[float, BvpResult]:
    """(1/L) sum_l |u_l - u~(2l/L - 1)| between converged DE and the BVP profile seeded by it."""
    W = max(1, int(round(alpha * L)))
    state, _ = de_run(funcs, L, W, max_iter=max_iter)
    x = make_grid(alpha)
    seed = de_profile(funcs, alpha, L, x, max_iter)
    seed.values = _smooth3(seed.values)
    sol = bvp_solve(funcs, table, alpha, seed)
    xl = 2.0 * np.arange(L) / L - 1.0
    diff = np.abs(state.u - sol.profile.spline()(xl))
    return float(np.mean(diff)), sol


def write_profile_csv(path, profile: SpatialProfile, residual=None, header: str = "") -> None:
    res = np.zeros(profile.n_x) if residual is None else np.asarray(residual)
    with open(path, "w") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        fh.write("x,u,residual\n")
        for row in zip(profile.x, profile.values, res):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_gap_csv(path, report: GapReport, header: str = "") -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        fh.write("alpha,bulk_gap,total_gap\n")
        for row in report.rows():
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
