"""Generalized potential, coordinate change and global-minimizer classification.

With h(u) = u - phi0(psi0(u)) the potential derivative is

    V'(u) = h(u) psi0'(u) exp(E(u)),   E(u) = D(u; psi) + D(psi0(u); phi),
    D(u; psi) = int Lap psi / psi0' du - ln psi0'(u).

The multiplier is evaluated in log form,

    ln(psi0' e^E) = I_psi(u) + I_phi(u) - ln phi0'(psi0(u)),
    I_psi = int Lap psi / psi0' du,   I_phi = int Lap phi(psi0) psi0' / phi0'(psi0) du,

so that the cancelling ln psi0' terms never meet a zero of psi0'.
Antiderivatives use the graded Gauss-Legendre mesh of ``quadrature``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .de import FP_TOL, find_fixed_points
from .errors import BracketError, ModelError, NumericError, ParameterError
from .quadrature import QuadMesh
from .system import ScalarProfileTable, SystemFunctions, build_profile_table, evaluate_quantities

FLOOR = 1e-12
GAP_TOL = 1e-9


def _singular_nodes(q) -> np.ndarray:
    return (q.dpsi0 <= FLOOR) | (q.dphi0 <= FLOOR)


def _inward(table: ScalarProfileTable, u: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Grid nodes with flagged entries nudged 1e-9 of the width into the domain."""
    lo, hi = table.funcs.u_domain
    eps = 1e-9 * (hi - lo)
    out = u.copy()
    out[mask] = np.clip(u[mask], lo + eps, hi - eps)
    return out


def _log(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(x)


@dataclass
class _Setup:
    table: ScalarProfileTable
    mesh: QuadMesh
    flagged: np.ndarray
    qg: object  # quantities at grid nodes (flagged nodes nudged)
    qp: object  # quantities at quadrature points


def _setup(table: ScalarProfileTable) -> _Setup:
    u = table.u
    q_raw = table.values
    flagged = _singular_nodes(q_raw)
    mesh = QuadMesh(u, flagged)
    qg = evaluate_quantities(table.funcs, _inward(table, u, flagged))
    qp = evaluate_quantities(table.funcs, mesh.points)
    if np.any(qp.dpsi0 <= 0) or np.any(qp.dphi0 <= 0):
        raise NumericError("psi0' or phi0'(psi0) vanishes inside the domain; potential undefined")
    return _Setup(table, mesh, flagged, qg, qp)


def _log_integrals(s: _Setup):
    """I_psi + I_phi at grid nodes and quadrature points, anchored at u_min."""
    qp, qg = s.qp, s.qg
    integrand = qp.lap_psi / qp.dpsi0 + qp.lap_phi * qp.dpsi0 / qp.dphi0
    return s.mesh.cumulative(integrand, anchor=0)


def exponent_D(table: ScalarProfileTable, which: str, u=None):
    """D(u; psi) or D(psi0(u); phi) on the table grid (or at points ``u``).

    The integral term is anchored to zero at u_min. ``which`` is 'psi' or 'phi'.
    """
    if which not in ("psi", "phi"):
        raise ParameterError("which must be 'psi' or 'phi'")
    s = _setup(table)
    qp, qg = s.qp, s.qg
    if which == "psi":
        f_p = qp.lap_psi / qp.dpsi0
        ln_g = _log(table.values.dpsi0)
    else:
        f_p = qp.lap_phi * qp.dpsi0 / qp.dphi0
        ln_g = _log(table.values.dphi0)
    at_grid, at_pts = s.mesh.cumulative(f_p, anchor=0)
    d_grid = at_grid - ln_g
    if not np.all(np.isfinite(d_grid[~s.flagged])):
        raise NumericError("non-finite D on the open domain")
    if u is None:
        return d_grid
    spline = s.mesh.interpolant(at_grid, at_pts)
    uu = np.asarray(u, dtype=float)
    q = evaluate_quantities(table.funcs, uu)
    lg = _log(q.dpsi0 if which == "psi" else q.dphi0)
    out = spline(uu) - lg
    return out if np.ndim(u) else float(out[0])


@dataclass(frozen=True)
class StationaryPoint:
    u: float
    kind: str  # "min" | "max" | "marginal"
    V: float
    boundary: bool = False


@dataclass
class PotentialProfile:
    u: np.ndarray
    V: np.ndarray
    integrand: np.ndarray
    E: np.ndarray
    stationary: list
    global_min_u: float | None
    unique_global_min: bool
    gap: float
    u_opt: float
    flagged: np.ndarray
    V_of: Callable = field(repr=False, default=None)
    meta: dict = field(default_factory=dict)

    @property
    def minima(self) -> list:
        return [p for p in self.stationary if p.kind == "min"]

    @property
    def opt_is_unique_global_min(self) -> bool:
        return (self.unique_global_min and self.global_min_u is not None
                and abs(self.global_min_u - self.u_opt) <= 1e-8)


def _multiplier_log(s: _Setup):
    i_grid, i_pts = _log_integrals(s)
    return i_grid - _log(s.qg.dphi0), i_pts - _log(s.qp.dphi0)


def potential(table: ScalarProfileTable, gap_tol: float = GAP_TOL, fp_tol: float = FP_TOL,
              meta: dict | None = None) -> PotentialProfile:
    """Tabulate V on the table grid, anchored V(u_min) = 0, and classify its stationary points."""
    s = _setup(table)
    funcs = table.funcs
    lm_grid, lm_pts = _multiplier_log(s)
    integrand_pts = s.qp.h * np.exp(lm_pts)
    integrand_grid = s.qg.h * np.exp(lm_grid)
    if not np.all(np.isfinite(integrand_pts)):
        raise NumericError("non-finite potential integrand")
    V, V_pts = s.mesh.cumulative(integrand_pts, anchor=0)
    V_of = s.mesh.interpolant(V, V_pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        E = lm_grid - _log(s.qg.dpsi0)
    E = np.where(s.flagged, np.inf, E)

    report = find_fixed_points(funcs, fp_tol=fp_tol)
    stationary = []
    if report.degenerate:
        stationary = [StationaryPoint(float(x), "marginal", float(V_of(x))) for x in table.u]
    else:
        for x, kind in report.all_fixed_points:
            label = {"stable": "min", "unstable": "max"}.get(kind, "marginal")
            stationary.append(StationaryPoint(x, label, float(V_of(x))))
        lo, hi = funcs.u_domain
        known = {round(p.u, 12) for p in stationary}
        h_lo = table.values.h[0]
        h_hi = table.values.h[-1]
        if h_hi < -fp_tol and round(hi, 12) not in known:
            stationary.append(StationaryPoint(float(hi), "min", float(V[-1]), boundary=True))
        if h_lo > fp_tol and round(lo, 12) not in known:
            stationary.append(StationaryPoint(float(lo), "min", float(V[0]), boundary=True))
        stationary.sort(key=lambda p: p.u)

    minima = sorted((p for p in stationary if p.kind == "min"), key=lambda p: p.V)
    if not minima or report.degenerate:
        gmin, unique, gap = None, False, 0.0
    else:
        gmin = minima[0].u
        gap = minima[1].V - minima[0].V if len(minima) > 1 else np.inf
        unique = bool(gap >= gap_tol)
    md = dict(meta or {})
    md.setdefault("system", funcs.name)
    md.update({k: v for k, v in funcs.meta.items() if k not in md})
    return PotentialProfile(
        u=table.u.copy(), V=V, integrand=integrand_grid, E=E, stationary=stationary,
        global_min_u=gmin, unique_global_min=unique, gap=float(gap), u_opt=report.u_opt,
        flagged=s.flagged, V_of=V_of, meta=md,
    )


def conventional_potential(table: ScalarProfileTable):
    """int (u - phi0(psi0(u))) psi0'(u) du on the table grid, anchored at u_min."""
    mesh = QuadMesh(table.u)
    q = evaluate_quantities(table.funcs, mesh.points)
    V, _ = mesh.cumulative(q.h * q.dpsi0, anchor=0)
    return V


def potential_threshold(family: Callable[[float], SystemFunctions], theta_lo: float,
                        theta_hi: float, theta_tol: float = 1e-6, n_grid: int = 2048,
                        max_steps: int = 200,
                        predicate: Callable[[PotentialProfile], bool] | None = None) -> float:
    """Bisect the boundary of ``predicate`` over theta.

    The default predicate is "u_opt is the unique global minimizer of V".
    """
    test = predicate or (lambda prof: prof.opt_is_unique_global_min)

    def pred(theta):
        return bool(test(potential(build_profile_table(family(theta), n_grid))))

    p_lo, p_hi = pred(theta_lo), pred(theta_hi)
    if p_lo == p_hi:
        raise BracketError(f"predicate is {p_lo} at both ends of [{theta_lo}, {theta_hi}]")
    a, b = theta_lo, theta_hi
    for _ in range(max_steps):
        if abs(b - a) <= theta_tol:
            break
        m = 0.5 * (a + b)
        if pred(m) == p_lo:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


@dataclass
class CoordinateMap:
    u: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    f: np.ndarray
    funcs: SystemFunctions = field(repr=False)
    C_of: Callable = field(repr=False)
    f_of: Callable = field(repr=False)
    u_of: Callable = field(repr=False)
    anchor_u: float = 0.0

    def y_of_u(self, u):
        return self.f_of(u)

    def u_of_y(self, y):
        return self.u_of(y)

    def dV_dy(self, y):
        """V~'(y) = h(u) e^{C(u)} / B(u) with u = f^{-1}(y)."""
        uu = np.clip(self.u_of(np.asarray(y, dtype=float)), *self.funcs.u_domain)
        q = evaluate_quantities(self.funcs, uu)
        out = q.h * np.exp(self.C_of(uu)) / AB(q)[1]
        return out if np.ndim(y) else float(out[0])


def AB(q):
    """A and B of the differential operator from tabulated quantities."""
    A = (q.dphi0 * q.lap_psi + q.lap_phi * q.dpsi0**2 + q.dphi0 * q.d2psi0) / 6.0
    B = q.dphi0 * q.dpsi0 / 3.0
    return A, B


def _endpoint_limit(values_pts: np.ndarray, mesh: QuadMesh, node: int, toward_left: bool) -> float:
    """Limit of a cumulative quantity at a singular node from the graded cells.

    Returns the last graded value when successive levels have settled, else
    +/- inf according to the trend.
    """
    pts = mesh.points
    x0 = mesh.grid[node]
    order = np.argsort(np.abs(pts - x0))[: 4 * mesh.order]
    near = order[np.argsort(np.abs(pts[order] - x0))]
    v = values_pts[near]
    step = abs(v[0] - v[mesh.order])
    if step < 1e-8 * max(1.0, abs(v[0])):
        return float(v[0])
    return float(np.sign(v[0] - v[-1]) * np.inf)


def coordinate_map(table: ScalarProfileTable, anchor: float | None = None) -> CoordinateMap:
    """Tabulate A, B, C = int A/B, f = int e^C and the inverse of f.

    C is anchored C(u_min) = 0 when A/B is integrable at u_min; otherwise
    (e.g. psi0'(u_min) = 0) at the node nearest ``anchor`` (default: the grid
    midpoint). f is anchored f(u_min) = 0.
    """
    s = _setup(table)
    u = table.u
    A_p, B_p = AB(s.qp)
    A_g, B_g = AB(s.qg)
    interior = np.ones(u.size, bool)
    interior[[0, -1]] = False
    if np.any(table.values.dphi0[interior] * table.values.dpsi0[interior] <= 0):
        raise ModelError("B <= 0 at an interior node")
    if np.any(B_p <= 0):
        raise ModelError("B <= 0 inside the domain")

    ref = u.size // 2 if anchor is None else int(np.argmin(np.abs(u - anchor)))
    while s.flagged[ref]:
        ref += 1
    C_g, C_p = s.mesh.cumulative(A_p / B_p, anchor=ref)
    for k in np.flatnonzero(s.flagged):
        C_g[k] = _endpoint_limit(C_p, s.mesh, k, toward_left=(k == 0))
    if anchor is None and np.isfinite(C_g[0]):
        C_p = C_p - C_g[0]
        C_g = C_g - C_g[0]
        ref = 0

    f_g, f_p = s.mesh.cumulative(np.exp(C_p), anchor=0)
    if np.any(np.diff(f_g) <= 0):
        raise NumericError("f is not strictly increasing on the grid")
    finite = np.isfinite(C_g)
    xs = np.concatenate((u[finite], s.mesh.points))
    cs = np.concatenate((C_g[finite], C_p))
    o = np.argsort(xs)
    xs, cs = xs[o], cs[o]
    keep = np.concatenate(([True], np.diff(xs) > 0))
    C_of = CubicSpline(xs[keep], cs[keep])
    f_of = s.mesh.interpolant(f_g, f_p)
    ys = np.concatenate((f_g, f_p))
    us = np.concatenate((u, s.mesh.points))
    o = np.argsort(ys)
    ys, us = ys[o], us[o]
    keep = np.concatenate(([True], np.diff(ys) > 0))
    u_of = PchipInterpolator(ys[keep], us[keep], extrapolate=True)
    return CoordinateMap(u=u.copy(), A=A_g, B=B_g, C=C_g, f=f_g, funcs=table.funcs,
                         C_of=C_of, f_of=f_of, u_of=u_of, anchor_u=float(u[ref]))


def transformed_potential(table: ScalarProfileTable, cmap: CoordinateMap):
    """V~ at the grid nodes: int V~'(y) dy with dy = e^C du, anchored at u_min."""
    mesh = QuadMesh(table.u, _singular_nodes(table.values))
    q = evaluate_quantities(table.funcs, mesh.points)
    C = cmap.C_of(mesh.points)
    _, B = AB(q)
    dvdy = q.h * np.exp(C) / B
    dydu = np.exp(C)
    Vt, _ = mesh.cumulative(dvdy * dydu, anchor=0)
    return Vt


def equivalence_fit(profile: PotentialProfile, cmap: CoordinateMap,
                    table: ScalarProfileTable | None = None):
    """Fit V~(f(u)) = k V(u) + c over the grid; returns (k, c, max deviation in V units).

    Both potentials are indefinite integrals, so they agree only up to the
    additive constants and the scale fixed by the additive constant of C.
    """
    if table is None:
        table = build_profile_table(cmap.funcs, cmap.u.size)
    if not np.array_equal(table.u, profile.u):
        raise ParameterError("profile and map must share the u-grid")
    Vt = transformed_potential(table, cmap)
    V = profile.V
    ok = np.isfinite(Vt) & np.isfinite(V)
    Vt, V = Vt[ok], V[ok]
    if np.ptp(V) == 0.0:
        return 1.0, 0.0, float(0.5 * np.ptp(Vt))
    k, c = np.polyfit(V, Vt, 1)
    r = (Vt - c) / k - V
    shift = 0.5 * (r.max() + r.min())
    return float(k), float(c + k * shift), float(0.5 * (r.max() - r.min()))


def potential_equivalence_check(profile: PotentialProfile, cmap: CoordinateMap,
                                table: ScalarProfileTable | None = None) -> float:
    """max |V~(f(u))/k - V(u) - c| over the grid after optimal alignment."""
    return equivalence_fit(profile, cmap, table)[2]


def write_potential_csv(path, profile: PotentialProfile, cmap: CoordinateMap, header: str = "") -> None:
    cols = (profile.u, profile.integrand, profile.V, profile.E, cmap.A, cmap.B, cmap.C, cmap.f)
    with open(path, "w") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        fh.write("u,integrand,V,E,A,B,C,f\n")
        for row in zip(*cols):
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
