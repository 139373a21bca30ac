"""System functions (phi, psi) and their single-variate reductions.

A coupled system is described by two monotone maps

    phi : D~^d  -> D      (d arguments, v-side inputs)
    psi : D^d~  -> D~     (d~ arguments, u-side inputs)

Everything downstream (density evolution, potentials, continuum operators)
only consumes the diagonal reductions phi0(v) = phi(v, ..., v),
psi0(u) = psi(u, ..., u), their first/second derivatives and the diagonal
Laplacians sum_j d^2 f / dx_j^2 (x, ..., x).

Callables are vectorised over leading axes: ``phi(V)`` takes an array whose
last axis has length ``d`` and returns an array of the leading shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import DomainRangeError, ModelError, ParameterError

ANALYTIC_KEYS = (
    "phi0", "dphi0", "d2phi0", "lap_phi",
    "psi0", "dpsi0", "d2psi0", "lap_psi",
)


@dataclass(frozen=True)
class MultilinearForm:
    """Structure hint ``f(x_1..x_k) = F(k(x_1), ..., k(x_k))``, F affine per argument.

    For such maps the average over independent window offsets equals
    ``outer_diag(mean of inner)``, which lets density evolution and the
    integral operators skip the W^k tuple enumeration.
    """

    inner: Callable[[np.ndarray], np.ndarray]
    outer_diag: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SystemFunctions:
    d: int
    d_tilde: int
    phi: Callable[[np.ndarray], np.ndarray]
    psi: Callable[[np.ndarray], np.ndarray]
    u_domain: tuple[float, float] = (0.0, 1.0)
    v_domain: tuple[float, float] = (0.0, 1.0)
    derivative_mode: str = "analytic"
    h: float | None = None
    analytic: Mapping[str, Callable] = field(default_factory=dict)
    phi_form: MultilinearForm | None = None
    psi_form: MultilinearForm | None = None
    name: str = "custom"
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1 or self.d_tilde < 1:
            raise ParameterError("arities d and d_tilde must be positive")
        if self.derivative_mode not in ("analytic", "finite-difference"):
            raise ParameterError(f"unknown derivative_mode {self.derivative_mode!r}")
        for lo, hi in (self.u_domain, self.v_domain):
            if not hi > lo:
                raise ParameterError("domains must be non-degenerate intervals")
        unknown = set(self.analytic) - set(ANALYTIC_KEYS)
        if unknown:
            raise ParameterError(f"unknown analytic keys {sorted(unknown)}")

    @property
    def u_min(self) -> float:
        return float(self.u_domain[0])

    def step(self, which: str) -> float:
        """Finite-difference step for ``which`` ('phi' or 'psi')."""
        lo, hi = self._domain(which)
        return float(self.h) if self.h is not None else 1e-4 * (hi - lo)

    def _domain(self, which: str) -> tuple[float, float]:
        # phi acts on v-values, psi on u-values
        if which == "phi":
            return self.v_domain
        if which == "psi":
            return self.u_domain
        raise ParameterError(f"which must be 'phi' or 'psi', got {which!r}")

    def _parts(self, which: str):
        lo, hi = self._domain(which)
        if which == "phi":
            return self.phi, self.d, lo, hi
        return self.psi, self.d_tilde, lo, hi


def _check_domain(x: np.ndarray, lo: float, hi: float) -> None:
    tol = 1e-12 * (hi - lo)
    if np.any(~np.isfinite(x)) or np.any(x < lo - tol) or np.any(x > hi + tol):
        bad = x[(x < lo - tol) | (x > hi + tol) | ~np.isfinite(x)]
        raise DomainRangeError(f"point {bad.flat[0]!r} outside domain [{lo}, {hi}]")


def _diag(x: np.ndarray, k: int) -> np.ndarray:
    return np.repeat(x[..., None], k, axis=-1)


def diagonal_reduce(funcs: SystemFunctions, which: str, x):
    """Return ``f(x, ..., x)`` for f = phi or psi."""
    f, k, lo, hi = funcs._parts(which)
    xa = np.asarray(x, dtype=float)
    _check_domain(xa, lo, hi)
    out = np.asarray(f(_diag(np.clip(xa, lo, hi), k)), dtype=float)
    return out if out.ndim else float(out)


# Stencils padded to four points: (offsets in units of h, weights).
_FD1 = {
    "c": ((-1, 1, 0, 0), (-0.5, 0.5, 0.0, 0.0)),
    "f": ((0, 1, 2, 0), (-1.5, 2.0, -0.5, 0.0)),
    "b": ((0, -1, -2, 0), (1.5, -2.0, 0.5, 0.0)),
}
_FD2 = {
    "c": ((-1, 0, 1, 0), (1.0, -2.0, 1.0, 0.0)),
    "f": ((0, 1, 2, 3), (2.0, -5.0, 4.0, -1.0)),
    "b": ((0, -1, -2, -3), (2.0, -5.0, 4.0, -1.0)),
}


def _stencil(x: np.ndarray, h: float, lo: float, hi: float, order: int):
    table = _FD1 if order == 1 else _FD2
    kind = np.where(x - h < lo, "f", np.where(x + h > hi, "b", "c"))
    offs = np.empty(x.shape + (4,))
    wts = np.empty(x.shape + (4,))
    for key, (o, w) in table.items():
        m = kind == key
        offs[m] = o
        wts[m] = w
    return offs, wts / h**order


def _fd_derivative(fun, x: np.ndarray, h: float, lo: float, hi: float, order: int):
    offs, wts = _stencil(x, h, lo, hi, order)
    pts = np.clip(x[..., None] + offs * h, lo, hi)
    return np.sum(fun(pts) * wts, axis=-1)


def derivative(funcs: SystemFunctions, which: str, x, order: int = 1):
    """First or second derivative of the diagonal reduction f0 at ``x``.

    Analytic callables are used in analytic mode when supplied; otherwise a
    second-order finite-difference stencil (one-sided within h of an endpoint).
    """
    if order not in (1, 2):
        raise ParameterError("order must be 1 or 2")
    f, k, lo, hi = funcs._parts(which)
    xa = np.asarray(x, dtype=float)
    _check_domain(xa, lo, hi)
    key = ("d" if order == 1 else "d2") + which + "0"
    if funcs.derivative_mode == "analytic" and key in funcs.analytic:
        out = np.asarray(funcs.analytic[key](np.clip(xa, lo, hi)), dtype=float)
    else:
        out = _fd_derivative(lambda p: f(_diag(p, k)), np.clip(xa, lo, hi),
                             funcs.step(which), lo, hi, order)
    return out if out.ndim else float(out)


def laplacian_on_diagonal(funcs: SystemFunctions, which: str, x):
    """Sum of the pure second partials of phi or psi at the diagonal point (x,...,x)."""
    f, k, lo, hi = funcs._parts(which)
    xa = np.asarray(x, dtype=float)
    _check_domain(xa, lo, hi)
    xa = np.clip(xa, lo, hi)
    key = "lap_" + which
    if funcs.derivative_mode == "analytic" and key in funcs.analytic:
        out = np.asarray(funcs.analytic[key](xa), dtype=float)
        return out if out.ndim else float(out)
    total = np.zeros(xa.shape)
    for j in range(k):
        def along_j(pts, j=j):
            arg = np.repeat(xa[..., None, None], k, axis=-1)
            arg = np.broadcast_to(arg, pts.shape + (k,)).copy()
            arg[..., j] = pts
            return f(arg)
        total = total + _fd_derivative(along_j, xa, funcs.step(which), lo, hi, 2)
    return total if total.ndim else float(total)


@dataclass(frozen=True)
class Quantities:
    """Single-variate quantities at u; phi-side entries are evaluated at v = psi0(u)."""

    u: np.ndarray
    psi0: np.ndarray
    dpsi0: np.ndarray
    d2psi0: np.ndarray
    lap_psi: np.ndarray
    phi0: np.ndarray
    dphi0: np.ndarray
    d2phi0: np.ndarray
    lap_phi: np.ndarray

    @property
    def h(self) -> np.ndarray:
        """Fixed-point defect u - phi0(psi0(u))."""
        return self.u - self.phi0


def evaluate_quantities(funcs: SystemFunctions, u) -> Quantities:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    lo, hi = funcs.v_domain
    psi0 = np.atleast_1d(diagonal_reduce(funcs, "psi", u))
    v = np.clip(psi0, lo, hi)
    return Quantities(
        u=u,
        psi0=psi0,
        dpsi0=np.atleast_1d(derivative(funcs, "psi", u, 1)),
        d2psi0=np.atleast_1d(derivative(funcs, "psi", u, 2)),
        lap_psi=np.atleast_1d(laplacian_on_diagonal(funcs, "psi", u)),
        phi0=np.atleast_1d(diagonal_reduce(funcs, "phi", v)),
        dphi0=np.atleast_1d(derivative(funcs, "phi", v, 1)),
        d2phi0=np.atleast_1d(derivative(funcs, "phi", v, 2)),
        lap_phi=np.atleast_1d(laplacian_on_diagonal(funcs, "phi", v)),
    )


@dataclass(frozen=True)
class ScalarProfileTable:
    """Tabulated diagonal reductions on a uniform u-grid.

    ``values`` holds the quantities at the grid; ``phi0_on_v`` is phi0 on its
    own uniform v-grid (used for the monotonicity audit). ``evaluate`` gives
    the same quantities at arbitrary points straight from the system.
    """

    funcs: SystemFunctions
    u: np.ndarray
    values: Quantities
    v: np.ndarray
    phi0_on_v: np.ndarray
    clamped: int = 0

    def evaluate(self, u) -> Quantities:
        return evaluate_quantities(self.funcs, u)


def _monotone_audit(values: np.ndarray, tol: float, label: str) -> tuple[np.ndarray, int]:
    drops = np.diff(values)
    worst = float(drops.min(initial=0.0))
    if worst < -tol:
        raise ModelError(f"{label} decreases by {-worst:.3e} (> {tol:.0e}); not a monotone system")
    fixed = np.maximum.accumulate(values)
    return fixed, int(np.count_nonzero(fixed != values))


def build_profile_table(funcs: SystemFunctions, n_grid: int = 2048) -> ScalarProfileTable:
    """Tabulate phi0, psi0, their derivatives and diagonal Laplacians."""
    if n_grid < 16:
        raise ParameterError("n_grid must be at least 16")
    tol = 1e-12 if funcs.derivative_mode == "analytic" else 1e-8
    u = np.linspace(*funcs.u_domain, n_grid)
    q = evaluate_quantities(funcs, u)
    psi0, n1 = _monotone_audit(q.psi0, tol, "psi0")
    v = np.linspace(*funcs.v_domain, n_grid)
    phi0_v, n2 = _monotone_audit(np.atleast_1d(diagonal_reduce(funcs, "phi", v)), tol, "phi0")
    phi0_u, n3 = _monotone_audit(q.phi0, tol, "phi0(psi0)")
    values = Quantities(u=u, psi0=psi0, dpsi0=q.dpsi0, d2psi0=q.d2psi0, lap_psi=q.lap_psi,
                        phi0=phi0_u, dphi0=q.dphi0, d2phi0=q.d2phi0, lap_phi=q.lap_phi)
    return ScalarProfileTable(funcs=funcs, u=u, values=values, v=v, phi0_on_v=phi0_v,
                              clamped=n1 + n2 + n3)
