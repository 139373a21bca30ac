"""Coupled density evolution, the uncoupled recursion and fixed-point location.

Chain convention: sections l = 0..L-1, window offsets w = 0..W-1.

    v_l(i)   = mean over w~ in W^d~ of psi(u_{l-w~_1}, ..., u_{l-w~_d~}),   l in {W-1..L-1}
    u_l(i+1) = mean over w  in W^d  of phi(v_{l+w_1},  ..., v_{l+w_d})

and v_l = v_opt for every other index (including l >= L).
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.stats import qmc

from .errors import ModelError, NumericError, ParameterError
from .system import SystemFunctions, derivative, diagonal_reduce

EXACT_BUDGET = 10**6
SUBSAMPLE_SIZE = 10**5
FP_TOL = 1e-10
STALL_TOL = 1e-9
DELTA = 1e-4
MAX_ITER = 10**5


@dataclass(frozen=True)
class ChainState:
    L: int
    W: int
    iteration: int
    u: np.ndarray
    v_inner: np.ndarray  # v_l for l = W-1..L-1
    v_opt: float

    def __post_init__(self):
        if self.L < 1 or self.W < 1 or self.W > self.L:
            raise ParameterError("need L >= W >= 1")
        if self.u.shape != (self.L,) or self.v_inner.shape != (self.L - self.W + 1,):
            raise ParameterError("state arrays do not match (L, W)")

    def v_at(self, l) -> np.ndarray:
        """v_l with the boundary value v_opt outside {W-1..L-1}."""
        l = np.asarray(l)
        inside = (l >= self.W - 1) & (l <= self.L - 1)
        idx = np.clip(l - (self.W - 1), 0, self.v_inner.size - 1)
        return np.where(inside, self.v_inner[idx], self.v_opt)

    @property
    def v(self) -> np.ndarray:
        """v over all sections 0..L-1 (boundary entries are v_opt)."""
        return self.v_at(np.arange(self.L))


def initial_state(funcs: SystemFunctions, L: int, W: int, v_opt: float, u0=None) -> ChainState:
    u = np.full(L, funcs.u_min) if u0 is None else np.array(u0, dtype=float)
    v_inner = np.full(L - W + 1, float(funcs.v_domain[0]))
    return ChainState(L=L, W=W, iteration=0, u=u, v_inner=v_inner, v_opt=float(v_opt))


def _tuples(W: int, k: int, seed: int, budget: int, n_sub: int) -> np.ndarray:
    if W**k <= budget:
        return np.array(list(itertools.product(range(W), repeat=k)), dtype=np.int64).reshape(-1, k)
    sampler = qmc.Halton(d=k, scramble=True, seed=seed)
    pts = sampler.random(n_sub)
    return np.minimum((pts * W).astype(np.int64), W - 1)


def _window_mean(x: np.ndarray, W: int) -> np.ndarray:
    """Means of W consecutive entries: out[j] = mean(x[j:j+W])."""
    c = np.concatenate(([0.0], np.cumsum(x)))
    return (c[W:] - c[:-W]) / W


def _tuple_mean(f, data: np.ndarray, base: np.ndarray, offsets: np.ndarray, sign: int,
                chunk: int = 4096) -> np.ndarray:
    """mean over rows t of f(data[base + sign*offsets[t]]) for every base index."""
    total = np.zeros(base.size)
    for s in range(0, offsets.shape[0], chunk):
        off = offsets[s:s + chunk]
        idx = base[:, None, None] + sign * off[None, :, :]
        total += np.sum(f(data[idx]), axis=1)
    return total / offsets.shape[0]


def de_step(state: ChainState, funcs: SystemFunctions, *, circular: bool = False,
            budget: int = EXACT_BUDGET, n_sub: int = SUBSAMPLE_SIZE, seed: int = 0) -> ChainState:
    """One iteration of the coupled recursion.

    Multilinear systems use the window-mean shortcut; other systems sum over
    all W^k offset tuples, or over a seeded Halton subsample of ``n_sub``
    tuples once W^k exceeds ``budget``. ``circular=True`` (experimental)
    reads v at (l + w) mod L.
    """
    _probe_arity(funcs)
    L, W = state.L, state.W
    u = state.u
    ls = np.arange(W - 1, L)
    if funcs.psi_form is not None:
        inner = np.asarray(funcs.psi_form.inner(u), dtype=float)
        v_inner = np.asarray(funcs.psi_form.outer_diag(_window_mean(inner, W)), dtype=float)
    else:
        offs = _tuples(W, funcs.d_tilde, seed, budget, n_sub)
        v_inner = _tuple_mean(funcs.psi, u, ls, offs, -1)

    nxt = replace(state, v_inner=v_inner)
    ext = np.arange(L + W - 1)
    if circular:
        ext = ext % L
    v_ext = np.asarray(nxt.v_at(ext), dtype=float)
    if funcs.phi_form is not None:
        inner = np.asarray(funcs.phi_form.inner(v_ext), dtype=float)
        u_new = np.asarray(funcs.phi_form.outer_diag(_window_mean(inner, W)), dtype=float)
    else:
        offs = _tuples(W, funcs.d, seed + 1, budget, n_sub)
        u_new = _tuple_mean(funcs.phi, v_ext, np.arange(L), offs, +1)
    if not np.all(np.isfinite(u_new)):
        raise NumericError("non-finite state in density evolution")
    return replace(nxt, u=u_new, iteration=state.iteration + 1)


@dataclass
class DeTrace:
    min_u: list = field(default_factory=list)
    max_change: list = field(default_factory=list)
    converged: bool = False
    snapshots: list = field(default_factory=list)  # (iteration, u, v) when recording


def de_run(funcs: SystemFunctions, L: int, W: int, max_iter: int = MAX_ITER,
           stall_tol: float = STALL_TOL, *, v_opt: float | None = None, u0=None,
           record_every: int = 0, circular: bool = False, seed: int = 0):
    """Iterate from u_l(0) = u_min until the max-norm change drops below ``stall_tol``.

    Returns ``(final_state, trace)``; ``trace.min_u[i]`` is min_l u_l(i).
    """
    if max_iter < 0:
        raise ParameterError("max_iter must be non-negative")
    if W < 1 or L < W:
        raise ParameterError("need L >= W >= 1")
    if v_opt is None:
        v_opt = find_fixed_points(funcs).v_opt
    state = initial_state(funcs, L, W, v_opt, u0)
    trace = DeTrace(min_u=[float(state.u.min())])
    if record_every:
        trace.snapshots.append((0, state.u.copy(), state.v.copy()))
    for _ in range(max_iter):
        new = de_step(state, funcs, circular=circular, seed=seed)
        change = float(np.max(np.abs(new.u - state.u)))
        state = new
        trace.min_u.append(float(state.u.min()))
        trace.max_change.append(change)
        if record_every and state.iteration % record_every == 0:
            trace.snapshots.append((state.iteration, state.u.copy(), state.v.copy()))
        if change < stall_tol:
            trace.converged = True
            break
    return state, trace


def write_trajectory_csv(path, trace: DeTrace, header: str = "") -> None:
    rows = []
    for it, u, v in trace.snapshots:
        ls = np.arange(u.size)
        rows.append(np.column_stack((np.full(u.size, it), ls, u, v)))
    data = np.vstack(rows) if rows else np.empty((0, 4))
    with open(path, "w") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        fh.write("iter,l,u,v\n")
        for it, l, uu, vv in data:
            fh.write(f"{int(it)},{int(l)},{uu:.17g},{vv:.17g}\n")


@dataclass(frozen=True)
class FixedPointReport:
    u_opt: float
    v_opt: float
    u_BP: float
    v_BP: float
    all_fixed_points: tuple  # (u, "stable" | "unstable" | "marginal")
    converged: bool
    iterations: int
    degenerate: bool = False

    @property
    def stable(self) -> list:
        return [u for u, kind in self.all_fixed_points if kind == "stable"]


def composite(funcs: SystemFunctions, u):
    """phi0(psi0(u))."""
    lo, hi = funcs.v_domain
    return diagonal_reduce(funcs, "phi", np.clip(diagonal_reduce(funcs, "psi", u), lo, hi))


def composite_slope(funcs: SystemFunctions, u):
    lo, hi = funcs.v_domain
    v = np.clip(diagonal_reduce(funcs, "psi", u), lo, hi)
    return derivative(funcs, "phi", v, 1) * derivative(funcs, "psi", u, 1)


def _classify(slope: float, tol: float = 1e-9) -> str:
    hprime = 1.0 - slope
    if hprime > tol:
        return "stable"
    if hprime < -tol:
        return "unstable"
    return "marginal"


def find_fixed_points(funcs: SystemFunctions, n_scan: int = 4096, fp_tol: float = FP_TOL,
                      max_iter: int = MAX_ITER) -> FixedPointReport:
    """Roots of h(u) = u - phi0(psi0(u)), their stability, u_opt and u_BP."""
    if n_scan < 32:
        raise ParameterError("n_scan must be at least 32")
    lo, hi = funcs.u_domain
    grid = np.linspace(lo, hi, n_scan)
    h = grid - composite(funcs, grid)
    if np.all(np.abs(h) <= fp_tol):
        pts = tuple((float(u), "marginal") for u in grid)
        u_opt = float(hi)
        v_opt = float(diagonal_reduce(funcs, "psi", u_opt))
        return FixedPointReport(u_opt, v_opt, float(lo), float(diagonal_reduce(funcs, "psi", lo)),
                                pts, True, 0, degenerate=True)

    def hfun(x):
        return float(x - composite(funcs, x))

    roots = []
    zero = np.abs(h) <= fp_tol
    for k in np.flatnonzero(zero):
        roots.append(float(grid[k]))
    for k in range(n_scan - 1):
        if zero[k] or zero[k + 1]:
            continue
        if h[k] * h[k + 1] < 0:
            r = brentq(hfun, grid[k], grid[k + 1], xtol=1e-15, rtol=1e-15, maxiter=200)
            if abs(hfun(r)) <= fp_tol:
                roots.append(r)
            # otherwise h jumps across zero (discontinuous phi0), not a fixed point
    # tangential roots: local minima of |h| that approach zero without a sign change
    absh = np.abs(h)
    for k in range(1, n_scan - 1):
        if absh[k] < absh[k - 1] and absh[k] <= absh[k + 1] and not zero[k]:
            if h[k - 1] * h[k + 1] > 0 and absh[k] < 1e3 * fp_tol:
                res = minimize_scalar(lambda x: abs(hfun(x)), bounds=(grid[k - 1], grid[k + 1]),
                                      method="bounded", options={"xatol": 1e-14})
                if abs(hfun(res.x)) <= fp_tol:
                    roots.append(float(res.x))
    if not roots:
        raise NumericError("no fixed point found; phi0(psi0(.)) does not map the domain into itself?")
    roots = np.sort(np.array(roots))
    roots = roots[np.concatenate(([True], np.diff(roots) > 1e-12))]
    kinds = []
    for r in roots:
        if abs(hfun(r)) > fp_tol:
            raise NumericError(f"root refinement failed at u={r}")
        kinds.append(_classify(float(composite_slope(funcs, r))))
    points = tuple((float(r), k) for r, k in zip(roots, kinds))
    u_opt = float(roots.max())

    # uncoupled recursion from u_min; monotone, so its limit is the smallest root
    x, it, converged = float(lo), 0, False
    for it in range(1, max_iter + 1):
        nx = float(composite(funcs, x))
        if abs(nx - x) < fp_tol:
            x, converged = nx, True
            break
        x = nx
    smallest = float(roots.min())
    if converged or abs(x - smallest) < 1e-6:
        u_bp = smallest
    else:
        warnings.warn("uncoupled recursion did not converge; u_BP snapped to the smallest root")
        u_bp = smallest
    return FixedPointReport(
        u_opt=u_opt, v_opt=float(diagonal_reduce(funcs, "psi", u_opt)),
        u_BP=u_bp, v_BP=float(diagonal_reduce(funcs, "psi", u_bp)),
        all_fixed_points=points, converged=converged, iterations=it,
    )


def saturation_check(final: ChainState, report: FixedPointReport, delta: float = DELTA) -> bool:
    return bool(np.min(final.u) >= report.u_opt - delta)


def _probe_arity(funcs: SystemFunctions) -> None:
    for f, k, x in ((funcs.phi, funcs.d, funcs.v_domain[0]), (funcs.psi, funcs.d_tilde, funcs.u_domain[0])):
        try:
            out = np.asarray(f(np.full((2, k), float(x))))
        except (IndexError, ValueError) as exc:
            raise ModelError(f"system function rejects {k}-tuples: {exc}") from exc
        if out.shape != (2,):
            raise ModelError(f"system function of declared arity {k} returned shape {out.shape}")
