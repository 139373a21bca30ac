"""SC BICM-ID system functions, EXIT chart areas, rate loss and SNR thresholds.

Chart coordinates: z (decoder output = demapper input) on the horizontal
axis, u (demapper output = decoder input) on the vertical axis. The demapper
curve is u = f0(z); the decoder curve is drawn inverted, u = g^{-1}(z), and
is vertical at u = I_jump for z >= z_jump. With

    Delta(z) = f0(z) - g^{-1}(z)

the regions between the curves from bottom to top are S_b, S_m, S_t, and the
area theorems give C_CM - Q r = Q (S_b + S_t - S_m).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from ..errors import BracketError, ParameterError
from ..potential import potential
from ..system import MultilinearForm, SystemFunctions, build_profile_table
from .decoder import (RegularEnsemble, SmoothDecoderCurve, decoder_inverse,
                      decoder_map_exit)
from .model import Q, BicmModel, _weights, cm_capacity, f0, snr_for_capacity

FP_TOL = 1e-10


def bicm_system(model: BicmModel, ens: RegularEnsemble, n_smooth: float | None = 100.0) -> SystemFunctions:
    """phi(v_1..v_{Q-1}) = f(g(v_1), ..., g(v_{Q-1})), psi = identity (d~ = 1).

    With ``n_smooth`` the decoder curve is the smooth surrogate g_n and
    analytic derivatives are attached; ``None`` uses the exact MAP curve (DE only).
    """
    cbar = model.tables.cbar
    ident = lambda x: np.asarray(x, dtype=float)
    one = lambda x: np.ones_like(np.asarray(x, dtype=float))
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    fz = lambda z, k=0: f0(model, z, k)
    if n_smooth is None:
        g = lambda v: decoder_map_exit(ens, np.clip(v, 0.0, 1.0))
        analytic = dict(psi0=ident, dpsi0=one, d2psi0=zero, lap_psi=zero)
        mode = "analytic"
    else:
        gn = SmoothDecoderCurve(ens, n_smooth)
        g = lambda v: gn(np.clip(v, 0.0, 1.0))

        def dphi0(v):
            return fz(g(v), 1) * gn(v, 1)

        def d2phi0(v):
            z = g(v)
            return fz(z, 2) * gn(v, 1) ** 2 + fz(z, 1) * gn(v, 2)

        analytic = dict(phi0=lambda v: fz(g(v)), dphi0=dphi0, d2phi0=d2phi0,
                        lap_phi=lambda v: fz(g(v), 1) * gn(v, 2),
                        psi0=ident, dpsi0=one, d2psi0=zero, lap_psi=zero)
        mode = "analytic"
    return SystemFunctions(
        d=Q - 1, d_tilde=1,
        phi=lambda V: _weights(g(V)) @ cbar,
        psi=lambda U: U[..., 0],
        derivative_mode=mode,
        analytic=analytic,
        phi_form=MultilinearForm(g, lambda z: fz(z)),
        psi_form=MultilinearForm(ident, ident),
        name=f"bicm-{model.name}",
        meta={"snr_db": model.snr_db, "mapping": model.name, "ensemble": (ens.l, ens.r),
              "n_smooth": n_smooth},
    )


@dataclass
class ExitChart:
    I: np.ndarray
    demod_u: np.ndarray        # f0(I)
    decoder_z: np.ndarray      # g(I)
    crossings: list            # (z, u, "stable" | "unstable")
    S_t: float
    S_m: float
    S_b: float
    z_bp: float
    snr_db: float
    n_smooth: float | None = None
    capacity: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def stable_points(self) -> list:
        return [(z, u) for z, u, kind in self.crossings if kind == "stable"]

    @property
    def top_minus_mid(self) -> float:
        return self.S_t - self.S_m


def _delta(model, ens, z):
    return f0(model, z) - decoder_inverse(ens, z)


def _integrate(fun, a, b, points=()):
    if b <= a:
        return 0.0
    inner = [p for p in points if a < p < b]
    val, _ = quad(fun, a, b, points=inner or None, limit=400, epsabs=1e-13, epsrel=1e-12)
    return float(val)


def build_exit_chart(model: BicmModel, ens: RegularEnsemble, n_smooth: float | None = None,
                     n_grid: int = 2001) -> ExitChart:
    """Tabulate both curves, locate crossings and integrate the three areas."""
    zg = np.linspace(0.0, 1.0, 4001)
    d = _delta(model, ens, zg)
    fun = lambda z: float(_delta(model, ens, z))
    roots = []
    for k in range(zg.size - 1):
        if d[k] == 0.0 and k > 0:
            roots.append(zg[k])
        elif d[k] * d[k + 1] < 0:
            roots.append(brentq(fun, zg[k], zg[k + 1], xtol=1e-15))
    crossings = []
    for zc in roots:
        eps = 1e-7
        left, right = fun(max(zc - eps, 0.0)), fun(min(zc + eps, 1.0))
        kind = "stable" if left > 0 > right else "unstable" if left < 0 < right else "marginal"
        crossings.append((float(zc), float(f0(model, zc)), kind))
    u_top = float(f0(model, 1.0))
    if u_top >= ens.I_jump:
        crossings.append((1.0, u_top, "stable"))

    stable = [z for z, _, kind in crossings if kind == "stable"]
    z_bp = min(stable) if stable else 1.0
    kinks = [ens.z_jump] + [z for z, _, _ in crossings]
    # split [0, 1] at the crossings: bottom | middle | top
    interior = sorted(z for z, _, kind in crossings if z < 1.0)
    edges = [0.0] + interior + [1.0]
    pieces = [_integrate(fun, a, b, kinks) for a, b in zip(edges[:-1], edges[1:])]
    S_b = S_m = S_t = 0.0
    if len(pieces) == 1:
        S_b = abs(pieces[0]) if pieces[0] >= 0 else 0.0
        S_m = -pieces[0] if pieces[0] < 0 else 0.0
    elif len(pieces) == 2:
        # one interior crossing: bottom region and a region above it
        S_b = max(pieces[0], 0.0)
        if pieces[1] < 0:
            S_m = -pieces[1]
        else:
            S_t = pieces[1]
    else:
        S_b = max(pieces[0], 0.0)
        S_m = -sum(p for p in pieces[1:-1])
        S_t = pieces[-1]
    I = np.linspace(0.0, 1.0, n_grid)
    if n_smooth is None:
        gz = decoder_map_exit(ens, I)
    else:
        gz = SmoothDecoderCurve(ens, n_smooth)(I)
    return ExitChart(I=I, demod_u=f0(model, I), decoder_z=gz, crossings=crossings, S_t=S_t,
                     S_m=S_m, S_b=S_b, z_bp=float(z_bp), snr_db=model.snr_db, n_smooth=n_smooth,
                     capacity=cm_capacity(model),
                     meta={"mapping": model.name, "ensemble": (ens.l, ens.r)})


def area_split(model: BicmModel, ens: RegularEnsemble) -> tuple[float, float, float]:
    """(int_0^{z_BP} Delta, int_{z_BP}^1 Delta, z_BP) with z_BP the lowest stable crossing.

    The second entry equals S_t - S_m whenever the chart has a stable crossing
    below z = 1, and is continuous in SNR until the chart opens.
    """
    ch = build_exit_chart(model, ens)
    fun = lambda z: float(_delta(model, ens, z))
    kinks = [ens.z_jump] + [z for z, _, _ in ch.crossings]
    low = _integrate(fun, 0.0, ch.z_bp, kinks)
    high = _integrate(fun, ch.z_bp, 1.0, kinks)
    return low, high, ch.z_bp


@dataclass(frozen=True)
class RateLoss:
    capacity: float
    Qr: float
    QS_b: float
    Q_top_minus_mid: float
    residual: float


def rate_loss(chart: ExitChart, r: float) -> RateLoss:
    QS_b = Q * chart.S_b
    Qtm = Q * (chart.S_t - chart.S_m)
    return RateLoss(chart.capacity, Q * r, QS_b, Qtm, chart.capacity - Q * r - QS_b - Qtm)


def write_chart_csv(path, chart: ExitChart, header: str = "") -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        fh.write("I,demod_u,decoder_z\n")
        for row in zip(chart.I, chart.demod_u, chart.decoder_z):
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def snr_area(points, ens: RegularEnsemble, lo: float, hi: float, step: float = 0.05,
             tol: float = 1e-6, name: str = "custom") -> float:
    """SNR where S_t = S_m, i.e. int_{z_BP}^1 Delta = 0 on the two-crossing branch."""
    base = BicmModel.from_points(points, lo, name=name)

    def D(s):
        m = base.at(s)
        low, high, zbp = area_split(m, ens)
        return high, zbp

    grid = np.arange(lo, hi + 1e-12, step)
    prev = None
    for s in grid:
        val, zbp = D(s)
        if zbp < 1.0:
            if prev is not None and prev[1] < 0 <= val:
                return float(brentq(lambda t: D(t)[0], prev[0], s, xtol=tol))
            prev = (s, val)
        else:
            prev = None
    raise BracketError(f"S_t - S_m does not change sign on the two-crossing branch in [{lo}, {hi}] dB")


def _decoding_optimum(profile, ens: RegularEnsemble) -> bool:
    return profile.opt_is_unique_global_min and profile.u_opt > ens.I_jump


def snr_potential(points, ens: RegularEnsemble, lo: float, hi: float, n_smooth: float = 100.0,
                  tol: float = 1e-4, n_grid: int = 2048, name: str = "custom") -> float:
    """Smallest SNR at which u_opt (the decoding fixed point) is the unique global minimiser."""
    base = BicmModel.from_points(points, lo, name=name)

    def pred(s):
        funcs = bicm_system(base.at(s), ens, n_smooth)
        return _decoding_optimum(potential(build_profile_table(funcs, n_grid)), ens)

    p_lo, p_hi = pred(lo), pred(hi)
    if p_lo or not p_hi:
        raise BracketError(f"potential predicate is ({p_lo}, {p_hi}) at [{lo}, {hi}] dB")
    a, b = lo, hi
    while b - a > tol:
        m = 0.5 * (a + b)
        if pred(m):
            b = m
        else:
            a = m
    return 0.5 * (a + b)


@dataclass(frozen=True)
class Thresholds:
    mapping: str
    snr_capacity: float
    snr_area: float
    snr_potential: float
    n_smooth: float

    @property
    def ordered(self) -> bool:
        return self.snr_capacity <= self.snr_area <= self.snr_potential

    def report(self) -> str:
        return "\n".join([
            f"mapping        {self.mapping}",
            f"snr_capacity   {self.snr_capacity:.4f} dB",
            f"snr_area       {self.snr_area:.4f} dB",
            f"snr_potential  {self.snr_potential:.4f} dB  (n = {self.n_smooth:g})",
            f"ordered        {self.ordered}",
        ])


def snr_thresholds(points, ens: RegularEnsemble, r: float | None = None, n_smooth: float = 100.0,
                   lo: float = 3.0, hi: float = 8.0, name: str = "custom") -> Thresholds:
    r = ens.rate if r is None else r
    s_cap = snr_for_capacity(points, Q * r)
    s_area = snr_area(points, ens, max(lo, s_cap - 0.5), hi, name=name)
    s_pot = snr_potential(points, ens, s_area - 0.5, hi, n_smooth, name=name)
    return Thresholds(name, s_cap, s_area, s_pot, n_smooth)


def check_range(v, lo, hi, what):
    if not lo <= v <= hi:
        raise ParameterError(f"{what} must lie in [{lo}, {hi}]")
