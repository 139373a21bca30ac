"""Acceptance suite: one test per criterion, each records a PASS/FAIL line.

The verdict lines are echoed in the pytest terminal summary. The file also
runs standalone (``python3 tests/test_acceptance.py``) and then prints the
same lines without pytest.
"""

import time

import numpy as np
import pytest

from scsat.bicm.chart import build_exit_chart, rate_loss, snr_thresholds
from scsat.bicm.decoder import RegularEnsemble, eps_bp_bisection, eps_map_maxwell
from scsat.bicm.model import PRESETS, BicmModel, preset_points, snr_for_capacity
from scsat.bicm.chart import bicm_system
from scsat.continuum import de_bvp_difference, operator_gap
from scsat.de import de_run, find_fixed_points, saturation_check
from scsat.interleaver import build, verify_uniformity
from scsat.potential import (conventional_potential, coordinate_map, equivalence_fit,
                             potential, potential_threshold)
from scsat.system import build_profile_table
from scsat.systems import (bec36, identity_system, random_monotone_system,
                           random_scalar_system)

try:
    from conftest import record
except ImportError:  # standalone run
    def record(line):
        print(line)

ENS = RegularEnsemble(3, 6)
CHART_SNR = 5.76


def verdict(n: int, ok: bool, detail: str) -> None:
    record(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_c01_capacity_anchor():
    t0 = time.perf_counter()
    snr = snr_for_capacity(preset_points("gray"), 2.0)
    dt = time.perf_counter() - t0
    verdict(1, abs(snr - 5.12) <= 0.05 and dt < 10.0,
            f"snr(C_CM = 2 bits) = {snr:.4f} dB, {dt:.2f} s")


def test_c02_rate_loss_identity():
    t0 = time.perf_counter()
    worst = {}
    for name in PRESETS:
        chart = build_exit_chart(BicmModel.preset(name, CHART_SNR), ENS)
        worst[name] = abs(rate_loss(chart, ENS.rate).residual)
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 5e-3 and dt < 60.0
    verdict(2, ok, ", ".join(f"{k} residual {v:.1e}" for k, v in worst.items()) + f", {dt:.1f} s")


@pytest.mark.slow
def test_c03_mapping_thresholds():
    rows, matches, ordered_all = [], [], True
    for name in PRESETS:
        th = snr_thresholds(preset_points(name), ENS, name=name)
        chart = build_exit_chart(BicmModel.preset(name, CHART_SNR), ENS)
        residual = abs(rate_loss(chart, ENS.rate).residual)
        two_stable = len(chart.stable_points) == 2
        ordered = th.snr_capacity < th.snr_area < th.snr_potential and residual <= 5e-3
        ordered_all &= ordered
        low, high = th.snr_area - th.snr_capacity, CHART_SNR - th.snr_area
        match = (abs(th.snr_area - 5.29) <= 0.15 and th.snr_area < th.snr_potential <= CHART_SNR
                 and abs(low - 0.17) <= 0.1 and abs(high - 0.47) <= 0.1)
        if match and two_stable:
            matches.append(name)
        rows.append(f"{name}: {th.snr_capacity:.3f}/{th.snr_area:.3f}/{th.snr_potential:.3f} dB "
                    f"split {low:.2f}/{high:.2f} two-stable={two_stable}")
    verdict(3, ordered_all and bool(matches),
            f"matching preset(s) {matches or 'none'}; " + "; ".join(rows))


def test_c04_conventional_reduction():
    worst_E, worst_V = 0.0, 0.0
    for seed in range(20):
        table = build_profile_table(random_scalar_system(seed), 2048)
        prof = potential(table)
        E = prof.E[np.isfinite(prof.E)]
        worst_E = max(worst_E, float(np.ptp(E)))
        # with E constant, V = e^E * conventional potential
        Vc = conventional_potential(table)
        r = prof.V * np.exp(-E.mean()) - Vc
        worst_V = max(worst_V, float(np.ptp(r)))
    verdict(4, worst_E <= 1e-8 and worst_V <= 1e-6,
            f"max ptp(E) {worst_E:.1e}, max V mismatch {worst_V:.1e} over 20 systems")


def test_c05_potential_equivalence():
    systems = {
        "identity": identity_system(),
        "bec36": bec36(0.47),
        "bicm": bicm_system(BicmModel.preset("optimized-id", CHART_SNR), ENS, 100.0),
    }
    devs = {}
    for name, funcs in systems.items():
        table = build_profile_table(funcs, 2048)
        devs[name] = equivalence_fit(potential(table), coordinate_map(table), table)[2]
    verdict(5, max(devs.values()) <= 1e-6,
            ", ".join(f"{k} {v:.1e}" for k, v in devs.items()))


def test_c06_monotone_from_bottom():
    worst, count = np.inf, 0
    rng = np.random.default_rng(7)
    for seed in range(50):
        d, dt = (int(k) for k in rng.integers(1, 4, 2))
        L = int(rng.integers(12, 40))
        W = int(rng.integers(2, 6))
        funcs = random_monotone_system(seed, d, dt)
        _, trace = de_run(funcs, L, W, max_iter=300, record_every=1)
        us = np.array([u for _, u, _ in trace.snapshots])
        step = np.diff(us, axis=0)
        worst = min(worst, float(step.min()))
        count += step.size
    verdict(6, worst >= -1e-14, f"min u_l(i+1) - u_l(i) = {worst:.2e} over {count} updates")


def test_c07_threshold_saturation():
    t0 = time.perf_counter()
    eps_bp = eps_bp_bisection(ENS)
    eps_star = potential_threshold(bec36, 0.45, 0.60, 1e-6, 2048)
    eps = 0.47
    inside = eps_bp < eps < eps_star
    funcs = bec36(eps)
    rep = find_fixed_points(funcs)
    coupled, _ = de_run(funcs, 100, 8)
    single, _ = de_run(funcs, 100, 1)
    sat = saturation_check(coupled, rep, 1e-3)
    stall = not saturation_check(single, rep, 1e-3) and abs(single.u.min() - rep.u_BP) < 1e-6
    above = bec36(0.52)
    rep_a = find_fixed_points(above)
    fails, _ = de_run(above, 100, 8)
    no_sat = not saturation_check(fails, rep_a, 1e-3)
    dt = time.perf_counter() - t0
    verdict(7, inside and sat and stall and no_sat and dt < 120.0,
            f"eps_BP {eps_bp:.6f} < 0.47 < eps* {eps_star:.6f}; W=8 min u {coupled.u.min():.6f}, "
            f"W=1 stalls at {single.u.min():.6f}; eps=0.52 W=8 min u {fails.u.min():.4f}; {dt:.1f} s")


def test_c08_operator_gap_scaling(bec36_table):
    rep = operator_gap(lambda x: 0.5 + 0.3 * np.cos(np.pi * x), bec36_table.funcs, bec36_table,
                       [0.1, 0.05, 0.025, 0.0125])
    verdict(8, rep.slope >= 2.5,
            f"bulk gaps {', '.join(f'{g:.2e}' for g in rep.bulk_gap)}; slope {rep.slope:.3f}")


@pytest.mark.slow
def test_c09_de_bvp_trend(bec36_table):
    diffs = [de_bvp_difference(bec36_table.funcs, bec36_table, a, 400)[0] for a in (0.1, 0.05, 0.025)]
    dec = all(b < a for a, b in zip(diffs, diffs[1:]))
    verdict(9, dec, "mean |DE - BVP| " + ", ".join(f"{d:.3e}" for d in diffs) + " (eps 0.53, L 400)")


def test_c10_interleaver():
    rng = np.random.default_rng(11)
    bad = []
    for trial in range(100):
        W = int(rng.integers(1, 7))
        L = int(rng.integers(W, 25))
        M = W * int(rng.integers(1, 9))
        rep = verify_uniformity(build(L, W, M, seed=int(rng.integers(2**31))))
        if not (rep.bijective and rep.exact and rep.outside == 0):
            bad.append((L, W, M))
    verdict(10, not bad, f"100 draws, failures {bad or 'none'}")


def test_c11_decoder_thresholds():
    e_map, e_max = ENS.eps_map, eps_map_maxwell(ENS)
    e_bp, e_bis = ENS.eps_bp, eps_bp_bisection(ENS)
    verdict(11, abs(e_map - e_max) <= 1e-4 and abs(e_bp - e_bis) <= 1e-5,
            f"eps_MAP {e_map:.10f} vs {e_max:.10f}; eps_BP {e_bp:.10f} vs {e_bis:.10f}")


if __name__ == "__main__":
    from scsat.system import build_profile_table as _bpt
    table = _bpt(bec36(0.53), 2048)
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                fn(table) if fn.__code__.co_argcount else fn()
            except AssertionError:
                pass
