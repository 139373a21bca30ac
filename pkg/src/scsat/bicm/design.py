"""Scan of single label transpositions used to pick the optimized-id preset.

Each candidate is scored at two SNRs: at ``snr_chart`` the chart must keep
two stable crossings; at ``snr_ref`` the score is |int_{z_BP}^1 Delta|, which
vanishes when the S_t = S_m threshold sits exactly at ``snr_ref``. A reduced
Gauss-Hermite order keeps the scan cheap; final values are recomputed at
full order by the callers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .chart import area_split, build_exit_chart
from .decoder import RegularEnsemble
from .model import BicmModel, f0, gray_16qam


@dataclass(frozen=True)
class Candidate:
    swap: tuple
    score: float
    n_stable: int
    f0_zero: float
    f0_one: float


def transposition_scan(base=None, ens: RegularEnsemble | None = None, snr_chart: float = 5.76,
                       snr_ref: float = 5.29, gh_order: int = 24) -> list:
    """Candidates with two stable crossings at ``snr_chart``, best score first."""
    base = gray_16qam() if base is None else np.asarray(base, dtype=complex)
    ens = RegularEnsemble() if ens is None else ens
    seen, out = set(), []
    for i, j in itertools.combinations(range(16), 2):
        pts = base.copy()
        pts[[i, j]] = pts[[j, i]]
        m = BicmModel(tuple(pts), snr_chart, gh_order, "scan")
        a, b = float(f0(m, 0.0)), float(f0(m, 1.0))
        key = (round(a, 10), round(b, 10))
        if key in seen:
            continue
        seen.add(key)
        n_stable = len(build_exit_chart(m, ens).stable_points)
        _, high, zbp = area_split(m.at(snr_ref), ens)
        if n_stable == 2 and zbp < 1.0:
            out.append(Candidate((i, j), abs(high), n_stable, a, b))
    out.sort(key=lambda c: c.score)
    return out
