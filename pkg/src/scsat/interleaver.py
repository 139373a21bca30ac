"""Spatially coupled interleaver over L sections of M bits.

Bit m of section l goes to section l' = (l - (pi_in_l(m) mod W)) mod L, at
position pi_out_{l'}(pi_in_l(m)). Each of the 2L permutations is drawn by
Fisher-Yates from its own Philox stream keyed by (seed, l, in/out), so a
permutation does not depend on L, on the other sections or on build order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

_IN, _OUT = 0, 1


def _permutation(seed: int, l: int, which: int, M: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(l, which))
    return np.random.Generator(np.random.Philox(ss)).permutation(M)


@dataclass(frozen=True)
class ScInterleaver:
    L: int
    W: int
    M: int
    seed: int
    pi_in: np.ndarray       # (L, M)
    pi_out: np.ndarray      # (L, M)

    def __post_init__(self):
        for name, p in (("pi_in", self.pi_in), ("pi_out", self.pi_out)):
            if p.shape != (self.L, self.M):
                raise ParameterError(f"{name} must have shape (L, M)")
            if np.any(np.sort(p, axis=1) != np.arange(self.M)):
                raise ParameterError(f"{name} rows must be permutations of 0..M-1")

    @property
    def inv_in(self) -> np.ndarray:
        return np.argsort(self.pi_in, axis=1)

    @property
    def inv_out(self) -> np.ndarray:
        return np.argsort(self.pi_out, axis=1)

    def forward(self, m, l):
        """(m', l') for bit m of section l; vectorised."""
        m, l = np.broadcast_arrays(np.asarray(m), np.asarray(l))
        self._check(m, l)
        k = self.pi_in[l, m]
        lp = (l - k % self.W) % self.L
        return self.pi_out[lp, k], lp

    def inverse(self, mp, lp):
        """(m, l) with forward(m, l) = (mp, lp)."""
        mp, lp = np.broadcast_arrays(np.asarray(mp), np.asarray(lp))
        self._check(mp, lp)
        k = self.inv_out[lp, mp]
        l = (lp + k % self.W) % self.L
        return self.inv_in[l, k], l

    def table(self) -> tuple[np.ndarray, np.ndarray]:
        """Full map as arrays indexed [l, m]."""
        l, m = np.meshgrid(np.arange(self.L), np.arange(self.M), indexing="ij")
        return self.forward(m, l)

    def _check(self, m, l):
        if np.any((m < 0) | (m >= self.M)) or np.any((l < 0) | (l >= self.L)):
            raise ParameterError("index out of range")


def build(L: int, W: int, M: int, seed: int = 0) -> ScInterleaver:
    if min(L, W, M) < 1:
        raise ParameterError("L, W and M must be positive")
    if W > L:
        raise ParameterError("need W <= L")
    pi_in = np.stack([_permutation(seed, l, _IN, M) for l in range(L)])
    pi_out = np.stack([_permutation(seed, l, _OUT, M) for l in range(L)])
    return ScInterleaver(L, W, M, int(seed), pi_in, pi_out)


@dataclass(frozen=True)
class UniformityReport:
    forward: np.ndarray        # forward[l, j]: bits of section l sent to (l - j) mod L
    backward: np.ndarray       # backward[l', j]: bits of section l' that came from (l' + j) mod L
    outside: int               # bits sent outside the W-window (always 0)
    bijective: bool

    @property
    def exact(self) -> bool:
        """Every count equals M / W in both directions."""
        M = int(self.forward.sum(axis=1)[0])
        W = self.forward.shape[1]
        return (M % W == 0 and bool(np.all(self.forward == M // W))
                and bool(np.all(self.backward == M // W)))

    @property
    def max_deviation(self) -> int:
        """Largest spread (max - min) of the counts over the W window slots."""
        spread = lambda c: int(np.max(c.max(axis=1) - c.min(axis=1)))
        return max(spread(self.forward), spread(self.backward))


def verify_uniformity(il: ScInterleaver) -> UniformityReport:
    mp, lp = il.table()
    src = np.arange(il.L)[:, None]
    shift = (src - lp) % il.L
    outside = int(np.count_nonzero(shift >= il.W))
    fwd = np.zeros((il.L, il.W), dtype=np.int64)
    back = np.zeros((il.L, il.W), dtype=np.int64)
    ok = shift < il.W
    np.add.at(fwd, (np.broadcast_to(src, shift.shape)[ok], shift[ok]), 1)
    np.add.at(back, (lp[ok], shift[ok]), 1)
    flat = lp * il.M + mp
    bijective = np.unique(flat).size == il.L * il.M
    return UniformityReport(fwd, back, outside, bool(bijective))


def write_text(path, il: ScInterleaver, header: str = "") -> None:
    """One line per source bit: "l m l' m'"."""
    mp, lp = il.table()
    with open(path, "w") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        fh.write(f"# L={il.L} W={il.W} M={il.M} seed={il.seed}\n")
        fh.write("l m l' m'\n")
        for l in range(il.L):
            for m in range(il.M):
                fh.write(f"{l} {m} {lp[l, m]} {mp[l, m]}\n")
