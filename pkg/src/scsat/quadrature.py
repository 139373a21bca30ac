"""Cumulative quadrature on a fixed grid.

Each grid cell carries an ``order``-point Gauss-Legendre rule. Antiderivatives
at the interior nodes come from integrating the cell's Lagrange interpolant
exactly (a spectral integration matrix), so nested integrals such as
``int exp(int a/b)`` need integrand values at one node set only.

Cells touching a singular grid node are split geometrically toward that node,
which keeps integrable endpoint singularities (u^-k, log u) under control.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as leg
from scipy.interpolate import CubicSpline


@lru_cache(maxsize=8)
def _rule(order: int):
    t, w = leg.leggauss(order)
    vander = leg.legvander(t, order - 1)
    basis = np.linalg.inv(vander)  # column j: Legendre coefficients of the j-th Lagrange polynomial
    smat = np.empty((order, order))
    for j in range(order):
        smat[:, j] = leg.legval(t, leg.legint(basis[:, j], lbnd=-1))
    return t, w, smat


class QuadMesh:
    """Sub-cells, quadrature nodes and cumulative-integration machinery for ``grid``."""

    def __init__(self, grid, singular=None, order: int = 8, levels: int = 40):
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing with at least two points")
        singular = np.zeros(grid.size, bool) if singular is None else np.asarray(singular, bool)
        self.grid = grid
        self.order = order
        a_list, b_list = [], []
        node_to_boundary = np.empty(grid.size, dtype=int)
        node_to_boundary[0] = 0
        count = 0
        def depth(node, width):
            # stop grading before sub-cells fall below the float spacing at the node
            if node == 0.0:
                return levels
            room = np.log2(width / (1e4 * np.spacing(abs(node))))
            return int(max(1, min(levels, np.floor(room))))

        for k in range(grid.size - 1):
            a, b = grid[k], grid[k + 1]
            edges = [a, b]
            if singular[k] and singular[k + 1]:
                m = 0.5 * (a + b)
                na, nb = depth(a, m - a), depth(b, b - m)
                left = [a] + [a + (m - a) * 2.0**-i for i in range(na, 0, -1)]
                right = [b - (b - m) * 2.0**-i for i in range(1, nb + 1)] + [b]
                edges = left + [m] + right
            elif singular[k]:
                na = depth(a, b - a)
                edges = [a] + [a + (b - a) * 2.0**-i for i in range(na, 0, -1)] + [b]
            elif singular[k + 1]:
                nb = depth(b, b - a)
                edges = [a] + [b - (b - a) * 2.0**-i for i in range(1, nb + 1)] + [b]
            edges = np.asarray(edges)
            a_list.append(edges[:-1])
            b_list.append(edges[1:])
            count += edges.size - 1
            node_to_boundary[k + 1] = count
        self.a = np.concatenate(a_list)
        self.b = np.concatenate(b_list)
        t, w, smat = _rule(order)
        self._w, self._smat = w, smat
        half = 0.5 * (self.b - self.a)
        self._half = half
        self.points2d = 0.5 * (self.a + self.b)[:, None] + half[:, None] * t[None, :]
        self.points = self.points2d.ravel()
        self._node_to_boundary = node_to_boundary

    def cumulative(self, values, anchor: int = 0):
        """Antiderivative of the sampled integrand, zero at grid node ``anchor``.

        ``values`` are integrand samples at ``self.points``. Returns
        ``(at_grid, at_points)``.
        """
        f = np.asarray(values, dtype=float).reshape(self.points2d.shape)
        cell = self._half * (f @ self._w)
        bounds = np.concatenate(([0.0], np.cumsum(cell)))
        inner = bounds[:-1, None] + self._half[:, None] * (f @ self._smat.T)
        at_grid = bounds[self._node_to_boundary]
        shift = at_grid[anchor]
        return at_grid - shift, (inner - shift).ravel()

    def integral(self, values) -> float:
        f = np.asarray(values, dtype=float).reshape(self.points2d.shape)
        return float(np.sum(self._half * (f @ self._w)))

    def interpolant(self, at_grid, at_points) -> CubicSpline:
        """Cubic spline through grid-node and quadrature-node values."""
        x = np.concatenate((self.grid, self.points))
        y = np.concatenate((at_grid, at_points))
        order = np.argsort(x, kind="stable")
        x, y = x[order], y[order]
        keep = np.concatenate(([True], np.diff(x) > 0))
        return CubicSpline(x[keep], y[keep])
