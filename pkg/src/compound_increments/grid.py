"""Dyadic grids on [0, 1)^d and functions stored through their cell increments."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import DomainError

__all__ = ["DyadicGrid", "GridFunction"]


@dataclass(frozen=True)
class DyadicGrid:
    """Nodes ``2^-p j`` for ``j in {1..2^p}^d`` and the half-open cells below them."""

    d: int
    p: int

    def __post_init__(self):
        if self.d < 1 or self.p < 0:
            raise DomainError("grid needs d >= 1 and p >= 0")

    @property
    def side(self) -> int:
        return 2 ** self.p

    @property
    def shape(self):
        return (self.side,) * self.d

    @property
    def cell_volume(self) -> float:
        return 2.0 ** (-self.p * self.d)

    @property
    def n_cells(self) -> int:
        return self.side ** self.d

    def nodes(self):
        """Node coordinates, shape ``shape + (d,)``."""
        axes = [np.arange(1, self.side + 1) / self.side] * self.d
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def cell_lower_corners(self):
        axes = [np.arange(self.side) / self.side] * self.d
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _cumsum_axes(arr, d, reverse=False):
    out = arr
    for ax in range(d):
        if reverse:
            out = np.flip(np.cumsum(np.flip(out, axis=ax), axis=ax), axis=ax)
        else:
            out = np.cumsum(out, axis=ax)
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class GridFunction:
    """A map ``[0,1)^d -> R^k`` represented by its cell increments at depth ``p``.

    ``increments`` has shape ``(2^p,)*d + (k,)``.  The cumulative view at node
    ``s_j`` is the sum of the increments of all cells inside ``[0, s_j)``, so
    ``g(0) = 0`` always holds.  Off-grid evaluation spreads each cell's mass
    uniformly over the cell.
    """

    def __init__(self, increments, d: int = 1):
        inc = np.asarray(increments, dtype=float)
        if inc.ndim == d:
            inc = inc[..., None]
        if inc.ndim != d + 1:
            raise DomainError(f"increments of shape {inc.shape} do not fit d={d}")
        side = inc.shape[0]
        if any(n != side for n in inc.shape[:d]) or side & (side - 1):
            raise DomainError("grid axes must all have the same power-of-two length")
        self.increments = inc
        self.d = d

    # -- construction -----------------------------------------------------
    @classmethod
    def zeros(cls, p, d=1, k=1):
        return cls(np.zeros((2 ** p,) * d + (k,)), d)

    @classmethod
    def constant_slope(cls, slope, p, d=1):
        slope = np.atleast_1d(np.asarray(slope, dtype=float))
        grid = DyadicGrid(d, p)
        inc = np.broadcast_to(slope * grid.cell_volume, grid.shape + slope.shape).copy()
        return cls(inc, d)

    @classmethod
    def from_slope(cls, slope_fn, p, d=1):
        """Integrate a slope field over each cell with tensor Gauss-Legendre rules.

        ``slope_fn`` maps an ``(m, d)`` array of points to ``(m,)`` or ``(m, k)``.
        """
        grid = DyadicGrid(d, p)
        h = 1.0 / grid.side
        corners = grid.cell_lower_corners().reshape(-1, d)
        ref = (_GL_NODES + 1.0) / 2.0
        w = _GL_WEIGHTS / 2.0
        mesh = np.stack(np.meshgrid(*[ref] * d, indexing="ij"), axis=-1).reshape(-1, d)
        wmesh = np.prod(np.stack(np.meshgrid(*[w] * d, indexing="ij"), axis=-1).reshape(-1, d), axis=1)
        pts = corners[:, None, :] + h * mesh[None, :, :]
        vals = np.asarray(slope_fn(pts.reshape(-1, d)), dtype=float)
        vals = vals.reshape(len(corners), len(mesh), -1)
        inc = np.einsum("cqk,q->ck", vals, wmesh) * grid.cell_volume
        return cls(inc.reshape(grid.shape + (inc.shape[-1],)), d)

    @classmethod
    def from_cumulative(cls, values, d=1):
        """Inverse of :meth:`cumulative` (finite differences along every axis)."""
        vals = np.asarray(values, dtype=float)
        if vals.ndim == d:
            vals = vals[..., None]
        inc = vals
        for ax in range(d):
            inc = np.diff(inc, axis=ax, prepend=0.0)
        return cls(inc, d)

    # -- views ------------------------------------------------------------
    @property
    def k(self) -> int:
        return self.increments.shape[-1]

    @property
    def p(self) -> int:
        return int(np.log2(self.increments.shape[0]))

    @cached_property
    def grid(self) -> DyadicGrid:
        return DyadicGrid(self.d, self.p)

    def cumulative(self):
        """Values at the nodes of the grid, shape ``grid.shape + (k,)``."""
        return _cumsum_axes(self.increments, self.d)

    def slopes(self):
        return self.increments / self.grid.cell_volume

    def total(self):
        """Value at ``s = (1, ..., 1)``: the total mass."""
        return self.increments.reshape(-1, self.k).sum(axis=0)

    def discretize(self, q: int) -> "GridFunction":
        if q > self.p:
            raise DomainError(f"cannot refine depth {self.p} to depth {q}")
        if q < 0:
            raise DomainError("depth must be nonnegative")
        f = 2 ** (self.p - q)
        side = 2 ** q
        shape = []
        for _ in range(self.d):
            shape += [side, f]
        arr = self.increments.reshape(tuple(shape) + (self.k,))
        return GridFunction(arr.sum(axis=tuple(range(1, 2 * self.d, 2))), self.d)

    def evaluate(self, s):
        """Cumulative value at arbitrary points ``s`` of shape ``(m, d)``."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        side = self.grid.side
        j = np.arange(side)
        out = np.empty((len(s), self.k))
        for row, point in enumerate(s):
            fr = [np.clip(point[ax] * side - j, 0.0, 1.0) for ax in range(self.d)]
            weight = fr[0]
            for ax in range(1, self.d):
                weight = np.multiply.outer(weight, fr[ax])
            out[row] = np.tensordot(weight, self.increments, axes=self.d)
        return out

    def sup_distance(self, other: "GridFunction") -> float:
        """``max`` over grid nodes of the coordinatewise max-norm difference."""
        if other.increments.shape != self.increments.shape:
            if other.p > self.p:
                other = other.discretize(self.p)
            elif self.p > other.p:
                return other.sup_distance(self)
        return float(np.max(np.abs(self.cumulative() - other.cumulative())))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.cumulative())))

    def total_variation(self) -> float:
        return float(np.sum(np.max(np.abs(self.increments), axis=-1)))

    # -- arithmetic ---------------------------------------------------------
    def _check(self, other):
        if not isinstance(other, GridFunction) or other.increments.shape != self.increments.shape:
            raise DomainError("grid functions must share grid and dimension")

    def __add__(self, other):
        self._check(other)
        return GridFunction(self.increments + other.increments, self.d)

    def __sub__(self, other):
        self._check(other)
        return GridFunction(self.increments - other.increments, self.d)

    def __mul__(self, scalar):
        return GridFunction(self.increments * float(scalar), self.d)

    __rmul__ = __mul__

    def __eq__(self, other):
        return (isinstance(other, GridFunction) and self.d == other.d
                and np.array_equal(self.increments, other.increments))

    def __repr__(self):
        return f"GridFunction(d={self.d}, p={self.p}, k={self.k})"


def cumulative_adjoint(weights, d):
    """Adjoint of :meth:`GridFunction.cumulative`: reverse cumulative sums."""
    return _cumsum_axes(weights, d, reverse=True)
