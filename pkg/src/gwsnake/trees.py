"""Planar trees stored as depth-first child-count sequences, and their encodings.

A tree with ``n + 1`` nodes is identified with the sequence ``(c_0, ..., c_n)``
of child counts read in lexicographic (depth-first) order.  Node identity is the
DFS rank; Neveu words are never materialised.
"""

from __future__ import annotations

import json
import math
from typing import Iterable, Sequence

import numpy as np


class LukasiewiczViolation(ValueError):
    """The degree sequence does not encode a planar tree."""

    def __init__(self, index: int, message: str):
        super().__init__(f"{message} (partial-sum index {index})")
        self.index = index


class DegenerateTree(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class GridPath:
    """Piecewise-linear function on [0, 1] given by values on a uniform grid.

    ``values`` has shape ``(L,)`` or ``(L, d)``; grid point ``i`` sits at
    ``i / (L - 1)``.  ``scale`` multiplies after interpolation, so grid values
    are reproduced bit-for-bit (``values[i] * scale``) and the interpolation is
    exactly ``(v[⌊xs⌋] + {xs}(v[⌊xs⌋+1] - v[⌊xs⌋])) * scale``.
    """

    __slots__ = ("values", "scale")

    def __init__(self, values, scale: float = 1.0):
        self.values = _frozen(np.array(values, copy=True))
        self.scale = scale

    @property
    def steps(self) -> int:
        return len(self.values) - 1

    @property
    def grid(self) -> np.ndarray:
        if self.steps == 0:
            return np.zeros(1)
        return np.arange(len(self.values)) / self.steps

    @property
    def grid_values(self) -> np.ndarray:
        return self.values * self.scale

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        if np.any((s < 0) | (s > 1)):
            raise ValueError("GridPath is defined on [0, 1]")
        x = s * self.steps
        # i / steps * steps can miss i by one ulp; grid points must be hit exactly
        r = np.rint(x)
        x = np.where(np.abs(x - r) <= 1e-9, r, x)
        i = np.floor(x).astype(np.int64)
        return i, x - i

    def __call__(self, s):
        if self.steps == 0:
            v = self.values[0] * self.scale
            return v if np.ndim(s) == 0 else np.broadcast_to(v, np.shape(s) + np.shape(v)).copy()
        i, frac = self._locate(s)
        lo = self.values[i]
        hi = self.values[np.minimum(i + 1, self.steps)]
        if lo.ndim > np.ndim(frac):
            frac = np.expand_dims(frac, -1)
        return (lo + frac * (hi - lo)) * self.scale

    def min_between(self, s: float, t: float):
        """Exact minimum of the path over ``[min(s,t), max(s,t)]``."""
        a, b = min(s, t), max(s, t)
        ends = np.minimum(self(a), self(b))
        if self.steps == 0:
            return ends
        lo = int(math.floor(a * self.steps)) + 1
        hi = int(math.ceil(b * self.steps)) - 1
        if lo <= hi:
            inner = self.values[lo:hi + 1].min(axis=0) * self.scale
            return np.minimum(ends, inner)
        return ends

    def __eq__(self, other):
        if not isinstance(other, GridPath):
            return NotImplemented
        return self.scale == other.scale and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"GridPath(steps={self.steps}, scale={self.scale!r})"


class PlanarTree:
    """An immutable planar tree.

    Attributes (all read-only numpy arrays indexed by DFS rank):
    ``degrees`` child counts, ``parent`` (``-1`` for the root), ``depth``,
    ``rank`` (1-based position of a node among its siblings, ``0`` for the root).
    """

    __slots__ = ("degrees", "parent", "depth", "rank")

    def __init__(self, degrees, parent, depth, rank):
        self.degrees = _frozen(degrees)
        self.parent = _frozen(parent)
        self.depth = _frozen(depth)
        self.rank = _frozen(rank)

    @property
    def size(self) -> int:
        """Number of nodes ``|T|``."""
        return len(self.degrees)

    @property
    def edges(self) -> int:
        return len(self.degrees) - 1

    def __len__(self):
        return len(self.degrees)

    def __eq__(self, other):
        if not isinstance(other, PlanarTree):
            return NotImplemented
        return np.array_equal(self.degrees, other.degrees)

    def __hash__(self):
        return hash(self.degrees.tobytes())

    def __repr__(self):
        if self.size <= 12:
            return f"PlanarTree({tuple(int(c) for c in self.degrees)})"
        return f"PlanarTree(<{self.size} nodes>)"

    def ancestors(self, u: int) -> list[int]:
        """Strict ancestors of ``u``, from the parent up to the root."""
        out = []
        v = int(self.parent[u])
        while v >= 0:
            out.append(v)
            v = int(self.parent[v])
        return out

    def children(self, u: int) -> list[int]:
        return [int(v) for v in np.flatnonzero(self.parent == u)]

    def levels(self) -> list[np.ndarray]:
        """Node indices grouped by depth (depth 1, 2, ...), each in DFS order."""
        if self.size == 1:
            return []
        order = np.argsort(self.depth, kind="stable")
        counts = np.bincount(self.depth)
        return np.split(order, np.cumsum(counts)[:-1])[1:]

    def to_json(self, labels: Sequence[float] | None = None, **extra) -> str:
        obj = {"degrees": [int(c) for c in self.degrees]}
        if labels is not None:
            obj["labels"] = [float(x) for x in labels]
        obj.update(extra)
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "PlanarTree":
        return tree_from_degrees(json.loads(text)["degrees"])


def lukasiewicz_path(degrees: Iterable[int]) -> np.ndarray:
    """Partial sums ``S_0 = 0, S_i = sum_{j<i} (c_j - 1)``; length ``|T| + 1``."""
    c = np.asarray(list(degrees) if not isinstance(degrees, np.ndarray) else degrees, dtype=np.int64)
    return np.concatenate(([0], np.cumsum(c - 1)))


def tree_from_degrees(degrees) -> PlanarTree:
    """Validate a DFS child-count sequence and build parent/depth/rank tables."""
    c = np.array(degrees, dtype=np.int64).ravel()
    if c.size == 0:
        raise ValueError("degree sequence must be nonempty")
    if np.any(c < 0):
        raise ValueError("degrees must be nonnegative")
    size = c.size
    s = lukasiewicz_path(c)
    bad = np.flatnonzero(s[:size] < 0)
    if bad.size:
        raise LukasiewiczViolation(int(bad[0]), "path reaches -1 before the last node")
    if s[size] != -1:
        raise LukasiewiczViolation(size, f"path ends at {int(s[size])} instead of -1")

    parent = np.empty(size, dtype=np.int64)
    depth = np.empty(size, dtype=np.int64)
    rank = np.empty(size, dtype=np.int64)
    parent[0], depth[0], rank[0] = -1, 0, 0
    deg = c.tolist()
    par = [0] * size
    dep = [0] * size
    rk = [0] * size
    # stack entries: [node, next child rank, node degree]
    stack = [[0, 1, deg[0]]] if deg[0] else []
    for i in range(1, size):
        top = stack[-1]
        v = top[0]
        par[i] = v
        rk[i] = top[1]
        dep[i] = dep[v] + 1
        if top[1] == top[2]:
            stack.pop()
        else:
            top[1] += 1
        if deg[i]:
            stack.append([i, 1, deg[i]])
    parent[1:] = par[1:]
    depth[1:] = dep[1:]
    rank[1:] = rk[1:]
    return PlanarTree(c, parent, depth, rank)


def height_process(tree: PlanarTree) -> GridPath:
    """``H_k = |u(k)|`` on the grid ``k / n``, unscaled."""
    return GridPath(tree.depth)


def contour_walk(tree: PlanarTree) -> np.ndarray:
    """The walk-around ``F_T(0..2n)`` as an array of DFS ranks."""
    n = tree.edges
    walk = np.empty(2 * n + 1, dtype=np.int64)
    walk[0] = 0
    deg = tree.degrees.tolist()
    par = tree.parent.tolist()
    pos = 1
    # a DFS rank is visited for the first time in increasing order
    nxt = 1
    cur = 0
    seen = [0] * len(deg)
    while pos <= 2 * n:
        if seen[cur] < deg[cur]:
            seen[cur] += 1
            cur = nxt
            nxt += 1
        else:
            cur = par[cur]
        walk[pos] = cur
        pos += 1
    return walk


def contour_process(tree: PlanarTree) -> GridPath:
    """``Ĥ_k = |F_T(k)|`` on the grid ``k / (2n)``, unscaled."""
    return GridPath(tree.depth[contour_walk(tree)])


def rescale_height(tree: PlanarTree, contour: bool = False) -> GridPath:
    """``h_n(s) = H_{ns} / sqrt(n)`` (or ``Ĥ_{2ns} / sqrt(n)`` with ``contour``)."""
    n = tree.edges
    if n == 0:
        raise DegenerateTree("rescaling needs at least one edge")
    base = contour_process(tree) if contour else height_process(tree)
    return GridPath(base.values, 1.0 / math.sqrt(n))
