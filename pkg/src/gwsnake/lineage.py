"""Lineages ``A_u`` of every node and the centered lineage process ``G^(n)``.

``A_{u,k,j}`` counts the strict ancestors ``v`` of ``u`` having ``k`` children
and such that ``u`` descends from the ``j``-th of them.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .multinomial import IndexSetIK, pair_index
from .trees import GridPath, PlanarTree


class InvalidWindow(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LineageTable:
    counts: np.ndarray  # (n + 1, #I_K), row l is A_{u(l)}
    depth: np.ndarray

    def __post_init__(self):
        self.counts.setflags(write=False)

    def __len__(self):
        return len(self.depth)


def _step_columns(tree: PlanarTree, ik: IndexSetIK) -> np.ndarray:
    """Column of the (c_parent, rank) pair contributed by each non-root node."""
    k = tree.degrees[tree.parent[1:]]
    if k.size and k.max() > ik.K:
        raise DimensionMismatch(f"tree has a node with {int(k.max())} children, K = {ik.K}")
    return k * (k - 1) // 2 + tree.rank[1:] - 1


def compute_lineage(tree: PlanarTree, ik: IndexSetIK) -> LineageTable:
    """All lineages, built level by level: ``A_child = A_parent + e_{(c_parent, rank)}``."""
    counts = np.zeros((tree.size, len(ik)), dtype=np.int64)
    if tree.size > 1:
        col = np.empty(tree.size, dtype=np.int64)
        col[1:] = _step_columns(tree, ik)
        for nodes in tree.levels():
            counts[nodes] = counts[tree.parent[nodes]]
            counts[nodes, col[nodes]] += 1
    return LineageTable(counts, np.array(tree.depth))


def lineage_of(tree: PlanarTree, ik: IndexSetIK, u: int) -> np.ndarray:
    """``A_u`` for one node, by walking up to the root."""
    out = np.zeros(len(ik), dtype=np.int64)
    deg = tree.degrees
    rank = tree.rank
    par = tree.parent
    v = u
    while v > 0:
        p = par[v]
        out[pair_index(int(deg[p]), int(rank[v]))] += 1
        v = p
    return out


def restricted_lineage(tree: PlanarTree, ik: IndexSetIK, u: int, l: int) -> np.ndarray:
    """Lineage of ``u`` restricted to strict ancestors at distance ``<= l``."""
    if not 0 <= l <= tree.depth[u]:
        raise InvalidWindow(f"window {l} outside [0, {int(tree.depth[u])}]")
    out = np.zeros(len(ik), dtype=np.int64)
    v = u
    for _ in range(l):
        p = tree.parent[v]
        out[pair_index(int(tree.degrees[p]), int(tree.rank[v]))] += 1
        v = p
    return out


def g_values(table: LineageTable, ik: IndexSetIK) -> np.ndarray:
    """Unscaled ``g_{k,j}(l) = A_{u(l),k,j} - mu_k |u(l)|`` as floats."""
    return table.counts - np.outer(table.depth, ik.p)


def g_numerators(table: LineageTable, ik: IndexSetIK) -> tuple[np.ndarray, int]:
    """Exact ``g`` for rational mu: integer array ``q g`` and the denominator ``q``."""
    if not ik.exact:
        raise ValueError("exact g values need a rational offspring law")
    p = [Fraction(x) for x in ik.p_exact]
    q = math.lcm(*(x.denominator for x in p))
    pq = np.array([int(x * q) for x in p], dtype=object)
    num = table.counts.astype(object) * q - np.outer(table.depth.astype(object), pq)
    return num, q


def g_process(tree: PlanarTree, table: LineageTable, ik: IndexSetIK) -> GridPath:
    """``G^(n)`` as a vector-valued grid path (values on ``l / n``, scale ``n^{-1/4}``)."""
    if len(table) != tree.size or table.counts.shape[1] != len(ik):
        raise DimensionMismatch("lineage table does not match the tree / index set")
    n = tree.edges
    if n < 1:
        raise DimensionMismatch("G^(n) needs n >= 1")
    return GridPath(g_values(table, ik), 1.0 / n**0.25)


def g_to_csv(path: GridPath, ik: IndexSetIK) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "k", "j", "value"])
    for s, row in zip(path.grid, path.grid_values):
        for (k, j), v in zip(ik.pairs, row):
            w.writerow([repr(float(s)), k, j, repr(float(v))])
    return buf.getvalue()


@dataclass(frozen=True)
class PathStatistics:
    max_increment: int
    last_depth: int
    lineage_ratio: float  # max |A_{u,l,k,j} - mu_k l| / sqrt(l log n)


def lineage_ratio(
    tree: PlanarTree, ik: IndexSetIK, table: LineageTable | None = None, full_scan_limit: int = 2000
) -> float:
    """Max over nodes, windows and ``(k, j)`` of ``|A_{u,l,k,j} - mu_k l| / sqrt(l log n)``.

    All pairs ``(u, l)`` are scanned when ``n <= full_scan_limit``; beyond that
    every ``ceil(n/1000)``-th node is used with dyadic windows plus ``l = |u|``.
    """
    n = tree.edges
    if n < 2:
        return 0.0
    if table is None:
        table = compute_lineage(tree, ik)
    A = table.counts
    depth = table.depth
    par = np.where(tree.parent < 0, 0, tree.parent)
    logn = math.log(n)
    best = 0.0

    def scan(nodes, anc, l):
        nonlocal best
        if nodes.size:
            dev = np.abs(A[nodes] - A[anc] - l * ik.p) / np.sqrt(l * logn)
            best = max(best, float(dev.max()))

    if n <= full_scan_limit:
        nodes = np.arange(1, tree.size)
        anc = nodes.copy()
        for l in range(1, int(depth.max()) + 1):
            anc = par[anc]
            keep = depth[nodes] >= l
            nodes, anc = nodes[keep], anc[keep]
            scan(nodes, anc, l)
        return best

    nodes = np.arange(1, tree.size, math.ceil(n / 1000))
    nodes = nodes[depth[nodes] > 0]
    scan(nodes, np.zeros_like(nodes), depth[nodes][:, None])
    jump = par.copy()  # ancestor at distance 2^i
    l = 1
    while l <= depth.max():
        keep = depth[nodes] >= l
        scan(nodes[keep], jump[nodes[keep]], l)
        jump = jump[jump]
        l *= 2
    return best


def path_statistics(tree: PlanarTree, ik: IndexSetIK, table: LineageTable | None = None) -> PathStatistics:
    if tree.size == 1:
        return PathStatistics(0, 0, 0.0)
    inc = int(np.max(np.abs(np.diff(tree.depth))))
    return PathStatistics(inc, int(tree.depth[-1]), lineage_ratio(tree, ik, table))
