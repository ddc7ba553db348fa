"""Brute-force enumeration of small trees and exact checks of the lineage identities.

Everything here runs in rational arithmetic; no tolerance is involved.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .gw import InvalidArgs, OffspringDistribution, forest_size_pmf, tree_size_pmf
from .lineage import lineage_of
from .multinomial import CapExceeded, IndexSetIK, n1_n2, n1_n2_laws, q_h_pmf
from .trees import PlanarTree, tree_from_degrees

MAX_EDGES = 10
MAX_K = 4


def _require_exact(mu: OffspringDistribution):
    if not mu.exact:
        raise InvalidArgs("the exact oracle needs a rational offspring law (p/q entries)")


def enumerate_trees(mu: OffspringDistribution, n: int, cap: int = MAX_EDGES) -> list[tuple[PlanarTree, Fraction]]:
    """All trees with ``n`` edges and positive weight ``prod mu_{c_u}``, by backtracking."""
    _require_exact(mu)
    if n > cap or mu.K > MAX_K:
        raise CapExceeded(f"enumeration limited to n <= {cap}, K <= {MAX_K}")
    size = n + 1
    alphabet = [(k, Fraction(p)) for k, p in enumerate(mu.probs) if p > 0]
    out = []
    seq = []

    def walk(s: int, weight: Fraction):
        pos = len(seq)
        remaining = size - pos
        if remaining == 0:
            if s == -1:
                out.append((tree_from_degrees(seq), weight))
            return
        # every remaining node lowers the path by at most one
        if s < 0 or s > remaining - 1:
            return
        for k, p in alphabet:
            seq.append(k)
            walk(s + k - 1, weight * p)
            seq.pop()

    walk(0, Fraction(1))
    return out


def exact_lineage_law(mu: OffspringDistribution, n: int, m: int) -> dict[tuple, Fraction]:
    """``P_n(A_{u(m)} = a)`` keyed by content tuples aligned with ``IndexSetIK(mu).pairs``."""
    ik = IndexSetIK(mu)
    trees = enumerate_trees(mu, n)
    total = sum(w for _, w in trees)
    if not total:
        raise InvalidArgs(f"no tree with {n + 1} nodes")
    law: dict[tuple, Fraction] = {}
    for t, w in trees:
        key = tuple(int(x) for x in lineage_of(t, ik, m))
        law[key] = law.get(key, 0) + w / total
    return law


def forest_pmf(mu: OffspringDistribution, k: int, size: int) -> Fraction:
    """``P(|f_k| = size)`` with the convention ``P(|f_0| = 0) = 1``."""
    if k == 0:
        return Fraction(int(size == 0))
    if size < k:
        return Fraction(0)
    return forest_size_pmf(mu, k, size)


def _forest_factor(mu: OffspringDistribution, a, n: int, m: int) -> Fraction:
    a = np.asarray(a)
    h = int(a.sum())
    n1, n2 = (int(x) for x in n1_n2(a))
    return forest_pmf(mu, n1, m - h) * forest_pmf(mu, 1 + n2, n + 1 - m)


def prop5_rhs(mu: OffspringDistribution, n: int, m: int, a, denominator_offset: int = 1) -> Fraction:
    """``Q_h(a) P(|f_{N1}| = m-h) P(|f'_{1+N2}| = n+1-m) / P(|T| = n + offset)``.

    The forest pair accounts for the ``m - h`` nodes visited before ``u(m)`` off
    its ancestral line and the ``n + 1 - m`` nodes from ``u(m)`` on.
    """
    _require_exact(mu)
    ik = IndexSetIK(mu)
    a = ik.to_array(a)
    h = int(a.sum())
    if not 0 <= m <= n or h > m:
        raise InvalidArgs(f"need h <= m <= n, got h={h}, m={m}, n={n}")
    denom = tree_size_pmf(mu, n + denominator_offset) if n + denominator_offset >= 1 else Fraction(0)
    if denom == 0:
        raise InvalidArgs(f"P(|T| = {n + denominator_offset}) = 0")
    return q_h_pmf(ik, a) * _forest_factor(mu, a, n, m) / denom


@dataclass
class Check:
    name: str
    n: int | None
    m: int | None
    status: str
    detail: str = ""


@dataclass
class IdentityReport:
    mu: str
    n_max: int
    checks: list[Check] = field(default_factory=list)

    @property
    def violations(self) -> list[Check]:
        return [c for c in self.checks if c.status != "pass"]

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, name, n, m, failures: list[str]):
        status = "pass" if not failures else "fail"
        self.checks.append(Check(name, n, m, status, "; ".join(failures[:5])))

    def to_json(self) -> str:
        return json.dumps(
            {"mu": self.mu, "n_max": self.n_max, "violations": len(self.violations),
             "checks": [asdict(c) for c in self.checks]},
            indent=1,
        )


def _direct_forest_law(tree_law: dict[int, Fraction], k: int, max_size: int) -> dict[int, Fraction]:
    """Convolution of ``k`` copies of the enumerated tree-size law."""
    law = {0: Fraction(1)}
    for _ in range(k):
        nxt: dict[int, Fraction] = {}
        for s, p in law.items():
            for t, q in tree_law.items():
                if s + t <= max_size:
                    nxt[s + t] = nxt.get(s + t, 0) + p * q
        law = nxt
    return law


def verify_identities(mu: OffspringDistribution, n_max: int, denominator_offset: int = 1) -> IdentityReport:
    """Exact checks for every supported ``n <= n_max`` and every ``m <= n``.

    (a) enumerated ``P_n(A_{u(m)} = a)`` equals the forest formula for every content ``a``;
    (b) summing the formula over contents of total ``h`` gives ``P_n(|u(m)| = h)``;
    (c) the walk formula for forest sizes equals convolved enumerated tree sizes;
    (d) the ratio of ``P_n(A_{u(m)} = a)`` to ``P_n(|u(m)| = h) Q_h(a)`` equals the
        ratio of the forest factor at ``a`` to its ``Q_h``-average.
    """
    _require_exact(mu)
    ik = IndexSetIK(mu)
    report = IdentityReport(str(mu), n_max)
    if n_max > MAX_EDGES or mu.K > MAX_K:
        raise CapExceeded(f"n_max <= {MAX_EDGES} and K <= {MAX_K} required")

    tree_law: dict[int, Fraction] = {}
    trees_by_n = {}
    for n in range(0, n_max + 1):
        trees = enumerate_trees(mu, n)
        trees_by_n[n] = trees
        total = sum((w for _, w in trees), Fraction(0))
        if total:
            tree_law[n + 1] = total

    fails = []
    for s in range(1, n_max + 2):
        direct = tree_law.get(s, Fraction(0))
        formula = tree_size_pmf(mu, s)
        if direct != formula:
            fails.append(f"P(|T|={s}): enumeration {direct} != walk formula {formula}")
    report.add("tree_size_totals", None, None, fails)

    for k in range(1, 5):
        direct = _direct_forest_law(tree_law, k, n_max + 1)
        fails = []
        for s in range(k, n_max + 2):
            lhs = forest_size_pmf(mu, k, s)
            rhs = direct.get(s, Fraction(0))
            if lhs != rhs:
                fails.append(f"k={k}, size={s}: Otter {lhs} != enumeration {rhs}")
        report.add(f"otter_k{k}", None, None, fails)

    for n in range(0, n_max + 1):
        trees = trees_by_n[n]
        total = tree_law.get(n + 1)
        if not total:
            continue
        for m in range(0, n + 1):
            law: dict[tuple, Fraction] = {}
            depth_law: dict[int, Fraction] = {}
            for t, w in trees:
                key = tuple(int(x) for x in lineage_of(t, ik, m))
                law[key] = law.get(key, 0) + w / total
                h = int(t.depth[m])
                depth_law[h] = depth_law.get(h, 0) + w / total

            fails_a, fails_b, fails_d = [], [], []
            for h in range(0, m + 1):
                summed = Fraction(0)
                forest_avg = Fraction(0)
                contents = list(ik.compositions(h))
                rhs_by_a = {}
                for a in contents:
                    forest_avg += q_h_pmf(ik, a) * _forest_factor(mu, np.array(a), n, m)
                    try:
                        rhs = prop5_rhs(mu, n, m, a, denominator_offset)
                    except InvalidArgs as exc:
                        fails_a.append(f"a={a}: {exc}")
                        continue
                    rhs_by_a[a] = rhs
                    lhs = law.get(a, Fraction(0))
                    if lhs != rhs:
                        fails_a.append(f"a={a}: enumeration {lhs} != formula {rhs}")
                    summed += rhs
                if len(rhs_by_a) == len(contents) and summed != depth_law.get(h, 0):
                    fails_b.append(f"h={h}: summed formula {summed} != enumeration {depth_law.get(h, 0)}")
                p_h = depth_law.get(h, Fraction(0))
                for a in contents:
                    q = q_h_pmf(ik, a)
                    if not q or not p_h:
                        continue
                    lhs = law.get(a, Fraction(0)) / (p_h * q)
                    rhs = _forest_factor(mu, np.array(a), n, m) / forest_avg
                    if lhs != rhs:
                        fails_d.append(f"a={a}: ratio {lhs} != forest ratio {rhs}")
            report.add("prop5_lineage_law", n, m, fails_a)
            report.add("depth_law_sum", n, m, fails_b)
            report.add("ratio_identity", n, m, fails_d)

    if ik.K <= 3:
        fails = []
        for h in range(0, 13):
            l1, l2 = n1_n2_laws(ik, h)
            if l1 != l2:
                fails.append(f"h={h}: N1 law {l1} != N2 law {l2}")
        report.add("n1_n2_same_law", None, None, fails)
    return report
