"""The multinomial comparison law on ``I_K = {(k, j): 1 <= j <= k <= K}``.

Content vectors are numpy integer arrays aligned with ``IndexSetIK.pairs``;
mappings ``{(k, j): count}`` are accepted wherever a content vector is expected.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np
from scipy import stats

from .gw import OffspringDistribution, as_generator


class CapExceeded(ValueError):
    pass


def pair_index(k: int, j: int) -> int:
    """Column of ``(k, j)`` in the canonical ordering (1,1), (2,1), (2,2), (3,1), ..."""
    return k * (k - 1) // 2 + j - 1


class IndexSetIK:
    """``I_K`` with weights ``p_{k,j} = mu_k``."""

    def __init__(self, mu: OffspringDistribution):
        self.mu = mu
        self.K = mu.K
        self.pairs = [(k, j) for k in range(1, self.K + 1) for j in range(1, k + 1)]
        self.p_exact = [mu.probs[k] for k, _ in self.pairs]
        self.p = np.array([float(x) for x in self.p_exact])
        self.k = np.array([k for k, _ in self.pairs])
        self.j = np.array([j for _, j in self.pairs])

    def __len__(self):
        return len(self.pairs)

    def __repr__(self):
        return f"IndexSetIK(K={self.K})"

    @property
    def exact(self) -> bool:
        return self.mu.exact

    def to_array(self, a) -> np.ndarray:
        if isinstance(a, Mapping):
            out = np.zeros(len(self), dtype=np.int64)
            for (k, j), v in a.items():
                if not 1 <= j <= k <= self.K:
                    raise KeyError(f"({k},{j}) not in I_{self.K}")
                out[pair_index(k, j)] = v
            return out
        out = np.asarray(a)
        if out.shape[-1] != len(self):
            raise ValueError(f"content vector has length {out.shape[-1]}, expected {len(self)}")
        return out

    def to_dict(self, a, drop_zeros: bool = True) -> dict:
        a = self.to_array(a)
        return {pair: int(v) for pair, v in zip(self.pairs, a) if v or not drop_zeros}

    def compositions(self, h: int):
        """All content vectors with total ``h`` (stars and bars)."""
        m = len(self)
        for bars in itertools.combinations(range(h + m - 1), m - 1):
            prev = -1
            out = []
            for b in bars:
                out.append(b - prev - 1)
                prev = b
            out.append(h + m - 2 - prev)
            yield tuple(out)


def content_to_json(ik: IndexSetIK, a) -> str:
    return json.dumps({f"{k},{j}": int(v) for (k, j), v in ik.to_dict(a).items()})


def content_from_json(ik: IndexSetIK, text: str) -> np.ndarray:
    raw = json.loads(text)
    return ik.to_array({tuple(int(x) for x in key.split(",")): int(v) for key, v in raw.items()})


def q_h_pmf(ik: IndexSetIK, a):
    """Multinomial probability ``Q_h({a})`` with ``h = sum(a)``; a Fraction for rational mu."""
    a = [int(x) for x in ik.to_array(a)]
    h = sum(a)
    if ik.exact:
        coef = math.factorial(h)
        for x in a:
            coef //= math.factorial(x)
        prob = Fraction(coef)
        for x, p in zip(a, ik.p_exact):
            if x:
                prob *= Fraction(p) ** x
        return prob
    if h == 0:
        return 1.0
    return float(stats.multinomial.pmf(a, h, ik.p / ik.p.sum()))


def sample_multinomial(ik: IndexSetIK, h: int, rng, size=None) -> np.ndarray:
    gen = as_generator(rng)
    return gen.multinomial(h, ik.p / ik.p.sum(), size=size)


def g_statistic(ik: IndexSetIK, m, n: int) -> np.ndarray:
    """``n^{-1/4} (M_{k,j} - mu_k h)`` (works row-wise on 2-D input)."""
    m = ik.to_array(m)
    h = m.sum(axis=-1, keepdims=True)
    return (m - ik.p * h) / n**0.25


def limit_covariance(ik: IndexSetIK, exact: bool = False):
    """``diag(p) - p p^T``; nested lists of Fractions with ``exact=True``."""
    if exact:
        p = [Fraction(x) for x in ik.p_exact]
        return [[(pi if a == b else 0) - pi * pj for b, pj in enumerate(p)] for a, pi in enumerate(p)]
    return np.diag(ik.p) - np.outer(ik.p, ik.p)


def n1_n2(a, ik: IndexSetIK | None = None) -> tuple[int, int]:
    """``N_1 = sum (j-1) a_{k,j}``, ``N_2 = sum (k-j) a_{k,j}``."""
    if isinstance(a, Mapping):
        return (
            sum((j - 1) * v for (k, j), v in a.items()),
            sum((k - j) * v for (k, j), v in a.items()),
        )
    a = np.asarray(a)
    K = int(round((math.sqrt(8 * a.shape[-1] + 1) - 1) / 2))
    ks = np.array([k for k in range(1, K + 1) for _ in range(k)])
    js = np.array([j for k in range(1, K + 1) for j in range(1, k + 1)])
    return (a * (js - 1)).sum(axis=-1), (a * (ks - js)).sum(axis=-1)


def j_h_bounds(ik: IndexSetIK, h: int) -> tuple[float, float]:
    c = float(ik.mu.variance) * h / 2
    w = h ** (2.0 / 3.0)
    return c - w, c + w


def in_J_h(ik: IndexSetIK, a) -> bool:
    a = ik.to_array(a)
    h = int(a.sum())
    lo, hi = j_h_bounds(ik, h)
    n1, n2 = n1_n2(a)
    return bool(lo <= n1 <= hi and lo <= n2 <= hi)


def n1_n2_laws(ik: IndexSetIK, h: int) -> tuple[dict, dict]:
    """Exact laws of ``N_1(M^(h))`` and ``N_2(M^(h))`` by full enumeration."""
    if h > 12 or ik.K > 3:
        raise CapExceeded("enumeration limited to h <= 12 and K <= 3")
    law1: dict = {}
    law2: dict = {}
    for a in ik.compositions(h):
        q = q_h_pmf(ik, a)
        if not q:
            continue
        n1, n2 = n1_n2(np.array(a))
        law1[int(n1)] = law1.get(int(n1), 0) + q
        law2[int(n2)] = law2.get(int(n2), 0) + q
    return law1, law2


def j_h_tail(ik: IndexSetIK, h: int, reps: int, rng) -> float:
    """Monte-Carlo estimate of ``P(M^(h) not in J_h)``."""
    m = sample_multinomial(ik, h, rng, size=reps)
    lo, hi = j_h_bounds(ik, h)
    n1, n2 = n1_n2(m)
    inside = (n1 >= lo) & (n1 <= hi) & (n2 >= lo) & (n2 <= hi)
    return float(1.0 - inside.mean())


@dataclass
class GaussianMomentCheck:
    h: int
    variance: np.ndarray
    target_variance: np.ndarray
    fourth_ratio: np.ndarray  # E X^4 / (3 Var^2)
    tol: float

    @property
    def rel_error(self) -> np.ndarray:
        nz = self.target_variance > 0
        out = np.zeros_like(self.variance)
        out[nz] = np.abs(self.variance[nz] / self.target_variance[nz] - 1)
        return out

    @property
    def passed(self) -> bool:
        nz = self.target_variance > 0
        return bool(
            np.all(self.rel_error <= self.tol)
            and np.all(np.abs(self.fourth_ratio[nz] - 1) <= self.tol)
            and np.all(self.variance[~nz] == 0)
        )


def gaussian_moment_check(
    ik: IndexSetIK, n: int, reps: int, rng, tol: float = 0.03
) -> GaussianMomentCheck:
    """Second and fourth moments of ``G(n, floor(sqrt n))`` against ``lambda (p - p^2)``."""
    h = math.isqrt(n)
    lam = h / math.sqrt(n)
    g = g_statistic(ik, sample_multinomial(ik, h, rng, size=reps), n)
    var = (g**2).mean(axis=0)
    target = lam * (ik.p - ik.p**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        fourth = np.where(var > 0, (g**4).mean(axis=0) / (3 * var**2), 1.0)
    return GaussianMomentCheck(h, var, target, fourth, tol)


@dataclass
class MomentBoundScan:
    power: float
    h: list[int]
    moments: list[float]
    ratios: list[float]  # E||G||^beta / (h/sqrt n)^{beta/2}
    constant: float

    @property
    def passed(self) -> bool:
        return all(r <= self.constant for r in self.ratios)


def moment_bound_scan(
    ik: IndexSetIK, n: int, power: float, h_list, reps: int, rng, margin: float = 1.25
) -> MomentBoundScan:
    """Scan ``E ||G(n,h)||_1^beta`` against ``c (h/sqrt n)^{beta/2}``.

    The constant is fitted once, at the ``h`` closest to ``sqrt n``, inflated by ``margin``.
    """
    gen = as_generator(rng)
    moments, ratios = [], []
    for h in h_list:
        g = g_statistic(ik, sample_multinomial(ik, int(h), gen, size=reps), n)
        mom = float((np.abs(g).sum(axis=1) ** power).mean())
        moments.append(mom)
        ratios.append(mom / (h / math.sqrt(n)) ** (power / 2))
    ref = int(np.argmin([abs(h - math.sqrt(n)) for h in h_list]))
    return MomentBoundScan(power, list(h_list), moments, ratios, margin * ratios[ref])
