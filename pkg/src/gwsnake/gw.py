"""Offspring laws, Galton-Watson sampling and the associated left-continuous walk.

Size-conditioned trees are produced with the cycle lemma: ``n + 1`` i.i.d.
child counts are drawn conditionally on summing to ``n``, then rotated to
start right after the first minimum of the walk ``sum (X_i - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Sequence

import numpy as np

from .trees import PlanarTree, tree_from_degrees


class UnsupportedSize(ValueError):
    pass


class RejectionBudgetExceeded(RuntimeError):
    pass


class InvalidArgs(ValueError):
    pass


def parse_number(text: str):
    text = text.strip()
    if "/" in text:
        return Fraction(text)
    return float(text)


@dataclass(frozen=True)
class OffspringDistribution:
    """A law ``(mu_0, ..., mu_K)`` on the integers; Fractions enable exact arithmetic."""

    probs: tuple

    def __post_init__(self):
        probs = tuple(self.probs)
        while len(probs) > 1 and probs[-1] == 0:
            probs = probs[:-1]
        object.__setattr__(self, "probs", probs)
        if not probs or any(p < 0 for p in probs):
            raise ValueError("probabilities must be nonnegative")
        total = sum(probs)
        if self.exact:
            if total != 1:
                raise ValueError(f"probabilities sum to {total}, not 1")
        elif abs(float(total) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {float(total)!r}, not 1")

    @classmethod
    def parse(cls, text: str) -> "OffspringDistribution":
        """``"1/2,0,1/2"`` (exact) or ``"0.5,0,0.5"`` (float)."""
        vals = [parse_number(x) for x in text.split(",") if x.strip()]
        if any(isinstance(v, Fraction) for v in vals) and all(
            isinstance(v, Fraction) or float(v).is_integer() for v in vals
        ):
            vals = [Fraction(v) if not isinstance(v, Fraction) else v for v in vals]
        return cls(tuple(vals))

    @property
    def exact(self) -> bool:
        return all(isinstance(p, (Fraction, int)) for p in self.probs)

    @property
    def K(self) -> int:
        return len(self.probs) - 1

    @property
    def support(self) -> list[int]:
        return [k for k, p in enumerate(self.probs) if p > 0]

    @property
    def mean(self):
        return sum(k * p for k, p in enumerate(self.probs))

    @property
    def variance(self):
        m = self.mean
        return sum(k * k * p for k, p in enumerate(self.probs)) - m * m

    @property
    def span(self) -> int:
        ks = [k for k in self.support if k >= 1]
        return reduce(math.gcd, ks) if ks else 0

    @property
    def float_probs(self) -> np.ndarray:
        p = np.array([float(x) for x in self.probs])
        return p / p.sum()

    def __str__(self):
        return ",".join(str(p) for p in self.probs)


@dataclass(frozen=True)
class H1Report:
    nondegenerate: bool
    critical: bool
    bounded: bool
    variance: object
    span: int
    K: int

    @property
    def ok(self) -> bool:
        return self.nondegenerate and self.critical and self.bounded


def validate_h1(mu: OffspringDistribution) -> H1Report:
    p = mu.probs
    p0 = p[0]
    p1 = p[1] if len(p) > 1 else 0
    if mu.exact:
        critical = mu.mean == 1
        nondeg = p0 + p1 != 1
    else:
        critical = abs(float(mu.mean) - 1.0) <= 1e-9
        nondeg = abs(float(p0 + p1) - 1.0) > 1e-12
    # finite probability vectors always have bounded support
    return H1Report(nondeg, critical, True, mu.variance, mu.span, mu.K)


@dataclass(frozen=True)
class RandomStream:
    """A reproducible stream: one PCG64 generator per ``(seed, index)`` pair."""

    seed: int
    index: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.index,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RandomStream":
        return RandomStream(self.seed, index)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RandomStream):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    return rng


@dataclass(frozen=True)
class Overflow:
    """Returned by :func:`sample_gw` when the node budget is exhausted."""

    cap: int


def sample_gw(mu: OffspringDistribution, cap: int, rng) -> PlanarTree | Overflow:
    """Unconditioned GW tree in DFS order, or ``Overflow`` past ``cap`` nodes."""
    gen = as_generator(rng)
    probs = mu.float_probs
    degrees: list[int] = []
    pending = 1
    batch = 16
    while True:
        draws = gen.choice(len(probs), size=batch, p=probs)
        for c in draws:
            if len(degrees) >= cap:
                return Overflow(cap)
            degrees.append(int(c))
            pending += int(c) - 1
            if pending == 0:
                return tree_from_degrees(degrees)
        batch = min(2 * batch, 1 << 16)


def cyclic_lemma_rotation(seq: Sequence[int]) -> np.ndarray:
    """Rotate a sequence with ``sum (x - 1) = -1`` into its unique tree encoding.

    The result starts right after the first index attaining the minimum of the
    partial sums of ``x_i - 1``.
    """
    x = np.asarray(seq, dtype=np.int64)
    s = np.cumsum(x - 1)
    if s[-1] != -1:
        raise ValueError("sequence does not sum to len - 1")
    k = int(np.argmin(s)) + 1
    return np.roll(x, -k)


@lru_cache(maxsize=256)
def _representable(support: tuple, n: int) -> bool:
    steps = [k for k in support if k >= 1]
    if n == 0:
        return True
    if not steps:
        return False
    d = reduce(math.gcd, steps)
    if n % d:
        return False
    bound = max(steps) ** 2
    if n > bound:
        return True
    ok = [False] * (n + 1)
    ok[0] = True
    for t in range(1, n + 1):
        ok[t] = any(t >= k and ok[t - k] for k in steps)
    return ok[n]


def size_supported(mu: OffspringDistribution, n: int) -> bool:
    """Whether ``P(|T| = n + 1) > 0``."""
    if n < 0 or mu.probs[0] == 0:
        return False
    return _representable(tuple(mu.support), n)


def sample_conditioned(
    mu: OffspringDistribution, n: int, rng, max_attempts: int = 10**7
) -> PlanarTree:
    """A tree with exactly ``n + 1`` nodes, distributed as the GW tree given its size.

    The i.i.d. sequence conditioned on its sum is drawn through its value counts
    (a multinomial vector, rejected until ``sum k N_k = n``) followed by a
    uniform shuffle; this is the same law as rejecting whole sequences.
    """
    if not size_supported(mu, n):
        raise UnsupportedSize(f"no tree with {n + 1} nodes under mu = {mu}")
    gen = as_generator(rng)
    probs = mu.float_probs
    ks = np.arange(len(probs))
    for _ in range(max_attempts):
        counts = gen.multinomial(n + 1, probs)
        if int(counts @ ks) == n:
            break
    else:
        raise RejectionBudgetExceeded(f"no acceptance after {max_attempts} attempts")
    seq = gen.permutation(np.repeat(ks, counts))
    return tree_from_degrees(cyclic_lemma_rotation(seq))


def _common_denominator(mu: OffspringDistribution) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), (Fraction(p).denominator for p in mu.probs), 1)


@lru_cache(maxsize=128)
def _walk_law_exact(mu: OffspringDistribution, n: int) -> tuple[list[int], int]:
    # integer polynomial power: (sum a_k x^k)^n / q^n, exponent k - 1 per step
    q = _common_denominator(mu)
    base = [int(p * q) for p in mu.probs]
    result = [1]
    power = base
    e = n
    while e:
        if e & 1:
            result = _poly_mul(result, power)
        e >>= 1
        if e:
            power = _poly_mul(power, power)
    return result, q**n


def _poly_mul(a: list[int], b: list[int]) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


@lru_cache(maxsize=128)
def _walk_law_float(mu: OffspringDistribution, n: int) -> np.ndarray:
    base = mu.float_probs
    result = np.ones(1)
    power = base
    e = n
    while e:
        if e & 1:
            result = np.convolve(result, power)
        e >>= 1
        if e:
            power = np.convolve(power, power)
    result.setflags(write=False)
    return result


def walk_law(mu: OffspringDistribution, n: int) -> np.ndarray:
    """Float array ``P(W_n = l)`` for ``l = -n, ..., n(K-1)`` (index ``l + n``)."""
    if mu.exact:
        num, den = _walk_law_exact(mu, n)
        return np.array([Fraction(x, den) for x in num], dtype=float)
    return _walk_law_float(mu, n)


def walk_pmf(mu: OffspringDistribution, n: int, l: int):
    """``P(W_n = l)`` for the walk with increments ``xi - 1``, ``xi ~ mu``.

    Exact (a Fraction) when ``mu`` is rational.
    """
    if n < 0:
        raise InvalidArgs("n must be nonnegative")
    if l < -n or l > n * mu.K - n:
        return Fraction(0) if mu.exact else 0.0
    if mu.exact:
        num, den = _walk_law_exact(mu, n)
        return Fraction(num[l + n], den)
    return float(_walk_law_float(mu, n)[l + n])


def forest_size_pmf(mu: OffspringDistribution, k: int, n: int):
    """``P(|f_k| = n) = (k/n) P(W_n = -k)`` for a forest of ``k`` i.i.d. GW trees."""
    if k < 1 or n < k:
        raise InvalidArgs(f"need 1 <= k <= n, got k={k}, n={n}")
    w = walk_pmf(mu, n, -k)
    return Fraction(k, n) * w if mu.exact else k / n * w


def tree_size_pmf(mu: OffspringDistribution, n: int):
    """``P(|T| = n)``."""
    return forest_size_pmf(mu, 1, n)


@dataclass
class SizeAsymptotics:
    n: list[int]
    scaled: list[float]  # n^{3/2} P(|T| = n)
    constant_sqrt_sigma: float  # d / sqrt(2 pi sigma)
    constant_sigma: float  # d / (sigma sqrt(2 pi))

    @property
    def estimate(self) -> float:
        return self.scaled[-1]

    def closest_reading(self) -> str:
        e = self.estimate
        if abs(e - self.constant_sigma) <= abs(e - self.constant_sqrt_sigma):
            return "d/(sigma*sqrt(2*pi))"
        return "d/sqrt(2*pi*sigma)"


def tree_size_asymptotics(mu: OffspringDistribution, n_list: Sequence[int]) -> SizeAsymptotics:
    out = []
    for n in n_list:
        if not size_supported(mu, n - 1):
            raise UnsupportedSize(f"P(|T| = {n}) = 0")
        out.append(n**1.5 * float(_walk_law_float(mu, n)[n - 1]) / n)
    d = mu.span
    sigma = math.sqrt(float(mu.variance))
    return SizeAsymptotics(
        list(n_list), out, d / math.sqrt(2 * math.pi * sigma), d / (sigma * math.sqrt(2 * math.pi))
    )


def cllt_deviation(mu: OffspringDistribution, n: int) -> float:
    """``sup_l |(sqrt(n)/d) P(W_n = l) - phi_sigma(l / sqrt(n))|`` over the lattice."""
    law = _walk_law_float(mu, n)
    d = mu.span
    sigma2 = float(mu.variance)
    ls = np.arange(-n, -n + len(law))
    on_lattice = (ls + n) % d == 0
    dens = np.exp(-(ls**2) / (2 * sigma2 * n)) / math.sqrt(2 * math.pi * sigma2)
    return float(np.max(np.abs(math.sqrt(n) / d * law - dens)[on_lattice]))


def max_x_walk_pmf(mu: OffspringDistribution, n_max: int) -> tuple[float, np.ndarray]:
    """``sup_{n <= n_max} sup_{x >= 0} x P(W_n = x)`` and the per-n maxima."""
    base = mu.float_probs
    law = np.ones(1)
    per_n = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        law = np.convolve(law, base)
        xs = np.arange(-n, -n + len(law))
        pos = xs >= 0
        if pos.any():
            per_n[n] = float(np.max(xs[pos] * law[pos]))
    return float(per_n.max()), per_n
