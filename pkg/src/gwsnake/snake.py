"""Displacement families, labelled trees and the label process of the discrete snake."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .gw import OffspringDistribution, as_generator, parse_number
from .lineage import LineageTable
from .multinomial import IndexSetIK, pair_index
from .trees import GridPath, PlanarTree, contour_walk


class MissingArity(KeyError):
    pass


class NotCentered(ValueError):
    pass


@dataclass(frozen=True)
class AtomLaw:
    """Finite law on ``R^k``: rows of ``values`` with probabilities ``probs``."""

    values: tuple  # tuple of k-tuples
    probs: tuple

    def __post_init__(self):
        k = {len(v) for v in self.values}
        if len(k) != 1:
            raise ValueError("all atoms must have the same dimension")
        total = sum(self.probs)
        exact = all(isinstance(p, (int, Fraction)) for p in self.probs)
        if (total != 1) if exact else abs(float(total) - 1) > 1e-12:
            raise ValueError(f"atom probabilities sum to {total}")

    @property
    def arity(self) -> int:
        return len(self.values[0])

    def means(self) -> list:
        return [sum(p * v[j] for v, p in zip(self.values, self.probs)) for j in range(self.arity)]

    def second_moments(self) -> list:
        return [sum(p * v[j] * v[j] for v, p in zip(self.values, self.probs)) for j in range(self.arity)]

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        vals = np.array(self.values, dtype=float)
        if len(self.values) == 1:
            return np.repeat(vals, size, axis=0)
        p = np.array([float(x) for x in self.probs])
        return vals[gen.choice(len(p), size=size, p=p / p.sum())]

    def to_dict(self) -> dict:
        return {"atoms": [{"values": [_num_out(x) for x in v], "prob": _num_out(p)}
                          for v, p in zip(self.values, self.probs)]}


@dataclass(frozen=True)
class GaussianLaw:
    """Independent Gaussian coordinates; moments are declared, not verified."""

    means_: tuple
    sds: tuple

    @property
    def arity(self) -> int:
        return len(self.means_)

    def means(self) -> list:
        return list(self.means_)

    def second_moments(self) -> list:
        return [m * m + s * s for m, s in zip(self.means_, self.sds)]

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return gen.normal(np.array(self.means_, float), np.array(self.sds, float), size=(size, self.arity))

    def to_dict(self) -> dict:
        return {"gaussian": {"means": list(self.means_), "sds": list(self.sds)}}


def _num_out(x):
    return str(x) if isinstance(x, Fraction) else x


def _num_in(x):
    if isinstance(x, str):
        return parse_number(x)
    return x


@dataclass(frozen=True)
class DisplacementFamily:
    laws: Mapping[int, AtomLaw | GaussianLaw] = field(default_factory=dict)

    def __post_init__(self):
        for k, law in self.laws.items():
            if law.arity != k:
                raise ValueError(f"nu_{k} must live on R^{k}, got dimension {law.arity}")

    def law(self, k: int):
        try:
            return self.laws[k]
        except KeyError:
            raise MissingArity(f"no displacement law for {k} children") from None

    def mean_vector(self, ik: IndexSetIK) -> np.ndarray:
        """``m_{k,j}`` aligned with ``ik`` (zero where ``mu_k = 0`` and no law is given)."""
        out = np.zeros(len(ik))
        for k in range(1, ik.K + 1):
            if k in self.laws:
                for j, m in enumerate(self.laws[k].means(), start=1):
                    out[pair_index(k, j)] = float(m)
            elif ik.mu.probs[k]:
                raise MissingArity(f"no displacement law for {k} children")
        return out

    def variance_vector(self, ik: IndexSetIK) -> np.ndarray:
        out = np.zeros(len(ik))
        for k, law in self.laws.items():
            if k <= ik.K:
                for j, (m, s2) in enumerate(zip(law.means(), law.second_moments()), start=1):
                    out[pair_index(k, j)] = float(s2 - m * m)
        return out

    @classmethod
    def from_dict(cls, obj: Mapping) -> "DisplacementFamily":
        laws = {}
        for key, spec in obj.items():
            k = int(key)
            if "atoms" in spec:
                atoms = spec["atoms"]
                laws[k] = AtomLaw(
                    tuple(tuple(_num_in(x) for x in a["values"]) for a in atoms),
                    tuple(_num_in(a["prob"]) for a in atoms),
                )
            elif "gaussian" in spec:
                g = spec["gaussian"]
                laws[k] = GaussianLaw(tuple(float(x) for x in g["means"]), tuple(float(x) for x in g["sds"]))
            else:
                raise ValueError(f"unknown law description for k={k}")
        return cls(laws)

    @classmethod
    def from_json(cls, text: str) -> "DisplacementFamily":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps({str(k): law.to_dict() for k, law in sorted(self.laws.items())})

    @classmethod
    def deterministic(cls, **vectors) -> "DisplacementFamily":
        """``deterministic(k2=(1, -1))`` gives ``nu_2 = delta_{(1,-1)}``."""
        return cls({int(key[1:]): AtomLaw((tuple(v),), (1,)) for key, v in vectors.items()})


def global_moments(family: DisplacementFamily, mu: OffspringDistribution):
    """Global mean ``m = sum mu_k m_{k,j}`` and variance ``beta^2 = sum mu_k E Y_{k,j}^2``."""
    m = 0
    beta2 = 0
    for k in range(1, mu.K + 1):
        if not mu.probs[k]:
            continue
        law = family.law(k)
        m += mu.probs[k] * sum(law.means())
        beta2 += mu.probs[k] * sum(law.second_moments())
    return m, beta2


@dataclass(frozen=True)
class H2Report:
    mean: object
    beta2: object
    centered: bool
    positive_variance: bool
    moments_verified: bool  # p > 4 moments checked (finite atoms) rather than declared

    @property
    def ok(self) -> bool:
        return self.centered and self.positive_variance


def validate_h2(family: DisplacementFamily, mu: OffspringDistribution) -> H2Report:
    m, beta2 = global_moments(family, mu)
    if isinstance(m, (int, Fraction)):
        centered = m == 0
    else:
        centered = abs(float(m)) <= 1e-9
    used = [family.law(k) for k in range(1, mu.K + 1) if mu.probs[k]]
    verified = all(isinstance(law, AtomLaw) for law in used)
    return H2Report(m, beta2, centered, 0 < float(beta2) < math.inf, verified)


@dataclass(frozen=True)
class LabeledTree:
    tree: PlanarTree
    labels: np.ndarray
    displacements: np.ndarray  # label(u) - label(parent(u)); 0 at the root

    def __post_init__(self):
        self.labels.setflags(write=False)
        self.displacements.setflags(write=False)


def _accumulate(tree: PlanarTree, increments: np.ndarray) -> np.ndarray:
    out = np.zeros(tree.size)
    for nodes in tree.levels():
        out[nodes] = out[tree.parent[nodes]] + increments[nodes]
    return out


def assign_labels(tree: PlanarTree, family: DisplacementFamily, rng) -> LabeledTree:
    """Draw one ``nu_{c_u}`` vector per internal node (ascending ``k``, DFS order within ``k``)."""
    gen = as_generator(rng)
    disp = np.zeros(tree.size)
    if tree.size > 1:
        deg = tree.degrees
        kids = np.arange(1, tree.size)
        parent_deg = deg[tree.parent[1:]]
        row = np.empty(tree.size, dtype=np.int64)
        for k in np.unique(deg[deg > 0]):
            law = family.law(int(k))
            nodes = np.flatnonzero(deg == k)
            row[nodes] = np.arange(len(nodes))
            draws = law.sample(gen, len(nodes))
            sel = kids[parent_deg == k]
            disp[sel] = draws[row[tree.parent[sel]], tree.rank[sel] - 1]
    return LabeledTree(tree, _accumulate(tree, disp), disp)


def label_process(lt: LabeledTree, contour: bool = False) -> GridPath:
    """``r_n(s) = R_{ns} / n^{1/4}`` (or the contour version on ``2n`` steps)."""
    n = lt.tree.edges
    scale = 1.0 / n**0.25 if n else 1.0
    if contour:
        return GridPath(lt.labels[contour_walk(lt.tree)], scale)
    return GridPath(lt.labels, scale)


def decompose(
    lt: LabeledTree, table: LineageTable, family: DisplacementFamily, ik: IndexSetIK
) -> tuple[GridPath, GridPath]:
    """Split ``r_n`` into the centered-displacement part and ``<G^(n), m>``.

    ``r1`` accumulates ``Y - m_{k,j}`` along ancestral lines from the recorded
    draws; ``r2`` is a function of the tree only.
    """
    m, _ = global_moments(family, ik.mu)
    if isinstance(m, (int, Fraction)) and m != 0 or abs(float(m)) > 1e-9:
        raise NotCentered(f"global mean {m} != 0")
    tree = lt.tree
    mvec = family.mean_vector(ik)
    centred = np.array(lt.displacements)
    if tree.size > 1:
        k = tree.degrees[tree.parent[1:]]
        centred[1:] -= mvec[k * (k - 1) // 2 + tree.rank[1:] - 1]
    r1 = _accumulate(tree, centred)
    g = table.counts - np.outer(table.depth, ik.p)
    r2 = g @ mvec
    scale = 1.0 / tree.edges**0.25 if tree.edges else 1.0
    return GridPath(r1, scale), GridPath(r2, scale)
