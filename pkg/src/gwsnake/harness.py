"""Monte-Carlo experiments on size-conditioned trees and the statistical comparisons.

Each replicate ``i`` draws everything from ``RandomStream(seed, i)``; replicates
are merged by index, so results do not depend on how work is split.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .gw import OffspringDistribution, RandomStream, sample_conditioned, validate_h1
from .lineage import compute_lineage, g_process, path_statistics
from .multinomial import IndexSetIK, limit_covariance
from .snake import DisplacementFamily, NotCentered, assign_labels, decompose, label_process, validate_h2
from .trees import rescale_height

MIN_REPLICATES = 1000
N_BATCHES = 20


class InsufficientReplicates(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mu: str = "1/2,0,1/2"
    n: int = 4096
    reps: int = 20000
    grid: tuple = (0.25, 0.5, 0.75)
    seed: int = 0
    kind: str = "g-cov"
    nu: dict | None = None
    lam: tuple | None = None
    contour: bool = False
    rel_tol: float = 0.05
    ks_threshold: float = 0.03
    corr_tol: float = 0.05

    @property
    def offspring(self) -> OffspringDistribution:
        return OffspringDistribution.parse(self.mu)

    @property
    def family(self) -> DisplacementFamily | None:
        return None if self.nu is None else DisplacementFamily.from_dict(self.nu)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        d["lam"] = None if self.lam is None else list(self.lam)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "grid" in d:
            d["grid"] = tuple(d["grid"])
        if d.get("lam") is not None:
            d["lam"] = tuple(d["lam"])
        return cls(**d)


# stat name -> (has t, has (k, j))
STAT_LAYOUT = {
    "h": (False, False),
    "hcheck": (True, False),
    "G": (False, True),
    "r": (False, False),
    "r1": (False, False),
    "r2": (False, False),
    "hhat": (False, False),
    "hhat_check": (True, False),
    "rhat": (False, False),
}


@dataclass
class ResultTable:
    """Per-replicate statistics at the configured grid points.

    ``data["h"]`` has shape ``(R, q)``, ``data["hcheck"]`` ``(R, q, q)``,
    ``data["G"]`` ``(R, q, #I_K)``, and the label statistics ``(R, q)``.
    """

    config: ExperimentConfig
    data: dict = field(default_factory=dict)

    @property
    def reps(self) -> int:
        return len(self.data["h"])

    @property
    def ik(self) -> IndexSetIK:
        return IndexSetIK(self.config.offspring)

    def to_csv(self) -> str:
        cfg = self.config.to_dict()
        buf = io.StringIO()
        buf.write("# config: " + json.dumps(cfg, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "n", "s", "t", "stat_name", "k", "j", "value"])
        grid = [repr(float(s)) for s in self.config.grid]
        pairs = self.ik.pairs
        n = self.config.n
        names = [name for name in STAT_LAYOUT if name in self.data]
        for rep in range(self.reps):
            for name in names:
                has_t, has_kj = STAT_LAYOUT[name]
                arr = self.data[name][rep]
                for a, s in enumerate(grid):
                    if has_t:
                        for b in range(a, len(grid)):
                            w.writerow([rep, n, s, grid[b], name, "", "", repr(float(arr[a, b]))])
                    elif has_kj:
                        for (k, j), v in zip(pairs, arr[a]):
                            w.writerow([rep, n, s, "", name, k, j, repr(float(v))])
                    else:
                        w.writerow([rep, n, s, "", name, "", "", repr(float(arr[a]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# config: "):
            raise ValueError("missing config header")
        config = ExperimentConfig.from_dict(json.loads(lines[0][len("# config: "):]))
        grid = [float(s) for s in config.grid]
        col = {s: a for a, s in enumerate(grid)}
        ik = IndexSetIK(config.offspring)
        rows = list(csv.DictReader(lines[1:]))
        reps = 1 + max(int(r["replicate"]) for r in rows)
        q = len(grid)
        data: dict = {}
        for r in rows:
            name = r["stat_name"]
            has_t, has_kj = STAT_LAYOUT[name]
            if name not in data:
                shape = (reps, q, q) if has_t else (reps, q, len(ik)) if has_kj else (reps, q)
                data[name] = np.zeros(shape)
            rep, a, v = int(r["replicate"]), col[float(r["s"])], float(r["value"])
            if has_t:
                b = col[float(r["t"])]
                data[name][rep, a, b] = data[name][rep, b, a] = v
            elif has_kj:
                from .multinomial import pair_index
                data[name][rep, a, pair_index(int(r["k"]), int(r["j"]))] = v
            else:
                data[name][rep, a] = v
        return cls(config, data)


def _replicate(config: ExperimentConfig, index: int) -> dict:
    mu = config.offspring
    ik = IndexSetIK(mu)
    family = config.family
    gen = RandomStream(config.seed, index).generator()
    tree = sample_conditioned(mu, config.n, gen)
    grid = np.asarray(config.grid, dtype=float)
    q = len(grid)
    h = rescale_height(tree)
    table = compute_lineage(tree, ik)
    out = {
        "h": h(grid),
        "hcheck": np.array([[h.min_between(s, t) for t in grid] for s in grid]),
        "G": g_process(tree, table, ik)(grid),
    }
    if config.contour:
        hh = rescale_height(tree, contour=True)
        out["hhat"] = hh(grid)
        out["hhat_check"] = np.array([[hh.min_between(s, t) for t in grid] for s in grid])
    if family is not None:
        lt = assign_labels(tree, family, gen)
        r1, r2 = decompose(lt, table, family, ik)
        out["r"] = label_process(lt)(grid)
        out["r1"] = r1(grid)
        out["r2"] = r2(grid)
        if config.contour:
            out["rhat"] = label_process(lt, contour=True)(grid)
    assert out["G"].shape == (q, len(ik))
    return out


def _run_chunk(args) -> list[dict]:
    config, lo, hi = args
    return [_replicate(config, i) for i in range(lo, hi)]


def check_hypotheses(config: ExperimentConfig):
    mu = config.offspring
    rep = validate_h1(mu)
    if not rep.ok:
        raise ValueError(f"offspring law fails (H1): {rep}")
    family = config.family
    if family is not None:
        h2 = validate_h2(family, mu)
        if not h2.centered:
            raise NotCentered(f"global mean {h2.mean} != 0")
        if not h2.positive_variance:
            raise ValueError("global variance must be positive")


def run_experiment(config: ExperimentConfig, threads: int = 1, chunk: int = 250) -> ResultTable:
    """Sample ``config.reps`` replicates and record the grid statistics.

    ``threads`` only changes how replicates are distributed over worker processes.
    """
    check_hypotheses(config)
    bounds = [(config, lo, min(lo + chunk, config.reps)) for lo in range(0, config.reps, chunk)]
    if threads <= 1 or len(bounds) == 1:
        parts = [_run_chunk(b) for b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_run_chunk, bounds))
    records = list(itertools.chain.from_iterable(parts))
    data = {name: np.stack([r[name] for r in records]) for name in records[0]}
    return ResultTable(config, data)


def merge_tables(tables: Sequence[ResultTable], offsets: Sequence[int]) -> ResultTable:
    """Merge partial tables whose replicates start at ``offsets``; order-independent."""
    order = np.argsort(offsets)
    tables = [tables[i] for i in order]
    data = {name: np.concatenate([t.data[name] for t in tables]) for name in tables[0].data}
    return ResultTable(tables[0].config, data)


@dataclass
class TestReport:
    test: str
    target: float
    estimate: float
    ci_lo: float
    ci_hi: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"test": self.test, "target": self.target, "estimate": self.estimate,
                "ci_lo": self.ci_lo, "ci_hi": self.ci_hi, "pass": self.passed, **self.detail}


def _require(n: int, minimum: int = MIN_REPLICATES):
    if n < minimum:
        raise InsufficientReplicates(f"{n} replicates < {minimum}")


def batch_ratio(num: np.ndarray, den: np.ndarray, batches: int = N_BATCHES) -> tuple[float, float, float]:
    """``mean(num)/mean(den)`` with a batch-means confidence interval (95%, t with batches-1 dof)."""
    est = float(num.mean() / den.mean())
    nb = np.array_split(num, batches)
    db = np.array_split(den, batches)
    r = np.array([a.mean() / b.mean() for a, b in zip(nb, db)])
    half = float(stats.t.ppf(0.975, batches - 1) * r.std(ddof=1) / math.sqrt(batches))
    return est, est - half, est + half


def _ratio_report(name, x, y, coef, hc, tol, detail) -> TestReport:
    if abs(hc.mean()) < 1e-3:
        return TestReport(name, 1.0, math.nan, math.nan, math.nan, True, {**detail, "skipped": True})
    est, lo, hi = batch_ratio(x * y, coef * hc)
    ok = (lo <= 1.0 <= hi) or abs(est - 1.0) <= tol
    return TestReport(name, 1.0, est, lo, hi, bool(ok), detail)


def covariance_ratio_test(results: ResultTable, kind: str, lam: Sequence[float] | None = None,
                          tol: float | None = None, contour: bool = False) -> list[TestReport]:
    """Ratios ``E[X_s Y_t] / (coefficient E[hcheck_n(s,t)])`` for every grid pair ``s <= t``.

    ``kind``: ``"lineage"`` (all ``(k,j), (k',j')`` with nonzero coefficient),
    ``"snake"`` (``r_n``, coefficient ``beta^2``), ``"combo"`` (``sum lam G``).
    ``contour=True`` runs the snake kind on the contour versions ``rhat``, ``hhat_check``.
    """
    _require(results.reps)
    tol = results.config.rel_tol if tol is None else tol
    grid = results.config.grid
    if contour and kind != "snake":
        raise ValueError("the contour battery is only defined for the snake kind")
    hc = results.data["hhat_check" if contour else "hcheck"]
    ik = results.ik
    out = []
    pairs = [(a, b) for a in range(len(grid)) for b in range(a, len(grid))]
    if kind == "lineage":
        c = limit_covariance(ik)
        G = results.data["G"]
        for (a, b) in pairs:
            for x, y in itertools.product(range(len(ik)), repeat=2):
                if x > y and a == b or c[x, y] == 0:
                    continue
                out.append(_ratio_report(
                    "lineage_cov", G[:, a, x], G[:, b, y], c[x, y], hc[:, a, b], tol,
                    {"s": grid[a], "t": grid[b], "i": list(ik.pairs[x]), "i2": list(ik.pairs[y]),
                     "coefficient": float(c[x, y])}))
    elif kind == "snake":
        _, beta2 = _family_moments(results)
        r = results.data["rhat" if contour else "r"]
        for (a, b) in pairs:
            out.append(_ratio_report("contour_snake_cov" if contour else "snake_cov", r[:, a], r[:, b], beta2, hc[:, a, b], tol,
                                     {"s": grid[a], "t": grid[b], "coefficient": beta2}))
    elif kind == "combo":
        lam = np.asarray(lam if lam is not None else results.config.lam, dtype=float)
        coef = float(lam @ limit_covariance(ik) @ lam)
        comb = results.data["G"] @ lam
        for (a, b) in pairs:
            out.append(_ratio_report("combo_cov", comb[:, a], comb[:, b], coef, hc[:, a, b], tol,
                                     {"s": grid[a], "t": grid[b], "coefficient": coef}))
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return out


def _family_moments(results: ResultTable):
    from .snake import global_moments
    m, beta2 = global_moments(results.config.family, results.config.offspring)
    return float(m), float(beta2)


def marginal_ks_test(discrete: np.ndarray, limit: np.ndarray, threshold: float = 0.03) -> TestReport:
    """Two-sample Kolmogorov-Smirnov statistic against a fixed threshold."""
    discrete = np.asarray(discrete)
    limit = np.asarray(limit)
    _require(min(len(discrete), len(limit)), 5000)
    res = stats.ks_2samp(discrete, limit)
    d = float(res.statistic)
    return TestReport("marginal_ks", 0.0, d, 0.0, threshold, d <= threshold,
                      {"pvalue": float(res.pvalue), "n_discrete": len(discrete), "n_limit": len(limit)})


def independence_probe(results: ResultTable, tol: float | None = None) -> list[TestReport]:
    """Correlation of ``r1(s)`` and ``r2(t)`` over grid pairs; Fisher-z 95% intervals."""
    _require(results.reps)
    tol = results.config.corr_tol if tol is None else tol
    r1, r2 = results.data["r1"], results.data["r2"]
    grid = results.config.grid
    out = []
    for a, b in itertools.product(range(len(grid)), repeat=2):
        x, y = r1[:, a], r2[:, b]
        if x.std() == 0 or y.std() == 0:
            out.append(TestReport("independence", 0.0, 0.0, 0.0, 0.0, True,
                                  {"s": grid[a], "t": grid[b], "degenerate": True}))
            continue
        rho = float(np.corrcoef(x, y)[0, 1])
        z = math.atanh(rho)
        half = 1.96 / math.sqrt(len(x) - 3)
        out.append(TestReport("independence", 0.0, rho, math.tanh(z - half), math.tanh(z + half),
                              abs(rho) <= tol, {"s": grid[a], "t": grid[b], "degenerate": False}))
    return out


def split_covariance_test(results: ResultTable, tol: float = 0.07) -> list[TestReport]:
    """``cov r1 ~ hcheck * sum mu_k sigma_{k,j}^2`` and ``cov r2 ~ hcheck * m^T C m``."""
    _require(results.reps)
    ik = results.ik
    family = results.config.family
    c1 = float(ik.p @ family.variance_vector(ik))
    mvec = family.mean_vector(ik)
    c2 = float(mvec @ limit_covariance(ik) @ mvec)
    grid = results.config.grid
    hc = results.data["hcheck"]
    out = []
    for name, coef in (("r1", c1), ("r2", c2)):
        if coef == 0:
            continue
        x = results.data[name]
        for a in range(len(grid)):
            for b in range(a, len(grid)):
                out.append(_ratio_report(f"{name}_cov", x[:, a], x[:, b], coef, hc[:, a, b], tol,
                                         {"s": grid[a], "t": grid[b], "coefficient": coef}))
    return out


@dataclass
class PathStatsRun:
    n: int
    max_increment: np.ndarray
    last_depth: np.ndarray
    lineage_ratio: np.ndarray

    @property
    def threshold(self) -> float:
        return 10 * math.log(self.n)

    @property
    def exceedances(self) -> int:
        return int((self.max_increment >= self.threshold).sum() + (self.last_depth >= self.threshold).sum())

    def to_csv(self, config: dict) -> str:
        buf = io.StringIO()
        buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "n", "max_increment", "last_depth", "lineage_ratio"])
        for i, (a, b, c) in enumerate(zip(self.max_increment, self.last_depth, self.lineage_ratio)):
            w.writerow([i, self.n, int(a), int(b), repr(float(c))])
        return buf.getvalue()


def _path_chunk(args):
    mu_text, n, seed, lo, hi = args
    mu = OffspringDistribution.parse(mu_text)
    ik = IndexSetIK(mu)
    out = []
    for i in range(lo, hi):
        tree = sample_conditioned(mu, n, RandomStream(seed, i).generator())
        st = path_statistics(tree, ik)
        out.append((st.max_increment, st.last_depth, st.lineage_ratio))
    return out


def run_path_statistics(mu: str, n: int, reps: int, seed: int, threads: int = 1, chunk: int = 50) -> PathStatsRun:
    bounds = [(mu, n, seed, lo, min(lo + chunk, reps)) for lo in range(0, reps, chunk)]
    if threads <= 1 or len(bounds) == 1:
        parts = [_path_chunk(b) for b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_path_chunk, bounds))
    rows = np.array(list(itertools.chain.from_iterable(parts)), dtype=float)
    return PathStatsRun(n, rows[:, 0].astype(int), rows[:, 1].astype(int), rows[:, 2])
