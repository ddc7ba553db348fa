"""Acceptance suite: one or more tests per numbered criterion.

Each test carries ``@pytest.mark.criterion(n)``; the terminal summary prints a
single pass/fail line per criterion. Tolerances are the stated ones; the Monte
Carlo criteria use a fixed seed.
"""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from gwsnake.cli import main
from gwsnake.exact import exact_lineage_law, prop5_rhs
from gwsnake.gw import RandomStream, sample_conditioned, size_supported
from gwsnake.harness import (
    ExperimentConfig,
    covariance_ratio_test,
    marginal_ks_test,
    run_experiment,
    run_path_statistics,
)
from gwsnake.limits import limit_marginals
from gwsnake.lineage import compute_lineage, g_numerators, g_process
from gwsnake.multinomial import (
    IndexSetIK,
    gaussian_moment_check,
    limit_covariance,
    moment_bound_scan,
    n1_n2_laws,
    pair_index,
)
from gwsnake.snake import DisplacementFamily, assign_labels, decompose, label_process

from conftest import BINARY, FOUR, GEOMETRIC_LIKE, TERNARY

criterion = pytest.mark.criterion

SEED = 2024
DET = {"2": {"atoms": [{"values": [1, -1], "prob": 1}]}}
LAM = (0, 1, -1)
TOL = 0.05


@pytest.fixture(scope="module")
def binary_run():
    """Binary law, n = 4096, 2e4 replicates, nu_2 = delta_(1,-1); shared by criteria 6 to 9."""
    cfg = ExperimentConfig(n=4096, reps=20000, grid=(0.25, 0.5, 0.75), seed=SEED, nu=DET, lam=LAM)
    return run_experiment(cfg)


def _ratio_failures(reports):
    lines = []
    for r in reports:
        d = r.detail
        if abs(r.estimate - 1) > TOL:
            tag = f"s={d['s']}, t={d['t']}" + (f", i={d['i']}, i2={d['i2']}" if "i" in d else "")
            lines.append(f"{r.test}[{tag}] = {r.estimate:.4f} (CI {r.ci_lo:.4f}, {r.ci_hi:.4f})")
    return lines


# -- 1. exact identity suite -------------------------------------------------

@criterion(1)
def test_exact_identity_suite(tmp_path):
    t0 = time.perf_counter()
    for mu, n_max in (("1/2,0,1/2", 8), ("2/3,0,0,1/3", 6)):
        out = tmp_path / f"{n_max}.json"
        assert main(["verify-exact", "--mu", mu, "--max-n", str(n_max), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["violations"] == 0
        names = {c["name"] for c in doc["checks"]}
        assert {"prop5_lineage_law", "depth_law_sum", "otter_k1", "ratio_identity"} <= names
    assert time.perf_counter() - t0 < 10


# -- 2. worked fixture -------------------------------------------------------

@criterion(2)
def test_worked_fixture():
    ik = IndexSetIK(BINARY)
    key = tuple(int(x) for x in ik.to_array({(2, 1): 2}))
    assert exact_lineage_law(BINARY, 4, 2)[key] == Fraction(1, 2)
    assert prop5_rhs(BINARY, 4, 2, {(2, 1): 2}) == Fraction(1, 2)


# -- 3. binary-model identities ----------------------------------------------

@criterion(3)
def test_binary_label_identity():
    ik = IndexSetIK(BINARY)
    fam = DisplacementFamily.from_dict(DET)
    t0 = time.perf_counter()
    for i in range(100):
        gen = RandomStream(SEED, i).generator()
        tree = sample_conditioned(BINARY, 1000, gen)
        table = compute_lineage(tree, ik)
        lt = assign_labels(tree, fam, gen)
        a21, a22 = table.counts[:, pair_index(2, 1)], table.counts[:, pair_index(2, 2)]
        assert np.array_equal(lt.labels, a21 - a22)
        g = g_process(tree, table, ik).grid_values
        r = label_process(lt).grid_values
        assert np.array_equal(r, g[:, pair_index(2, 1)] - g[:, pair_index(2, 2)])
    assert time.perf_counter() - t0 < 5


# -- 4. pathwise decomposition -----------------------------------------------

CENTERED = [
    (BINARY, 4096, DET),
    (BINARY, 4096, {"2": {"atoms": [{"values": [1, -1], "prob": "1/2"}, {"values": [-1, 1], "prob": "1/2"}]}}),
    (BINARY, 4096, {"2": {"atoms": [{"values": [2, -1], "prob": "1/2"}, {"values": [0, -1], "prob": "1/2"}]}}),
    (BINARY, 4096, {"2": {"gaussian": {"means": [0.7, -0.7], "sds": [1.0, 0.3]}}}),
    (TERNARY, 3000, {"3": {"atoms": [{"values": [1, 0, -1], "prob": "1/2"}, {"values": [0, 1, -1], "prob": "1/2"}]}}),
    (GEOMETRIC_LIKE, 4096, {"1": {"atoms": [{"values": [1], "prob": "1/2"}, {"values": [-1], "prob": "1/2"}]},
                            "2": {"atoms": [{"values": [1, -1], "prob": 1}]}}),
    (FOUR, 4096, {"1": {"atoms": [{"values": [1], "prob": "1/2"}, {"values": [-1], "prob": "1/2"}]},
                  "2": {"atoms": [{"values": [2, -1], "prob": "1/2"}, {"values": [0, -1], "prob": "1/2"}]},
                  "4": {"gaussian": {"means": [0.5, 0.0, -1.0, 0.5], "sds": [1.0, 0.5, 0.5, 2.0]}}}),
]


@criterion(4)
@pytest.mark.parametrize("mu,n,nu", CENTERED, ids=[f"family{i}" for i in range(len(CENTERED))])
def test_pathwise_decomposition(mu, n, nu):
    fam = DisplacementFamily.from_dict(nu)
    ik = IndexSetIK(mu)
    worst = 0.0
    for i in range(50):
        gen = RandomStream(SEED, i).generator()
        tree = sample_conditioned(mu, n, gen)
        lt = assign_labels(tree, fam, gen)
        r1, r2 = decompose(lt, compute_lineage(tree, ik), fam, ik)
        r = label_process(lt)
        worst = max(worst, float(np.max(np.abs(r.grid_values - r1.grid_values - r2.grid_values))))
    assert worst <= 1e-12


# -- 5. conservation ---------------------------------------------------------

@criterion(5)
@pytest.mark.parametrize("mu", [BINARY, TERNARY, GEOMETRIC_LIKE, FOUR], ids=["binary", "ternary", "geometric", "four"])
def test_conservation(mu):
    ik = IndexSetIK(mu)
    for n in (10, 99, 999, 3000):
        if not size_supported(mu, n):
            continue
        for i in range(20):
            tree = sample_conditioned(mu, n, RandomStream(SEED, i).generator())
            num, _ = g_numerators(compute_lineage(tree, ik), ik)
            assert not any(num.sum(axis=1))


@criterion(5)
def test_conservation_in_monte_carlo_table(binary_run):
    assert not np.any(binary_run.data["G"].sum(axis=2))


# -- 6 to 9. Monte Carlo covariance and marginal checks ----------------------

@criterion(6)
def test_lineage_covariance(binary_run):
    reports = covariance_ratio_test(binary_run, "lineage")
    # two nonzero indices: 3 unordered pairs on each diagonal point, 4 ordered pairs off it
    assert len(reports) == 3 * 3 + 3 * 4
    bad = _ratio_failures(reports)
    assert not bad, "\n".join(bad)


@criterion(7)
def test_snake_covariance(binary_run):
    reports = covariance_ratio_test(binary_run, "snake")
    assert len(reports) == 6
    bad = _ratio_failures(reports)
    assert not bad, "\n".join(bad)


@criterion(8)
def test_combo_agrees_with_snake(binary_run):
    snake = covariance_ratio_test(binary_run, "snake")
    combo = covariance_ratio_test(binary_run, "combo", lam=LAM)
    assert len(snake) == len(combo)
    for a, b in zip(snake, combo):
        assert (a.detail["s"], a.detail["t"]) == (b.detail["s"], b.detail["t"])
        assert max(a.ci_lo, b.ci_lo) <= min(a.ci_hi, b.ci_hi), (a, b)


@criterion(9)
def test_marginal_ks(binary_run):
    cfg = binary_run.config
    x = binary_run.data["G"][:, list(cfg.grid).index(0.5), pair_index(2, 1)]
    lim = limit_marginals(binary_run.ik, 0.5, cfg.reps, RandomStream(cfg.seed, 2**40).generator())
    report = marginal_ks_test(x, lim, 0.03)
    assert report.passed, report


# -- 10. multinomial battery -------------------------------------------------

@criterion(10)
@pytest.mark.parametrize("mu", [BINARY, TERNARY, GEOMETRIC_LIKE], ids=["binary", "ternary", "geometric"])
def test_n1_n2_law_equality(mu):
    ik = IndexSetIK(mu)
    for h in range(13):
        law1, law2 = n1_n2_laws(ik, h)
        assert law1 == law2


@criterion(10)
@pytest.mark.parametrize("mu", [BINARY, TERNARY], ids=["binary", "ternary"])
def test_gaussian_moments(mu):
    check = gaussian_moment_check(IndexSetIK(mu), 10**6, 10**5, RandomStream(SEED, 0).generator(), tol=0.03)
    assert check.passed, (check.rel_error, check.fourth_ratio)


@criterion(10)
@pytest.mark.parametrize("power", [2, 4])
def test_moment_bound(power):
    n = 10**6
    root = math.isqrt(n)
    scan = moment_bound_scan(IndexSetIK(BINARY), n, power, [root // 4, root, 4 * root], 20000,
                             RandomStream(SEED, power).generator())
    assert scan.passed, (scan.ratios, scan.constant)


@criterion(10)
@pytest.mark.parametrize("mu", [BINARY, TERNARY, GEOMETRIC_LIKE, FOUR], ids=["binary", "ternary", "geometric", "four"])
def test_limit_covariance_rows_sum_to_zero(mu):
    c = limit_covariance(IndexSetIK(mu), exact=True)
    assert all(sum(row) == 0 for row in c)


# -- 11. path statistics -----------------------------------------------------

@criterion(11)
def test_path_statistics():
    big = run_path_statistics("1/2,0,1/2", 10**4, 500, SEED)
    assert big.exceedances == 0, (big.max_increment.max(), big.last_depth.max(), big.threshold)
    small = run_path_statistics("1/2,0,1/2", 10**3, 500, SEED)
    q_small = float(np.quantile(small.lineage_ratio, 0.99))
    q_big = float(np.quantile(big.lineage_ratio, 0.99))
    assert abs(q_big / q_small - 1) <= 0.2, (q_small, q_big)


# -- 12. determinism ---------------------------------------------------------

@criterion(12)
@pytest.mark.parametrize("experiment", ["g-cov", "snake-cov", "path-stats"])
def test_thread_count_does_not_change_output(tmp_path, experiment):
    nu = tmp_path / "nu.json"
    nu.write_text(json.dumps(DET))
    outs = []
    for threads in (1, 3):
        out = tmp_path / f"{threads}.csv"
        argv = ["mc", "--experiment", experiment, "--n", "256", "--reps", "1000", "--seed", "5",
                "--threads", str(threads), "--out", str(out)]
        if experiment == "snake-cov":
            argv += ["--nu", str(nu)]
        main(argv)
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert len(outs[0]) > 1000
