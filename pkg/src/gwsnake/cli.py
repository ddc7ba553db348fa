"""Command-line front end.

Exit codes: 0 success, 1 a gating test failed (or a runtime failure), 2 bad
arguments. Errors go to standard error as one line of JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .exact import verify_identities
from .gw import (
    InvalidArgs,
    OffspringDistribution,
    RandomStream,
    UnsupportedSize,
    sample_conditioned,
    validate_h1,
)
from .limits import (
    ConditionalGaussianSpec,
    NotPSD,
    field_samples_to_csv,
    lifetime,
    limit_marginals,
    sample_excursions,
    sample_conditional_field,
)
from .multinomial import CapExceeded, IndexSetIK, pair_index
from .snake import DisplacementFamily, MissingArity, NotCentered, assign_labels, global_moments, validate_h2
from .trees import GridPath

EXPERIMENTS = ("g-cov", "snake-cov", "combo", "ks", "independence", "path-stats")
KIND = {"g-cov": "lineage", "snake-cov": "snake", "combo": "combo"}
# options that never enter the echoed config (they do not change results)
NOT_ECHOED = {"command", "config", "threads", "out", "plot", "report", "in_path"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gwsnake", description="Lineages and discrete snakes on conditioned Galton-Watson trees.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file with option defaults; flags take precedence")
        sp.add_argument("--threads", type=int, default=None, help="worker processes (results do not depend on it)")

    sp = sub.add_parser("sample", help="sample one conditioned tree (and labels) as JSON")
    common(sp)
    sp.add_argument("--mu")
    sp.add_argument("--n", type=int)
    sp.add_argument("--nu", help="JSON file with the displacement family")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")

    sp = sub.add_parser("verify-exact", help="exact identity suite by enumeration")
    common(sp)
    sp.add_argument("--mu")
    sp.add_argument("--max-n", type=int)
    sp.add_argument("--out")

    sp = sub.add_parser("mc", help="Monte-Carlo experiment and gating tests")
    common(sp)
    sp.add_argument("--experiment", choices=EXPERIMENTS)
    sp.add_argument("--mu")
    sp.add_argument("--nu")
    sp.add_argument("--n", type=int)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--grid")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--lam", help="combo coefficients aligned with I_K")
    sp.add_argument("--contour", action="store_const", const=True, default=None,
                    help="also record contour versions (non-gating battery)")
    sp.add_argument("--out")
    sp.add_argument("--report", help="write the JSON test report here as well")
    sp.add_argument("--plot", help="SVG figure of the test estimates")

    sp = sub.add_parser("limit-sample", help="samples of the limit objects")
    common(sp)
    sp.add_argument("--grid", type=int, help="number of grid steps m")
    sp.add_argument("--reps", type=int)
    sp.add_argument("--kernel", choices=("excursion", "field", "snake"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mu", help="offspring law fixing sigma^2 and I_K")
    sp.add_argument("--nu", help="displacement family fixing beta^2 (snake kernel)")
    sp.add_argument("--points", help="evaluation points for field and snake kernels")
    sp.add_argument("--out")
    sp.add_argument("--plot")

    sp = sub.add_parser("report", help="summarize a result table")
    common(sp)
    sp.add_argument("--in", dest="in_path")
    sp.add_argument("--plot")
    return p


DEFAULTS = {
    "sample": {"mu": "1/2,0,1/2", "n": 100, "nu": None, "seed": 0, "out": None},
    "verify-exact": {"mu": "1/2,0,1/2", "max_n": 8, "out": None},
    "mc": {"experiment": "g-cov", "mu": "1/2,0,1/2", "nu": None, "n": 4096, "reps": 20000,
           "grid": "0.25,0.5,0.75", "seed": 0, "lam": None, "contour": False, "out": None,
           "report": None, "plot": None},
    "limit-sample": {"grid": 2048, "reps": 1000, "kernel": "excursion", "seed": 0, "mu": "1/2,0,1/2",
                     "nu": None, "points": "0.25,0.5,0.75", "out": None, "plot": None},
    "report": {"in_path": None, "plot": None},
}


def merged_options(args: argparse.Namespace) -> dict:
    """Defaults, then the ``--config`` file, then explicit flags."""
    opts = dict(DEFAULTS[args.command])
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        unknown = set(cfg) - set(opts) - {"threads"}
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        opts.update({k: v for k, v in cfg.items() if k in opts})
        if args.threads is None and "threads" in cfg:
            args.threads = cfg["threads"]
    for key in opts:
        v = getattr(args, key, None)
        if v is not None:
            opts[key] = v
    opts["threads"] = args.threads or 1
    return opts


def echoed(opts: dict, command: str) -> dict:
    out = {k: v for k, v in opts.items() if k not in NOT_ECHOED}
    out["command"] = command
    return out


def _load_nu(path):
    if path is None:
        return None
    if isinstance(path, dict):
        return path
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read displacement family: {exc}") from None


def _parse_mu(text) -> OffspringDistribution:
    try:
        return OffspringDistribution.parse(str(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad offspring law {text!r}: {exc}") from None


def _write(path, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_sample(opts) -> int:
    mu = _parse_mu(opts["mu"])
    if not validate_h1(mu).ok:
        raise UsageError(f"offspring law {opts['mu']} is not critical, nondegenerate and bounded")
    nu = _load_nu(opts["nu"])
    gen = RandomStream(int(opts["seed"]), 0).generator()
    tree = sample_conditioned(mu, int(opts["n"]), gen)
    extra = {"config": echoed({**opts, "nu": nu}, "sample")}
    labels = None
    if nu is not None:
        family = DisplacementFamily.from_dict(nu)
        if not validate_h2(family, mu).centered:
            raise UsageError("displacement family is not globally centered")
        labels = assign_labels(tree, family, gen).labels.tolist()
    _write(opts["out"], tree.to_json(labels=labels, **extra) + "\n")
    return 0


def cmd_verify(opts) -> int:
    mu = _parse_mu(opts["mu"])
    report = verify_identities(mu, int(opts["max_n"]))
    doc = json.loads(report.to_json())
    doc["config"] = echoed(opts, "verify-exact")
    _write(opts["out"], json.dumps(doc, indent=1) + "\n")
    return 0 if report.ok else 1


def _experiment_config(opts, nu) -> harness.ExperimentConfig:
    grid = _floats(opts["grid"])
    if any(not 0 <= s <= 1 for s in grid):
        raise UsageError("grid points must lie in [0, 1]")
    lam = None if opts["lam"] is None else _floats(opts["lam"])
    return harness.ExperimentConfig(
        mu=str(opts["mu"]), n=int(opts["n"]), reps=int(opts["reps"]), grid=grid, seed=int(opts["seed"]),
        kind=opts["experiment"], nu=nu, lam=lam, contour=bool(opts["contour"]),
    )


def _mc_reports(opts, cfg: harness.ExperimentConfig, table: harness.ResultTable) -> tuple[list, list]:
    """Gating and non-gating reports for one experiment kind."""
    exp = opts["experiment"]
    gating, extra = [], []
    if exp in KIND:
        lam = cfg.lam
        if exp == "combo" and lam is None:
            raise UsageError("combo needs --lam")
        if exp == "combo" and len(lam) != len(table.ik):
            raise UsageError(f"--lam needs {len(table.ik)} entries")
        gating = harness.covariance_ratio_test(table, KIND[exp], lam=lam)
    elif exp == "ks":
        if 0.5 not in cfg.grid:
            raise UsageError("the ks experiment reads G_{2,1} at s = 0.5; include 0.5 in --grid")
        a = list(cfg.grid).index(0.5)
        ik = table.ik
        x = table.data["G"][:, a, pair_index(2, 1)]
        lim = limit_marginals(ik, 0.5, cfg.reps, RandomStream(cfg.seed, 2**40).generator())
        gating = [harness.marginal_ks_test(x, lim, cfg.ks_threshold)]
    elif exp == "independence":
        gating = harness.independence_probe(table)
        extra = harness.split_covariance_test(table)
    if cfg.contour and "rhat" in table.data:
        extra = extra + harness.covariance_ratio_test(table, "snake", contour=True)
    return gating, extra


def cmd_mc(opts) -> int:
    exp = opts["experiment"]
    nu = _load_nu(opts["nu"])
    config_echo = echoed({**opts, "nu": nu}, "mc")
    if exp == "path-stats":
        mu = _parse_mu(opts["mu"])
        if not validate_h1(mu).ok:
            raise UsageError("offspring law fails the standing hypotheses")
        run = harness.run_path_statistics(str(opts["mu"]), int(opts["n"]), int(opts["reps"]),
                                          int(opts["seed"]), threads=opts["threads"])
        q99 = float(np.quantile(run.lineage_ratio, 0.99))
        rep = harness.TestReport("path_exceedances", 0.0, float(run.exceedances), 0.0, 0.0,
                                 run.exceedances == 0, {"threshold": run.threshold, "lineage_ratio_q99": q99})
        _write(opts["out"], run.to_csv(config_echo))
        return _finish(opts, config_echo, [rep], [])

    if exp in ("snake-cov", "independence") and nu is None:
        raise UsageError(f"{exp} needs --nu")
    cfg = _experiment_config(opts, nu)
    if cfg.reps < harness.MIN_REPLICATES:
        raise harness.InsufficientReplicates(f"{cfg.reps} replicates < {harness.MIN_REPLICATES}")
    if exp == "ks" and cfg.reps < 5000:
        raise harness.InsufficientReplicates(f"{cfg.reps} replicates < 5000")
    try:
        harness.check_hypotheses(cfg)
    except (ValueError, MissingArity) as exc:
        raise UsageError(str(exc)) from None
    table = harness.run_experiment(cfg, threads=opts["threads"])
    gating, extra = _mc_reports(opts, cfg, table)
    _write(opts["out"], table.to_csv())
    return _finish(opts, config_echo, gating, extra)


def _finish(opts, config_echo, gating, extra) -> int:
    ok = all(r.passed for r in gating)
    doc = {"config": config_echo, "pass": ok,
           "reports": [r.to_dict() for r in gating],
           "non_gating": [r.to_dict() for r in extra]}
    text = json.dumps(doc, indent=1, default=_json_default) + "\n"
    if opts.get("report"):
        Path(opts["report"]).write_text(text)
    if opts["out"] is not None:
        sys.stdout.write(text)
    if opts.get("plot"):
        from .plotting import plot_covariance_ratios
        plot_covariance_ratios(doc["reports"] + doc["non_gating"], opts["plot"], title=config_echo.get("experiment", ""))
    return 0 if ok else 1


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(type(x))


def cmd_limit(opts) -> int:
    m, reps = int(opts["grid"]), int(opts["reps"])
    if m < 2 or reps < 1:
        raise UsageError("need --grid >= 2 and --reps >= 1")
    mu = _parse_mu(opts["mu"])
    if not validate_h1(mu).ok:
        raise UsageError("offspring law fails the standing hypotheses")
    gen = RandomStream(int(opts["seed"]), 0).generator()
    header = "# config: " + json.dumps(echoed(opts, "limit-sample"), sort_keys=True) + "\n"
    kernel = opts["kernel"]
    if kernel == "excursion":
        e = sample_excursions(m, reps, gen)
        body = field_samples_to_csv(e, np.arange(m + 1) / m, None)
        _write(opts["out"], header + body)
        if opts["plot"]:
            from .plotting import plot_paths
            plot_paths({f"e{i}": e[i] for i in range(min(reps, 5))}, opts["plot"])
        return 0
    points = _floats(opts["points"])
    ik = IndexSetIK(mu)
    beta2 = 1.0
    if kernel == "snake":
        nu = _load_nu(opts["nu"])
        if nu is not None:
            family = DisplacementFamily.from_dict(nu)
            if not validate_h2(family, mu).centered:
                raise UsageError("displacement family is not globally centered")
            beta2 = float(global_moments(family, mu)[1])
    rows = []
    for _ in range(reps):
        h = lifetime(GridPath(sample_excursions(m, 1, gen)[0]), float(mu.variance))
        spec = ConditionalGaussianSpec(points, h, kernel=kernel, ik=ik, beta2=beta2)
        rows.append(sample_conditional_field(spec, gen))
    samples = np.array(rows)
    _write(opts["out"], header + field_samples_to_csv(samples, points, ik if kernel == "field" else None))
    if opts["plot"]:
        from .plotting import plot_marginals
        flat = samples.reshape(reps, len(points), -1)[:, :, 0]
        plot_marginals({f"s={s}": flat[:, a] for a, s in enumerate(points)}, opts["plot"])
    return 0


def cmd_report(opts) -> int:
    if not opts["in_path"]:
        raise UsageError("report needs --in")
    try:
        text = Path(opts["in_path"]).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {opts['in_path']}: {exc}") from None
    table = harness.ResultTable.from_csv(text)
    out = ["stat_name,s,k,j,mean,sd,replicates"]
    grid = table.config.grid
    pairs = table.ik.pairs
    for name, arr in table.data.items():
        if arr.ndim == 2:
            for a, s in enumerate(grid):
                out.append(f"{name},{s},,,{arr[:, a].mean():.6g},{arr[:, a].std():.6g},{len(arr)}")
        elif name == "G":
            for a, s in enumerate(grid):
                for x, (k, j) in enumerate(pairs):
                    v = arr[:, a, x]
                    out.append(f"{name},{s},{k},{j},{v.mean():.6g},{v.std():.6g},{len(arr)}")
        else:
            for a, s in enumerate(grid):
                v = arr[:, a, a]
                out.append(f"{name},{s},,,{v.mean():.6g},{v.std():.6g},{len(arr)}")
    sys.stdout.write("\n".join(out) + "\n")
    if opts["plot"]:
        from .plotting import plot_result_table
        plot_result_table(table, opts["plot"])
    return 0


COMMANDS = {"sample": cmd_sample, "verify-exact": cmd_verify, "mc": cmd_mc,
            "limit-sample": cmd_limit, "report": cmd_report}

USAGE_ERRORS = (UsageError, UnsupportedSize, InvalidArgs, CapExceeded, harness.InsufficientReplicates,
                NotCentered, MissingArity)


def _error(kind: str, exc: BaseException) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = merged_options(args)
        return COMMANDS[args.command](opts)
    except USAGE_ERRORS as exc:
        _error(type(exc).__name__, exc)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (NotPSD, ValueError, RuntimeError, OSError) as exc:
        _error(type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
