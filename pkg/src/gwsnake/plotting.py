"""Static SVG figures for result tables and sampled trees.

SVG output is made reproducible by fixing the hash salt and dropping the date
metadata, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "gwsnake"
plt.rcParams["font.size"] = 9
plt.rcParams["axes.spines.top"] = False
plt.rcParams["axes.spines.right"] = False

_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def plot_covariance_ratios(reports: list[dict], path, title: str = ""):
    """Ratio estimates with their confidence intervals, one marker per test."""
    fig, ax = plt.subplots(figsize=(6, 3))
    x = np.arange(len(reports))
    est = np.array([r["estimate"] for r in reports], dtype=float)
    lo = np.array([r["ci_lo"] for r in reports], dtype=float)
    hi = np.array([r["ci_hi"] for r in reports], dtype=float)
    ok = np.array([bool(r["pass"]) for r in reports])
    ax.errorbar(x, est, yerr=[est - lo, hi - est], fmt="none", ecolor="0.6", lw=1)
    ax.scatter(x[ok], est[ok], s=14, c="C0", label="pass", zorder=3)
    ax.scatter(x[~ok], est[~ok], s=14, c="C3", label="fail", zorder=3)
    ax.axhline(1.0, color="k", lw=0.7)
    ax.set_xticks(x)
    ax.set_xticklabels([f"{r.get('s', '')},{r.get('t', '')}" for r in reports], rotation=60, fontsize=6)
    ax.set_ylabel("ratio")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_marginals(samples: dict[str, np.ndarray], path, xlabel: str = "value"):
    """Empirical CDFs of each named sample."""
    fig, ax = plt.subplots(figsize=(4, 3))
    for name, x in samples.items():
        x = np.sort(np.asarray(x))
        ax.step(x, np.arange(1, len(x) + 1) / len(x), where="post", lw=1, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("ECDF")
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_paths(paths: dict[str, np.ndarray], path, grid: np.ndarray | None = None):
    """Line plot of one or more paths against ``[0, 1]``."""
    fig, ax = plt.subplots(figsize=(6, 2.5))
    for name, y in paths.items():
        y = np.asarray(y)
        s = np.linspace(0, 1, len(y)) if grid is None else grid
        ax.plot(s, y, lw=0.8, label=name)
    ax.set_xlabel("s")
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_result_table(table, path):
    """Per-grid-point mean and spread of each scalar statistic in a result table."""
    names = [k for k, v in table.data.items() if v.ndim == 2]
    grid = np.asarray(table.config.grid, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3))
    for i, name in enumerate(names):
        v = table.data[name]
        m, sd = v.mean(0), v.std(0)
        ax.errorbar(grid + 0.004 * (i - len(names) / 2), m, yerr=sd, fmt="o-", ms=3, lw=1, capsize=2, label=name)
    ax.set_xlabel("s")
    ax.set_ylabel("mean ± sd")
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    _save(fig, path)
