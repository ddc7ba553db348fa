"""Reference samplers for the limit objects on finite grids.

The normalized excursion is obtained from a discretised Brownian bridge by the
Vervaat transform; conditionally Gaussian fields are drawn from the
eigendecomposition of their assembled covariance.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gw import as_generator
from .multinomial import IndexSetIK, limit_covariance
from .trees import GridPath


class NotPSD(ValueError):
    pass


def vervaat(bridge: np.ndarray) -> np.ndarray:
    """Cyclic shift of bridge rows (``b[0] = b[-1] = 0``) at the first argmin."""
    b = np.atleast_2d(bridge)
    m = b.shape[1] - 1
    k = np.argmin(b[:, :m], axis=1)
    idx = (k[:, None] + np.arange(m + 1)[None, :]) % m
    out = np.take_along_axis(b[:, :m], idx, axis=1) - b[np.arange(len(b)), k][:, None]
    out[:, -1] = 0.0
    return out if np.ndim(bridge) == 2 else out[0]


def sample_excursions(m: int, size: int, rng) -> np.ndarray:
    """``size`` normalized excursions on ``m + 1`` grid points, one per row."""
    if m < 2:
        raise ValueError("grid needs m >= 2")
    gen = as_generator(rng)
    steps = gen.standard_normal((size, m)) / math.sqrt(m)
    walk = np.concatenate([np.zeros((size, 1)), np.cumsum(steps, axis=1)], axis=1)
    t = np.arange(m + 1) / m
    bridge = walk - t[None, :] * walk[:, -1:]
    bridge[:, -1] = 0.0
    return vervaat(bridge)


def sample_excursion(m: int, rng) -> GridPath:
    return GridPath(sample_excursions(m, 1, rng)[0])


def lifetime(excursion: GridPath, sigma2: float) -> GridPath:
    """``h = 2 e / sigma_mu``."""
    return GridPath(excursion.values, excursion.scale * 2.0 / math.sqrt(sigma2))


def h_check(path: GridPath, s: float, t: float) -> float:
    """``min h`` over ``[s ∧ t, s ∨ t]`` with ``s, t`` snapped to the nearest grid point."""
    if not (0 <= s <= 1 and 0 <= t <= 1):
        raise ValueError("s, t must lie in [0, 1]")
    i, j = sorted((int(round(s * path.steps)), int(round(t * path.steps))))
    return float(path.values[i:j + 1].min() * path.scale)


def h_check_matrix(path: GridPath, points: Sequence[float]) -> np.ndarray:
    q = len(points)
    out = np.empty((q, q))
    for a in range(q):
        for b in range(a, q):
            out[a, b] = out[b, a] = h_check(path, points[a], points[b])
    return out


@dataclass
class ConditionalGaussianSpec:
    """Grid points, lifetime path and kernel selector for a conditionally Gaussian field.

    ``kernel`` is ``"snake"`` (``beta2 * hcheck``), ``"field"`` (one coordinate
    per ``(k, j)``, coefficient matrix ``diag(p) - p p^T``) or ``"combo"``
    (``hcheck * lam^T (diag(p) - p p^T) lam``).
    """

    points: Sequence[float]
    path: GridPath
    kernel: str = "snake"
    ik: IndexSetIK | None = None
    beta2: float = 1.0
    lam: Sequence[float] | None = None

    def covariance(self) -> np.ndarray:
        hc = h_check_matrix(self.path, self.points)
        if self.kernel == "snake":
            return self.beta2 * hc
        if self.ik is None:
            raise ValueError(f"kernel {self.kernel!r} needs an index set")
        c = limit_covariance(self.ik)
        if self.kernel == "field":
            # ordering: point-major, then (k, j)
            return np.kron(hc, c)
        if self.kernel == "combo":
            lam = np.asarray(self.lam, dtype=float)
            return hc * float(lam @ c @ lam)
        raise ValueError(f"unknown kernel {self.kernel!r}")


def psd_factor(cov: np.ndarray, clip_tol: float = 1e-6, zero_tol: float = 1e-12) -> np.ndarray:
    """``L`` with ``L L^T = cov`` after clipping negative eigenvalues at zero.

    Eigenvalues below ``zero_tol * max|w|`` are round-off in a null direction
    and are set to zero as well, so kernel directions stay exactly degenerate.
    """
    w, v = np.linalg.eigh((cov + cov.T) / 2)
    mass = np.abs(w).sum()
    neg = -w[w < 0].sum()
    if mass > 0 and neg > clip_tol * mass:
        raise NotPSD(f"clipping would remove {neg / mass:.2e} of the eigenvalue mass")
    w = np.where(w <= zero_tol * np.abs(w).max(initial=0.0), 0.0, w)
    return v * np.sqrt(w)


def sample_conditional_field(spec: ConditionalGaussianSpec, rng, size: int | None = None) -> np.ndarray:
    """Centered Gaussian draw(s); ``field`` draws are reshaped to ``(points, #I_K)``."""
    gen = as_generator(rng)
    factor = psd_factor(spec.covariance())
    z = gen.standard_normal((1 if size is None else size, factor.shape[1]))
    x = z @ factor.T
    if spec.kernel == "field":
        x = x.reshape(len(x), len(spec.points), len(spec.ik))
    return x[0] if size is None else x


def limit_marginals(
    ik: IndexSetIK, s: float, size: int, rng, m: int = 2048, coefficient: float | None = None,
    k: int = 2, j: int = 1, batch: int = 2000,
) -> np.ndarray:
    """Unconditional draws of ``G_{k,j}(s)``: excursion resampled per draw, then Gaussian given ``h``.

    ``coefficient`` overrides ``mu_k - mu_k^2`` (e.g. ``beta2`` for the snake head).
    """
    gen = as_generator(rng)
    if coefficient is None:
        p = float(ik.mu.probs[k])
        coefficient = p - p * p
    sigma2 = float(ik.mu.variance)
    out = np.empty(size)
    i = int(round(s * m))
    done = 0
    while done < size:
        b = min(batch, size - done)
        e = sample_excursions(m, b, gen)
        h = 2.0 * e[:, i] / math.sqrt(sigma2)
        out[done:done + b] = np.sqrt(coefficient * h) * gen.standard_normal(b)
        done += b
    return out


def field_samples_to_csv(samples: np.ndarray, points: Sequence[float], ik: IndexSetIK | None) -> str:
    """Rows ``s, k, j, value, replicate``; ``k`` and ``j`` are empty for scalar fields."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "k", "j", "value", "replicate"])
    for rep, x in enumerate(samples):
        for a, s in enumerate(points):
            if x.ndim == 2:
                for (k, j), v in zip(ik.pairs, x[a]):
                    w.writerow([repr(float(s)), k, j, repr(float(v)), rep])
            else:
                w.writerow([repr(float(s)), "", "", repr(float(x[a])), rep])
    return buf.getvalue()
