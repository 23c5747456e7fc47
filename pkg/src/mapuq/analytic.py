"""Exact thresholds for the iid generalised-Gaussian family.

For ``p(x) ~ exp(-lam * sum_i |x_i|^q)`` each ``lam |x_i|^q`` is Gamma(1/q, 1)
distributed, so ``g(x) ~ Gamma(n/q, 1)`` whatever ``lam`` is, and the exact
HPD threshold ``gamma_alpha`` is its ``(1 - alpha)``-quantile.  The MAP is the
origin with ``g = 0``, so the conservative threshold is ``n (tau_alpha + 1)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .pxmala import estimate_gamma
from .region import build_region
from .special import gamma_upper_quantile


@dataclass(frozen=True)
class GenGaussianModel:
    q: float = 2.0
    lam: float = 1.0
    n: int = 1

    def __post_init__(self):
        if not self.q >= 1:
            raise InvalidInputError("q must be >= 1")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise InvalidInputError("lam must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputError("n must be a positive integer")

    def with_n(self, n):
        return GenGaussianModel(self.q, self.lam, int(n))


@dataclass(frozen=True)
class ErrorCurvePoint:
    n: int
    alpha: float
    e_n: float
    gamma_exact: float
    gamma_tilde: float
    limit: float


CSV_COLUMNS = ("n", "alpha", "gamma_exact", "gamma_tilde", "e_n", "limit")


def exact_gamma(model, alpha):
    """``(1 - alpha)``-quantile of ``g ~ Gamma(n/q, 1)``."""
    return gamma_upper_quantile(model.n / model.q, alpha)


def sample_gen_gaussian(model, size, rng):
    """``size`` iid draws of ``x`` (shape ``(size, n)``), via ``|x| = (G / lam)^(1/q)``."""
    q, lam = model.q, model.lam
    if q == 2:
        return rng.standard_normal((size, model.n)) / math.sqrt(2.0 * lam)
    g = rng.standard_gamma(1.0 / q, (size, model.n))
    mag = (g / lam) ** (1.0 / q)
    sign = np.where(rng.random((size, model.n)) < 0.5, -1.0, 1.0)
    return sign * mag


def _potential_rows(model, x):
    a = np.abs(x)
    if model.q == 1:
        return model.lam * a.sum(axis=1)
    if model.q == 2:
        return model.lam * np.einsum("ij,ij->i", a, a)
    return model.lam * (a ** model.q).sum(axis=1)


def mc_gamma(model, alpha, samples=10000, seed=0, chunk_elements=2_000_000):
    """Monte Carlo estimate of ``gamma_alpha`` from iid draws of ``x``."""
    samples = int(samples)
    if samples < 1000:
        raise InvalidInputError("samples must be >= 1000")
    rng = np.random.default_rng(seed)
    rows = max(1, chunk_elements // model.n)
    g = np.empty(samples)
    done = 0
    while done < samples:
        k = min(rows, samples - done)
        g[done:done + k] = _potential_rows(model, sample_gen_gaussian(model, k, rng))
        done += k
    est = estimate_gamma(g, alpha)
    return type(est)(est.gamma_hat, est.alpha, est.mc_std_error, "iid Monte Carlo; " + est.method)


def asymptotic_limit(q):
    """Limit of ``(gamma_tilde - gamma_alpha) / n``: ``1 - 1/q``."""
    if not q >= 1:
        raise InvalidInputError("q must be >= 1")
    return 1.0 - 1.0 / q


def log_grid(nmax=10_000):
    """``1, 2, 5, 10, 20, 50, ...`` up to ``nmax`` (always included)."""
    nmax = int(nmax)
    if nmax < 1:
        raise InvalidInputError("nmax must be >= 1")
    out = []
    decade = 1
    while decade <= nmax:
        out.extend(m * decade for m in (1, 2, 5) if m * decade <= nmax)
        decade *= 10
    if out[-1] != nmax:
        out.append(nmax)
    return out


def error_curve(q=1.0, lam=1.0, alphas=(0.2, 0.1, 0.05), n_grid=None):
    """``e(n) = (gamma_tilde - gamma_alpha) / n`` over a grid of ``n`` and ``alpha``."""
    n_grid = log_grid() if n_grid is None else [int(n) for n in n_grid]
    if not n_grid or n_grid[0] < 1 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise InvalidInputError("n grid must be positive and strictly increasing")
    limit = asymptotic_limit(q)
    points = []
    for alpha in alphas:
        for n in n_grid:
            model = GenGaussianModel(q, lam, n)
            exact = exact_gamma(model, alpha)
            tilde = build_region(alpha, n, 0.0, warn=False).gamma_tilde
            points.append(ErrorCurvePoint(n, float(alpha), (tilde - exact) / n, exact, tilde, limit))
    return points


def write_curve_csv(points, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for p in points:
            w.writerow([p.n, repr(p.alpha), repr(p.gamma_exact), repr(p.gamma_tilde),
                        repr(p.e_n), repr(p.limit)])
