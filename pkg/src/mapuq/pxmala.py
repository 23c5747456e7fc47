"""Proximal MALA for ``p(x) ~ exp(-g(x))`` with non-smooth convex ``g``.

The Langevin drift uses the gradient of the Moreau envelope of ``g``,
``(x - prox_{m g}(x)) / m``, and every proposal is Metropolis-corrected, so
the chain targets ``exp(-g)`` exactly whatever ``m`` and the step size are.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ChainFailureError, InvalidInputError
from .model import Kind, potential
from .prox import ProxConfig, moreau_grad
from .region import CredibleRegion

_N_BATCHES = 20


@dataclass(frozen=True)
class ChainConfig:
    """Sampler settings.

    ``moreau_lambda=None`` ties the envelope parameter to the (possibly
    adapted) step size.  For l1 and TV terms a fixed value of the order of
    the initial step is usually better: tied to a shrinking step, the drift
    sharpens, acceptance drops and the adaptation can spiral downwards.  ``target_acceptance=None`` switches the burn-in
    step-size adaptation off.
    """

    step_delta: float
    iterations: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    moreau_lambda: float | None = None
    target_acceptance: float | None = 0.5
    prox: ProxConfig = field(default_factory=ProxConfig)

    def __post_init__(self):
        if not (math.isfinite(self.step_delta) and self.step_delta > 0):
            raise InvalidInputError("step_delta must be positive")
        if self.moreau_lambda is not None and not self.moreau_lambda > 0:
            raise InvalidInputError("moreau_lambda must be positive")
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise InvalidInputError("burn_in must lie in [0, iterations)")
        if self.thin < 1:
            raise InvalidInputError("thin must be >= 1")
        if self.target_acceptance is not None and not 0 < self.target_acceptance < 1:
            raise InvalidInputError("target_acceptance must lie in (0, 1)")


@dataclass
class ChainOutput:
    g_samples: np.ndarray
    acceptance_rate: float
    ess_estimate: float
    seed: int
    step_delta: float = float("nan")
    moreau_lambda: float = float("nan")
    burn_in_acceptance: float = float("nan")
    wall_time_seconds: float = 0.0

    def summary(self):
        g = self.g_samples
        return {
            "samples": int(g.size),
            "acceptance_rate": self.acceptance_rate,
            "burn_in_acceptance": self.burn_in_acceptance,
            "ess_estimate": self.ess_estimate,
            "seed": self.seed,
            "step_delta": self.step_delta,
            "moreau_lambda": self.moreau_lambda,
            "g_mean": float(g.mean()) if g.size else float("nan"),
            "g_std": float(g.std()) if g.size else float("nan"),
        }


@dataclass(frozen=True)
class QuantileEstimate:
    gamma_hat: float
    alpha: float
    mc_std_error: float
    method: str


class _State:
    """Current point with its potential and drift (reused across steps)."""

    __slots__ = ("x", "g", "grad")

    def __init__(self, x, g, grad):
        self.x, self.g, self.grad = x, g, grad


def _drift(model, x, mlambda, prox_cfg):
    return moreau_grad(model, x, mlambda, prox_cfg)


def log_proposal_density(x_to, x_from, grad_from, delta):
    """Unnormalised ``log q(x_to | x_from)`` for the Langevin proposal."""
    d = x_to - x_from + 0.5 * delta * grad_from
    return -float(np.vdot(d, d)) / (2.0 * delta)


def _step(model, state, delta, mlambda, prox_cfg, rng):
    """One MH step; returns ``(state, accepted, acceptance_probability)``."""
    noise = rng.standard_normal(state.x.shape)
    u = rng.random()
    prop = state.x - 0.5 * delta * state.grad + math.sqrt(delta) * noise
    g_prop = potential(model, prop)
    if math.isnan(g_prop):
        raise ChainFailureError("potential is NaN at the proposal", state=prop)
    if not math.isfinite(g_prop):
        return state, False, 0.0  # outside the support
    grad_prop = _drift(model, prop, mlambda, prox_cfg)
    log_a = (state.g - g_prop
             + log_proposal_density(state.x, prop, grad_prop, delta)
             - log_proposal_density(prop, state.x, state.grad, delta))
    prob = 1.0 if log_a >= 0 else math.exp(log_a)
    if u < prob:
        return _State(prop, g_prop, grad_prop), True, prob
    return state, False, prob


def pxmala_step(model, x, cfg, rng):
    """One px-MALA transition from ``x``.

    Parameters
    ----------
    model : PosteriorModel
    x : ndarray
        Current state.
    cfg : ChainConfig
        Only ``step_delta``, ``moreau_lambda`` and ``prox`` are used.
    rng : numpy.random.Generator
        Consumed deterministically: one normal vector, then one uniform.

    Returns
    -------
    x_new : ndarray
    accepted : bool
    """
    x = np.asarray(x, dtype=np.float64)
    delta = cfg.step_delta
    mlambda = cfg.moreau_lambda or delta
    g = potential(model, x)
    if not math.isfinite(g):
        raise ChainFailureError("current state has non-finite potential", state=x)
    state = _State(x, g, _drift(model, x, mlambda, cfg.prox))
    new, accepted, _ = _step(model, state, delta, mlambda, cfg.prox, rng)
    return new.x, accepted


def suggest_step(model):
    """A rough initial step size: curvature scale times ``n^(-1/3)``."""
    if model.kind is Kind.GEN_GAUSSIAN:
        q, lam = model.q, model.lam
        scale2 = (1.0 / lam) ** (2.0 / q)  # squared width of exp(-lam |x|^q)
    elif model.has_data:
        scale2 = model.sigma ** 2 / max(float(model.data_spectrum.max()), 1e-12)
    else:
        scale2 = 1.0 / model.lam ** 2
    return float(scale2 * model.n ** (-1.0 / 3.0))


def run_chain(model, cfg, x0=None, x_map=None):
    """Run px-MALA and record ``g`` along the chain.

    During burn-in ``log(delta)`` follows a Robbins-Monro recursion towards
    ``cfg.target_acceptance``; afterwards the kernel is fixed.  The start is
    ``x0``, else ``x_map``, else the origin (or the MAP computed on the fly
    for imaging models).

    Returns
    -------
    ChainOutput
        ``floor((iterations - burn_in) / thin)`` retained values of ``g``.
    """
    t0 = time.perf_counter()
    if x0 is None:
        x0 = x_map
    if x0 is None:
        if model.kind is Kind.GEN_GAUSSIAN:
            x0 = np.zeros(model.shape)
        else:
            from .admm import solve_map

            x0 = solve_map(model).x_map
    x = np.array(x0, dtype=np.float64)
    if x.shape != model.shape:
        raise InvalidInputError(f"x0 has shape {x.shape}, model expects {model.shape}")
    rng = np.random.default_rng(cfg.seed)
    delta = cfg.step_delta
    fixed_m = cfg.moreau_lambda
    g0 = potential(model, x)
    if not math.isfinite(g0):
        raise ChainFailureError("starting point has non-finite potential", 0, x)
    state = _State(x, g0, _drift(model, x, fixed_m or delta, cfg.prox))

    n_keep = (cfg.iterations - cfg.burn_in) // cfg.thin
    samples = np.empty(n_keep)
    kept = 0
    acc_burn = acc_main = 0
    adapt = cfg.target_acceptance is not None
    for it in range(cfg.iterations):
        in_burn = it < cfg.burn_in
        state, accepted, prob = _step(model, state, delta, fixed_m or delta, cfg.prox, rng)
        if not math.isfinite(state.g):
            raise ChainFailureError(f"non-finite potential at iteration {it}", it, state.x)
        if in_burn:
            acc_burn += accepted
            if adapt:
                delta *= math.exp((prob - cfg.target_acceptance) / (it + 1) ** 0.6)
                if fixed_m is None:
                    # the drift depends on delta through the envelope parameter
                    state.grad = _drift(model, state.x, delta, cfg.prox)
        else:
            acc_main += accepted
            j = it - cfg.burn_in + 1
            if j % cfg.thin == 0 and kept < n_keep:
                samples[kept] = state.g
                kept += 1
    main = cfg.iterations - cfg.burn_in
    return ChainOutput(
        g_samples=samples,
        acceptance_rate=acc_main / main,
        ess_estimate=batch_means_ess(samples),
        seed=cfg.seed,
        step_delta=delta,
        moreau_lambda=fixed_m or delta,
        burn_in_acceptance=acc_burn / cfg.burn_in if cfg.burn_in else float("nan"),
        wall_time_seconds=time.perf_counter() - t0,
    )


def batch_means_ess(values):
    """Effective sample size ``N var / sigma^2_BM`` with ``sqrt(N)`` batches."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n < 4:
        return float(n)
    var = float(v.var(ddof=1))
    if var == 0.0:
        return float(n)
    nb = int(math.isqrt(n))
    b = n // nb
    means = v[: nb * b].reshape(nb, b).mean(axis=1)
    sig2 = b * float(means.var(ddof=1))
    if sig2 <= 0.0:
        return float(n)
    return float(min(n, n * var / sig2))


def estimate_gamma(out, alpha):
    """Empirical ``(1 - alpha)``-quantile of the recorded ``g`` values.

    The standard error is the spread of the same quantile over 20
    consecutive batches divided by ``sqrt(20)``.  With fewer than
    ``100 / alpha`` samples the ``method`` string carries a warning.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    g = np.asarray(out.g_samples if isinstance(out, ChainOutput) else out, dtype=np.float64)
    if g.size == 0:
        raise InvalidInputError("no samples")
    q = 1.0 - alpha
    gamma = float(np.quantile(g, q))
    nb = min(_N_BATCHES, g.size)
    if nb >= 2:
        b = g.size // nb
        per = np.quantile(g[: nb * b].reshape(nb, b), q, axis=1)
        se = float(per.std(ddof=1) / math.sqrt(nb))
    else:
        se = float("inf")
    method = f"empirical quantile, {nb}-batch means"
    if g.size < 100.0 / alpha:
        method += f"; warning: only {g.size} samples (< 100/alpha)"
    return QuantileEstimate(gamma, float(alpha), se, method)


def relative_error(region, est):
    """``(gamma_tilde - gamma_hat) / gamma_hat``."""
    gamma_tilde = region.gamma_tilde if isinstance(region, CredibleRegion) else float(region)
    if not est.gamma_hat > 0:
        raise InvalidInputError("gamma_hat must be positive")
    return (gamma_tilde - est.gamma_hat) / est.gamma_hat
