"""SALSA-style ADMM for ``argmin_x g_y(x)``.

The potential is split as ``f(x) + sum_j h_j(B_j x)`` where ``f`` collects the
quadratic terms (data fidelity, plus an optional proximity term used when the
solver computes a prox) and each ``h_j`` has a cheap prox:

* TV model:  ``B = grad``, ``h = lam ||.||_{1-2}``; with ``nonneg`` a second
  split ``B = I``, ``h = indicator(x >= 0)``.
* l1 model:  ``B = I``, ``h = lam ||.||_1`` (nonnegative variant if requested).
* generalised Gaussian: ``B = I``, ``h = lam sum |.|^q``.

Every ``B_j^T B_j`` and ``A^T A`` is diagonal in the unitary Fourier basis, so
the x-update is one real FFT pair.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sp_fft

from .errors import ConvergenceError, InvalidInputError
from .model import Kind, PotentialValue, data_gradient, eval_potential
from .operators import Identity, div2, fft_workers, grad2, gradient_spectrum
from .prox import prox_l1, prox_l1_nonneg, prox_l12, prox_power


@dataclass(frozen=True)
class AdmmConfig:
    """Solver settings.

    ``rho`` is relative: the penalty actually used is ``rho`` times the
    natural curvature scale of the problem (see :func:`_rho_scale`), so the
    default of 1 is sensible whatever ``sigma`` and ``lam`` are.
    """

    rho: float = 1.0
    max_iters: int = 5000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    record_trace: bool = False
    adapt_rho: bool = True
    adapt_every: int = 50

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidInputError("rho must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        for tol in (self.tol_primal, self.tol_dual):
            if not 0.0 < tol < 1.0:
                raise InvalidInputError("tolerances must lie in (0, 1)")


@dataclass
class SolveReport:
    x_map: np.ndarray
    g_at_map: PotentialValue
    iterations: int
    primal_residual: float
    dual_residual: float
    objective_trace: np.ndarray | None
    wall_time_seconds: float
    converged: bool = True
    rho: float = float("nan")
    splits: list = field(default_factory=list, repr=False)
    duals: list = field(default_factory=list, repr=False)

    def scalars(self):
        """JSON-friendly scalar summary."""
        return {
            "g_at_map": self.g_at_map.total,
            "data_term": self.g_at_map.data_term,
            "reg_term": self.g_at_map.reg_term,
            "feasible": self.g_at_map.feasible,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "wall_time_seconds": self.wall_time_seconds,
            "converged": self.converged,
            "rho": self.rho,
            "n": int(self.x_map.size),
            "height": int(self.x_map.shape[0]),
            "width": int(self.x_map.shape[1]),
        }


class _Split:
    """One ``z_j = B_j x`` constraint with its prox."""

    def __init__(self, is_grad, prox):
        self.is_grad = is_grad
        self.prox = prox  # prox(v, tau) with tau = weight / rho

    def apply(self, x):
        return grad2(x) if self.is_grad else x

    def adjoint(self, u):
        return -div2(u) if self.is_grad else u


def _splits_for(model, scale):
    lam = scale * model.lam
    if model.kind is Kind.TV_TOMOGRAPHY:
        splits = [_Split(True, lambda v, r: prox_l12(v, lam / r))]
        if model.nonneg:
            splits.append(_Split(False, lambda v, r: np.maximum(v, 0.0)))
        return splits
    if model.kind is Kind.L1_DECONVOLUTION:
        if model.nonneg:
            return [_Split(False, lambda v, r: prox_l1_nonneg(v, lam / r))]
        return [_Split(False, lambda v, r: prox_l1(v, lam / r))]
    q = model.q
    if model.nonneg:
        return [_Split(False, lambda v, r: np.maximum(prox_power(v, lam / r, q), 0.0))]
    return [_Split(False, lambda v, r: prox_power(v, lam / r, q))]


def _rho_scale(model, scale, weight):
    """Curvature of the quadratic part, used to make ``AdmmConfig.rho`` unitless."""
    curv = weight
    if model.has_data:
        curv += scale * float(np.mean(model.data_spectrum)) / model.sigma ** 2
    if curv <= 0:
        curv = scale * model.lam
    if model.kind is Kind.TV_TOMOGRAPHY:
        curv /= 8.0  # ||grad||^2 for the periodic gradient
    return curv


class _Engine:
    """ADMM iterations for ``scale * g(x) + weight/2 ||x - centre||^2``."""

    def __init__(self, model, scale=1.0, weight=0.0, centre=None, rho=1.0):
        self.model = model
        self.scale = scale
        self.weight = weight
        self.centre = centre
        self.splits = _splits_for(model, scale)
        self.rho = rho * _rho_scale(model, scale, weight)
        h, w = model.shape
        self._half = w // 2 + 1
        self.fourier = model.has_data and not isinstance(model.forward, Identity)
        self.fourier = self.fourier or any(s.is_grad for s in self.splits)
        c = scale / model.sigma ** 2 if model.has_data else 0.0
        self._data_c = c
        rhs0 = weight * centre if (centre is not None and weight) else np.zeros(model.shape)
        if model.has_data:
            rhs0 = rhs0 + c * model.adjoint_observation
        self._rhs0 = rhs0
        self._data_spec = model.data_spectrum if self.fourier else None
        self._grad_spec = gradient_spectrum(model.shape) if self.fourier else None
        self._set_rho(self.rho)

    def _set_rho(self, rho):
        self.rho = rho
        n_id = sum(not s.is_grad for s in self.splits)
        n_grad = sum(s.is_grad for s in self.splits)
        if self.fourier:
            denom = self.weight + rho * n_id + self._data_c * self._data_spec
            if n_grad:
                denom = denom + rho * n_grad * self._grad_spec
            self._denom = denom[:, : self._half]
        else:
            # identity forward (or none): the whole system is a scalar multiple of I
            self._denom = self.weight + rho * n_id + (self._data_c if self.model.has_data else 0.0)

    def solve_x(self, rhs):
        if not self.fourier:
            return rhs / self._denom
        h, w = self.model.shape
        return sp_fft.irfft2(sp_fft.rfft2(rhs, workers=fft_workers()) / self._denom,
                             s=(h, w), workers=fft_workers())

    def objective(self, x):
        val = self.scale * eval_potential(self.model, x).total
        if self.weight:
            d = x - self.centre
            val += 0.5 * self.weight * float(np.vdot(d, d))
        return val

    def run(self, x0, max_iters, tol_p, tol_d, adapt=True, adapt_every=50, record=False):
        x = np.array(x0, dtype=np.float64)
        zs = [s.apply(x).copy() for s in self.splits]
        ws = [np.zeros_like(z) for z in zs]
        trace = [] if record else None
        r_rel = s_rel = float("inf")
        it = 0
        converged = False
        for it in range(1, max_iters + 1):
            rhs = self._rhs0.copy()
            for s, z, w in zip(self.splits, zs, ws):
                rhs += self.rho * s.adjoint(z - w)
            x = self.solve_x(rhs)

            r2 = bx2 = z2 = 0.0
            dual_vec = 0.0
            lag_vec = 0.0
            for j, s in enumerate(self.splits):
                bx = s.apply(x)
                z_old = zs[j]
                z = s.prox(bx + ws[j], self.rho)
                diff = bx - z
                ws[j] = ws[j] + diff
                zs[j] = z
                r2 += float(np.vdot(diff, diff))
                bx2 += float(np.vdot(bx, bx))
                z2 += float(np.vdot(z, z))
                dual_vec = dual_vec + s.adjoint(z - z_old)
                lag_vec = lag_vec + s.adjoint(ws[j])
            r = math.sqrt(r2)
            sres = self.rho * float(np.linalg.norm(dual_vec))
            p_den = max(math.sqrt(bx2), math.sqrt(z2))
            d_den = max(self.rho * float(np.linalg.norm(lag_vec)),
                        self.weight * float(np.linalg.norm(x)))
            r_rel = r / p_den if p_den > 0 else r
            s_rel = sres / d_den if d_den > 0 else sres
            if record:
                trace.append(self.objective(x))
            if r_rel <= tol_p and s_rel <= tol_d:
                converged = True
                break
            if adapt and it % adapt_every == 0:
                if r_rel > 10.0 * s_rel:
                    self._set_rho(2.0 * self.rho)
                    ws = [w / 2.0 for w in ws]
                elif s_rel > 10.0 * r_rel:
                    self._set_rho(self.rho / 2.0)
                    ws = [w * 2.0 for w in ws]
        return x, zs, ws, it, r_rel, s_rel, converged, trace


def _default_x0(model):
    if model.kind is Kind.GEN_GAUSSIAN or not model.has_data:
        return np.zeros(model.shape)
    return model.adjoint_observation.copy()


def solve_map(model, cfg=None, x0=None):
    """Compute ``x_MAP = argmin g_y(x)``.

    Parameters
    ----------
    model : PosteriorModel
    cfg : AdmmConfig, optional
    x0 : ndarray, optional
        Starting point; defaults to the adjoint reconstruction ``A^T y``.

    Returns
    -------
    SolveReport

    Raises
    ------
    ConvergenceError
        When ``cfg.max_iters`` is reached; ``err.report`` holds the last state.
    """
    cfg = cfg or AdmmConfig()
    if x0 is None:
        x0 = _default_x0(model)
    else:
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape != model.shape:
            raise InvalidInputError(f"x0 has shape {x0.shape}, model expects {model.shape}")
        if not np.all(np.isfinite(x0)):
            raise InvalidInputError("x0 contains non-finite values")
    t0 = time.perf_counter()
    eng = _Engine(model, rho=cfg.rho)
    x, zs, ws, it, r_rel, s_rel, ok, trace = eng.run(
        x0, cfg.max_iters, cfg.tol_primal, cfg.tol_dual,
        adapt=cfg.adapt_rho, adapt_every=cfg.adapt_every, record=cfg.record_trace)
    if model.nonneg:
        # the x-iterate satisfies the constraint only up to the primal residual
        x = np.maximum(x, 0.0)
    report = SolveReport(
        x_map=x,
        g_at_map=eval_potential(model, x),
        iterations=it,
        primal_residual=r_rel,
        dual_residual=s_rel,
        objective_trace=np.asarray(trace) if trace is not None else None,
        wall_time_seconds=time.perf_counter() - t0,
        converged=ok,
        rho=eng.rho,
        splits=zs,
        duals=[eng.rho * w for w in ws],
    )
    if not ok:
        raise ConvergenceError(
            f"ADMM did not converge in {cfg.max_iters} iterations "
            f"(primal {r_rel:.3g}, dual {s_rel:.3g})",
            last_iterate=x, residual=max(r_rel, s_rel), report=report)
    return report


def minimize_augmented(model, scale, centre, tol=1e-6, max_iters=2000, rho=None):
    """``argmin_u scale * g(u) + ||u - centre||^2 / 2`` by ADMM started at ``centre``."""
    eng = _Engine(model, scale=scale, weight=1.0, centre=centre, rho=1.0 if rho is None else rho)
    x, _, _, it, r_rel, s_rel, ok, _ = eng.run(centre, max_iters, tol, tol, adapt=True)
    if not ok:
        raise ConvergenceError(
            f"inner prox solver did not converge in {max_iters} iterations",
            last_iterate=x, residual=max(r_rel, s_rel))
    if model.nonneg:
        x = np.maximum(x, 0.0)
    return x


def kkt_check(model, report):
    """Stationarity surrogate built from the ADMM multipliers.

    With ``s_j = rho w_j`` (an exact subgradient of ``h_j`` at ``z_j``) this is
    ``||grad f(x) + sum_j B_j^T s_j|| / (1 + ||sum_j B_j^T s_j||)`` plus the
    relative split gap ``||B x - z|| / (1 + ||z||)``.  Both vanish at a
    solution.  Compare against ``10 * tol_dual * (1 + ||x_map||)``.
    """
    x = report.x_map
    if not report.splits:
        return float("inf")
    splits = _splits_for(model, 1.0)
    lag = 0.0
    gap2 = z2 = 0.0
    for s, z, d in zip(splits, report.splits, report.duals):
        lag = lag + s.adjoint(d)
        diff = s.apply(x) - z
        gap2 += float(np.vdot(diff, diff))
        z2 += float(np.vdot(z, z))
    grad_f = data_gradient(model, x)
    stat = float(np.linalg.norm(grad_f + lag)) / (1.0 + float(np.linalg.norm(lag)))
    return stat + math.sqrt(gap2) / (1.0 + math.sqrt(z2))


def kkt_threshold(report, cfg=None):
    cfg = cfg or AdmmConfig()
    return 10.0 * cfg.tol_dual * (1.0 + float(np.linalg.norm(report.x_map)))
