"""Convex posterior potentials ``g_y(x) = data(x) + lam * reg(x) (+ indicator)``.

Three families are supported:

``TV_TOMOGRAPHY``
    ``||y - H F x||^2 / (2 sigma^2) + lam * sum_pixels |grad x|`` with complex
    Fourier data ``y`` on the kept coefficients of a sampling mask.
``L1_DECONVOLUTION``
    ``||y - A x||^2 / (2 sigma^2) + lam * ||x||_1`` with ``A`` a periodic blur
    (or the identity).  ``observation=None`` drops the data term.
``GEN_GAUSSIAN``
    ``lam * sum |x_i|^q``, the iid generalised-Gaussian test family.

The normalising constant of ``exp(-g)`` is never needed and never computed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidInputError
from .operators import (
    Convolution,
    FourierSampling,
    Identity,
    LinearOperator,
    PointSpreadFunction,
    SamplingMask,
    grad2,
)


class Kind(str, enum.Enum):
    TV_TOMOGRAPHY = "tv_tomography"
    L1_DECONVOLUTION = "l1_deconvolution"
    GEN_GAUSSIAN = "gen_gaussian"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"tv": cls.TV_TOMOGRAPHY, "mri": cls.TV_TOMOGRAPHY, "tomography": cls.TV_TOMOGRAPHY,
                   "l1": cls.L1_DECONVOLUTION, "deconv": cls.L1_DECONVOLUTION,
                   "deconvolution": cls.L1_DECONVOLUTION, "gengaussian": cls.GEN_GAUSSIAN}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise InvalidInputError(f"unknown model kind {value!r}") from None


@dataclass(frozen=True)
class PotentialValue:
    total: float
    data_term: float
    reg_term: float
    feasible: bool


@dataclass(frozen=True, eq=False)
class PosteriorModel:
    """Immutable description of a log-concave posterior ``exp(-g_y)``.

    Use the :func:`tv_tomography`, :func:`l1_deconvolution` and
    :func:`gen_gaussian` constructors rather than building this directly.
    """

    kind: Kind
    shape: tuple
    forward: LinearOperator | None = None
    observation: np.ndarray | None = None
    sigma: float = 1.0
    lam: float = 1.0
    nonneg: bool = False
    q: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise InvalidInputError(f"invalid image shape {self.shape}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidInputError("sigma must be positive")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidInputError("lambda must be positive")
        if self.kind is Kind.GEN_GAUSSIAN:
            if not self.q >= 1:
                raise InvalidInputError("q must be >= 1")
            return
        if self.forward is None:
            raise InvalidInputError(f"{self.kind.value} model needs a forward operator")
        if tuple(self.forward.shape) != self.shape:
            raise InvalidInputError("forward operator shape does not match the image shape")
        if self.kind is Kind.TV_TOMOGRAPHY and self.observation is None:
            raise InvalidInputError("tomography model needs an observation")
        if self.observation is not None:
            obs = np.asarray(self.observation)
            if obs.shape != self.shape:
                raise InvalidInputError(f"observation shape {obs.shape} != image shape {self.shape}")
            if not np.all(np.isfinite(obs)):
                raise InvalidInputError("observation contains non-finite values")
            if self.kind is Kind.TV_TOMOGRAPHY:
                # unobserved coefficients carry no information; zero them
                obs = np.asarray(obs, dtype=np.complex128) * self.forward.mask.keep
            else:
                if np.iscomplexobj(obs):
                    raise InvalidInputError("deconvolution observation must be real")
                obs = np.asarray(obs, dtype=np.float64)
            obs.setflags(write=False)
            object.__setattr__(self, "observation", obs)

    @property
    def n(self):
        return self.shape[0] * self.shape[1]

    @property
    def has_data(self):
        return self.kind is not Kind.GEN_GAUSSIAN and self.observation is not None

    @cached_property
    def adjoint_observation(self):
        """``A^T y`` (real image), zero when there is no data term."""
        if not self.has_data:
            return np.zeros(self.shape)
        return self.forward.adjoint(self.observation)

    @cached_property
    def data_spectrum(self):
        """Diagonal of ``A^T A`` in the unitary DFT basis (zeros without data)."""
        if not self.has_data:
            return np.zeros(self.shape)
        return self.forward.gram_spectrum()

    def replace(self, **changes):
        """Copy with some fields changed (caches are not carried over)."""
        params = {f: getattr(self, f) for f in
                  ("kind", "shape", "forward", "observation", "sigma", "lam", "nonneg", "q", "meta")}
        params.update(changes)
        return PosteriorModel(**params)


def tv_tomography(observation, mask, sigma, lam, nonneg=False):
    if not isinstance(mask, SamplingMask):
        mask = SamplingMask(mask)
    return PosteriorModel(Kind.TV_TOMOGRAPHY, mask.shape, FourierSampling(mask.shape, mask),
                          observation, sigma, lam, nonneg)


def l1_deconvolution(observation, psf, sigma, lam, nonneg=False, shape=None):
    """Sparse deconvolution model; ``psf=None`` means the identity forward map."""
    if shape is None:
        if observation is None:
            raise InvalidInputError("shape is required when there is no observation")
        shape = np.asarray(observation).shape
    if psf is None:
        forward = Identity(tuple(shape))
    elif isinstance(psf, LinearOperator):
        forward = psf
    else:
        if not isinstance(psf, PointSpreadFunction):
            psf = PointSpreadFunction(psf)
        forward = Convolution(tuple(shape), psf)
    return PosteriorModel(Kind.L1_DECONVOLUTION, shape, forward, observation, sigma, lam, nonneg)


def gen_gaussian(n, q=2.0, lam=1.0, shape=None, nonneg=False):
    """``lam * sum |x_i|^q`` on ``n`` pixels (laid out as a ``1 x n`` image by default)."""
    shape = (1, int(n)) if shape is None else tuple(shape)
    if shape[0] * shape[1] != int(n):
        raise InvalidInputError("shape does not match n")
    return PosteriorModel(Kind.GEN_GAUSSIAN, shape, None, None, 1.0, lam, nonneg, q)


def _check_point(model, x):
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != model.shape:
        raise InvalidInputError(f"x has shape {arr.shape}, model expects {model.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("x contains non-finite values")
    return arr


def data_misfit(model, x):
    """``||y - A x||^2 / (2 sigma^2)`` over observed entries (0 without data)."""
    if not model.has_data:
        return 0.0
    resid = model.observation - model.forward.forward(x)
    return float(np.vdot(resid, resid).real) / (2.0 * model.sigma ** 2)


def regulariser(model, x):
    if model.kind is Kind.TV_TOMOGRAPHY:
        d = grad2(x)
        return float(np.sqrt(d[0] ** 2 + d[1] ** 2).sum())
    if model.kind is Kind.L1_DECONVOLUTION:
        return float(np.abs(x).sum())
    q = model.q
    a = np.abs(x)
    if q == 1:
        return float(a.sum())
    if q == 2:
        return float(np.vdot(a, a))
    return float((a ** q).sum())


def eval_potential(model, x):
    """Evaluate ``g_y`` at ``x``; infeasible points get ``total = +inf``."""
    x = _check_point(model, x)
    data = data_misfit(model, x)
    reg = regulariser(model, x)
    feasible = not model.nonneg or bool(x.min() >= 0.0)
    total = data + model.lam * reg if feasible else float("inf")
    return PotentialValue(total, data, reg, feasible)


def potential(model, x):
    """Shorthand for ``eval_potential(model, x).total``."""
    return eval_potential(model, x).total


def data_gradient(model, x):
    """Gradient of the data term, ``A^T (A x - y) / sigma^2``."""
    if not model.has_data:
        return np.zeros(model.shape)
    return (model.forward.adjoint(model.forward.forward(x)) - model.adjoint_observation) / model.sigma ** 2


def log_concavity_gap_check(model, x1, x2, t):
    """``g(t x1 + (1-t) x2) - t g(x1) - (1-t) g(x2)``; non-positive for convex ``g``."""
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError("t must lie in [0, 1]")
    x1 = _check_point(model, x1)
    x2 = _check_point(model, x2)
    g1 = potential(model, x1)
    g2 = potential(model, x2)
    if t == 0.0:
        return 0.0 if np.isfinite(g2) else float("nan")
    if t == 1.0:
        return 0.0 if np.isfinite(g1) else float("nan")
    gm = potential(model, t * x1 + (1.0 - t) * x2)
    return gm - t * g1 - (1.0 - t) * g2


def convexity_tolerance(model, x1, x2):
    return 1e-9 * (1.0 + abs(potential(model, x1)) + abs(potential(model, x2)))
