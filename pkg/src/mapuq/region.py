"""Conservative HPD-region approximation, error bands and knockout tests.

The region is ``{x : g(x) <= gamma_tilde}`` with

    tau_alpha   = sqrt(16 log(3 / alpha) / n)
    gamma_tilde = g(x_MAP) + n (tau_alpha + 1)

and it contains the exact ``(1 - alpha)`` HPD region of any log-concave
posterior ``exp(-g)`` on ``R^n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateSweepError, InvalidInputError
from .model import eval_potential


class RegionValidityWarning(UserWarning):
    """alpha lies outside the range where the bound is guaranteed."""


def _check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def _check_n(n):
    if int(n) != n or n < 1:
        raise InvalidInputError("n must be a positive integer")
    return int(n)


def tau_alpha(alpha, n):
    return math.sqrt(16.0 * math.log(3.0 / _check_alpha(alpha)) / _check_n(n))


def eta_alpha(alpha):
    alpha = _check_alpha(alpha)
    return math.sqrt(16.0 * math.log(3.0 / alpha)) + math.sqrt(1.0 / alpha)


@dataclass(frozen=True)
class CredibleRegion:
    """``{x : g(x) <= gamma_tilde}``.

    ``alpha_valid`` is ``alpha > 4 exp(-n/3)``.  ``tau_in_range`` is
    ``tau_alpha <= 2``, the range of the concentration inequality behind the
    bound; the two conditions are reported separately.
    """

    alpha: float
    n: int
    g_at_map: float
    tau_alpha: float
    gamma_tilde: float
    alpha_valid: bool
    tau_in_range: bool = True

    def as_dict(self):
        return {"alpha": self.alpha, "n": self.n, "g_at_map": self.g_at_map,
                "tau_alpha": self.tau_alpha, "gamma_tilde": self.gamma_tilde,
                "alpha_valid": self.alpha_valid, "tau_in_range": self.tau_in_range}


@dataclass(frozen=True)
class ErrorBand:
    """``0 <= gamma_tilde - gamma_alpha <= eta_alpha sqrt(n) + n``."""

    eta_alpha: float
    lower: float
    upper: float


@dataclass(frozen=True)
class TestOutcome:
    surrogate_g: float
    threshold: float
    rejected: bool
    alpha: float
    margin: float
    verdict: str = ""

    __test__ = False  # not a pytest class

    def as_dict(self):
        return {"surrogate_g": self.surrogate_g, "threshold": self.threshold,
                "rejected": self.rejected, "alpha": self.alpha, "margin": self.margin,
                "verdict": self.verdict}


@dataclass(frozen=True)
class SweepResult:
    parameter_name: str
    lower_bound: float
    upper_bound: float
    evaluations: int
    boundary_tolerance: float
    lower_hit_limit: bool = False
    upper_hit_limit: bool = False

    def as_dict(self):
        return {"parameter_name": self.parameter_name, "lower_bound": self.lower_bound,
                "upper_bound": self.upper_bound, "evaluations": self.evaluations,
                "boundary_tolerance": self.boundary_tolerance,
                "lower_hit_limit": self.lower_hit_limit, "upper_hit_limit": self.upper_hit_limit}


def build_region(alpha, n, g_at_map, warn=True):
    """Build the region for level ``alpha`` around a MAP value.

    An ``alpha`` outside the guaranteed range still gives a region, but the
    flags are cleared and a :class:`RegionValidityWarning` is issued.
    """
    alpha = _check_alpha(alpha)
    n = _check_n(n)
    g_at_map = float(g_at_map)
    if not math.isfinite(g_at_map):
        raise InvalidInputError("g_at_map must be finite")
    tau = tau_alpha(alpha, n)
    gamma = g_at_map + n * (tau + 1.0)
    # 4 exp(-n/3) underflows to 0 for large n, which is the right answer
    valid = alpha > 4.0 * math.exp(-n / 3.0)
    in_range = tau <= 2.0
    if warn and not (valid and in_range):
        warnings.warn(f"alpha={alpha} is outside the guaranteed range for n={n} "
                      f"(alpha_valid={valid}, tau_alpha={tau:.3g})", RegionValidityWarning,
                      stacklevel=2)
    return CredibleRegion(alpha, n, g_at_map, tau, gamma, valid, in_range)


def error_band(alpha, n):
    """Band bounding the gap between ``gamma_tilde`` and the exact threshold."""
    eta = eta_alpha(alpha)
    n = _check_n(n)
    return ErrorBand(eta, 0.0, eta * math.sqrt(n) + n)


def _outcome(region, g):
    rejected = bool(g > region.gamma_tilde)  # ties count as members; inf is rejected
    if rejected:
        verdict = f"reject at {100 * (1 - region.alpha):g}% confidence"
    else:
        verdict = "fail to reject"
    return TestOutcome(float(g), region.gamma_tilde, rejected, region.alpha,
                       float(g - region.gamma_tilde), verdict)


def is_member(region, model, x):
    """Evaluate ``g`` at ``x`` and compare with ``gamma_tilde``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.shape:
        raise InvalidInputError(f"x has shape {x.shape}, model expects {model.shape}")
    if model.n != region.n:
        raise InvalidInputError("region and model dimensions differ")
    return _outcome(region, eval_potential(model, x).total)


def knockout_test(region, model, surrogate):
    """Test whether a surrogate without some feature is compatible with the data.

    Rejection means the feature is supported by the data at level
    ``1 - alpha``.  The region is a joint statement on all ``n`` pixels, so
    applied to a handful of pixels the test is conservative.
    """
    return is_member(region, model, surrogate)


def scalar_sweep(region, model, family, lo, hi, theta0=0.0, tol=1e-3, max_steps=60,
                 name="theta"):
    """Widest interval around ``theta0`` whose surrogates stay in the region.

    ``family(theta)`` returns a surrogate image.  Each side is located by
    bisection between the last member and first non-member found on a
    doubling search from ``theta0`` towards ``lo`` / ``hi``; a side that never
    exits returns the search limit.  Membership is assumed monotone on each
    side and checked at the returned bounds.

    Raises
    ------
    InvalidInputError
        If ``family(theta0)`` is already outside the region.
    DegenerateSweepError
        If a returned bound is not a member or the point ``tol`` beyond it is
        (inside the search limits).
    """
    lo, hi, theta0 = float(lo), float(hi), float(theta0)
    if not lo <= theta0 <= hi:
        raise InvalidInputError("theta0 must lie in [lo, hi]")
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    count = 0

    def inside(theta):
        nonlocal count
        count += 1
        return not is_member(region, model, family(theta)).rejected

    if not inside(theta0):
        raise InvalidInputError("the sweep start point is outside the region")

    def side(limit):
        sign = 1.0 if limit >= theta0 else -1.0
        span = abs(limit - theta0)
        if span == 0.0:
            return theta0, True
        good, step = 0.0, min(span, max(tol, span / 64.0))
        bad = None
        while True:
            if inside(theta0 + sign * step):
                good = step
                if step >= span:
                    return limit, True
                step = min(2.0 * step, span)
            else:
                bad = step
                break
        for _ in range(max_steps):
            if bad - good <= tol:
                break
            mid = 0.5 * (good + bad)
            if inside(theta0 + sign * mid):
                good = mid
            else:
                bad = mid
        return theta0 + sign * good, False

    lower, lo_lim = side(lo)
    upper, hi_lim = side(hi)
    for bound, at_limit, beyond in ((lower, lo_lim, lower - tol), (upper, hi_lim, upper + tol)):
        if not inside(bound):
            raise DegenerateSweepError(f"sweep bound {bound} is not inside the region")
        if not at_limit and lo <= beyond <= hi and inside(beyond):
            raise DegenerateSweepError(
                f"membership is not monotone near {bound}: {beyond} is inside as well")
    return SweepResult(name, lower, upper, count, tol, lo_lim, hi_lim)


# surrogate helpers


def _roi_mask(shape, roi):
    if roi is None:
        return np.ones(shape, dtype=bool)
    roi = np.asarray(roi)
    if roi.dtype == bool:
        if roi.shape != tuple(shape):
            raise InvalidInputError("ROI mask shape does not match the image")
        return roi
    c0, r0, w, h = (int(v) for v in roi)  # x, y, width, height
    if w < 1 or h < 1 or r0 < 0 or c0 < 0 or r0 + h > shape[0] or c0 + w > shape[1]:
        raise InvalidInputError(f"ROI {tuple(roi)} does not fit in image {shape}")
    mask = np.zeros(shape, dtype=bool)
    mask[r0:r0 + h, c0:c0 + w] = True
    return mask


def disk_mask(shape, centre, radius):
    """Pixels within ``radius`` of ``centre = (row, col)``."""
    rr, cc = np.indices(shape)
    return (rr - centre[0]) ** 2 + (cc - centre[1]) ** 2 <= radius ** 2


def fill_region(image, mask, value=None, ring=2):
    """Replace ``image[mask]`` by a constant.

    The default constant is the median of the ``ring``-pixel band around the
    mask, i.e. the local background.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != image.shape:
        raise InvalidInputError("mask shape does not match the image")
    out = image.copy()
    if not mask.any():
        return out
    if value is None:
        band = ndimage.binary_dilation(mask, iterations=int(ring)) & ~mask
        value = float(np.median(image[band])) if band.any() else 0.0
    out[mask] = value
    return out


def fill_disk(image, centre, radius, value=None, ring=2):
    """Constant fill of a disk (by default with the surrounding median)."""
    image = np.asarray(image, dtype=np.float64)
    return fill_region(image, disk_mask(image.shape, centre, radius), value, ring)


def translate_region(image, roi, shift, fill=None):
    """Move the content of ``roi`` by ``shift = (drow, dcol)`` pixels.

    The ROI is cut out (filled with ``fill``, default its surrounding median),
    shifted with linear interpolation and periodic wrap, and added back.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = _roi_mask(image.shape, roi)
    base = fill_region(image, mask, fill)
    level = base[mask][0] if mask.any() else 0.0
    patch = np.where(mask, image - level, 0.0)
    moved = ndimage.shift(patch, shift, order=1, mode="grid-wrap")
    return base + moved


def intensity_family(image, roi):
    """``theta -> surrogate`` with the ROI set to the constant ``theta``."""
    image = np.asarray(image, dtype=np.float64)
    mask = _roi_mask(image.shape, roi)

    def family(theta):
        out = image.copy()
        out[mask] = theta
        return out

    return family


def shift_family(image, roi, axis):
    """``theta -> surrogate`` with the ROI content moved ``theta`` pixels along ``axis``."""
    if axis not in (0, 1):
        raise InvalidInputError("axis must be 0 (rows) or 1 (columns)")
    image = np.asarray(image, dtype=np.float64)
    mask = _roi_mask(image.shape, roi)

    def family(theta):
        shift = (theta, 0.0) if axis == 0 else (0.0, theta)
        return translate_region(image, mask, shift)

    return family


def densest_window(image, size):
    """``(x, y, w, h)`` of the ``size x size`` window with the largest ``sum |image|``."""
    a = np.abs(np.asarray(image, dtype=np.float64))
    h, w = a.shape
    if not 1 <= size <= min(h, w):
        raise InvalidInputError("window size must fit in the image")
    s = np.pad(a.cumsum(0).cumsum(1), ((1, 0), (1, 0)))
    tot = s[size:, size:] - s[:-size, size:] - s[size:, :-size] + s[:-size, :-size]
    r, c = np.unravel_index(int(np.argmax(tot)), tot.shape)
    return int(c), int(r), int(size), int(size)
