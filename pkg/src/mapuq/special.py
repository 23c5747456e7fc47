"""Regularised incomplete gamma functions and their inverse.

``P(a, x) = gamma(a, x) / Gamma(a)`` by its power series for ``x < a + 1``
and ``Q = 1 - P`` by Lentz's continued fraction otherwise.  The common
factor ``x^a e^-x / Gamma(a)`` is evaluated through the deviance
``r - 1 - log r`` so that it stays accurate for shapes up to ~1e5.
"""

import math
from statistics import NormalDist

from .errors import InvalidInputError, NumericError

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 100000


def _stirlerr(a):
    """``log Gamma(a + 1) - [(a + 1/2) log a - a + log(2 pi) / 2]``."""
    if a < 15.0:
        return math.lgamma(a + 1.0) - (a + 0.5) * math.log(a) + a - 0.5 * math.log(2.0 * math.pi)
    r = 1.0 / (a * a)
    return (1.0 / 12.0 - r * (1.0 / 360.0 - r * (1.0 / 1260.0 - r / 1680.0))) / a


def _log_prefactor(a, x):
    """``log(x^a e^-x / Gamma(a))`` without catastrophic cancellation."""
    r = x / a
    if abs(r - 1.0) < 0.5:
        dev = (r - 1.0) - math.log1p(r - 1.0)
    else:
        dev = (r - 1.0) - math.log(r)
    return -a * dev + 0.5 * math.log(a) - 0.5 * math.log(2.0 * math.pi) - _stirlerr(a)


def _series(a, x):
    # P(a, x) = e^-x x^a / Gamma(a + 1) * sum_k x^k / ((a+1)...(a+k))
    term = total = 1.0
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if term < total * _EPS:
            return math.exp(_log_prefactor(a, x)) * total / a
    raise NumericError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _continued_fraction(a, x):
    # Q(a, x) = e^-x x^a / Gamma(a) * 1 / (x + 1 - a - 1 (1 - a) / (x + 3 - a - ...))
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(_log_prefactor(a, x)) * h
    raise NumericError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def _check_a(a):
    a = float(a)
    if not (math.isfinite(a) and a > 0):
        raise InvalidInputError("shape a must be positive")
    return a


def gammainc_lower(a, x):
    """Regularised lower incomplete gamma ``P(a, x)``."""
    a = _check_a(a)
    x = float(x)
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _series(a, x))
    return max(0.0, 1.0 - _continued_fraction(a, x))


def gammainc_upper(a, x):
    """Regularised upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    a = _check_a(a)
    x = float(x)
    if x <= 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _series(a, x))
    return min(1.0, _continued_fraction(a, x))


def gamma_density(a, x):
    """Density of Gamma(a, 1) at ``x > 0``."""
    return math.exp(_log_prefactor(a, x)) / x


def _initial_guess(a, p):
    """Wilson-Hilferty approximation to the ``p``-quantile of Gamma(a, 1)."""
    z = NormalDist().inv_cdf(p)
    c = 1.0 / (9.0 * a)
    x = a * (1.0 - c + z * math.sqrt(c)) ** 3
    if x <= 0.0 or a < 1.0:
        # small-x behaviour P(a, x) ~ x^a / Gamma(a + 1)
        small = math.exp((math.log(p) + math.lgamma(a + 1.0)) / a)
        x = small if x <= 0.0 else min(x, max(small, x))
    return x


def gamma_quantile(a, p, tol=1e-10, max_iter=200):
    """``x`` with ``P(a, x) = p``, for Gamma(a, 1).

    Bracketed Newton iteration from a Wilson-Hilferty start.  The smaller of
    the two tails is matched so that upper quantiles keep full accuracy.

    Raises
    ------
    NumericError
        If the iteration does not reach ``|P - p| <= tol``.
    """
    a = _check_a(a)
    p = float(p)
    if not 0.0 < p < 1.0:
        raise InvalidInputError("p must lie in (0, 1)")
    upper = p > 0.5
    target = 1.0 - p if upper else p

    def resid(x):
        # increasing in x in both branches
        return (target - gammainc_upper(a, x)) if upper else (gammainc_lower(a, x) - target)

    x = _initial_guess(a, p)
    lo, hi = 0.0, math.inf
    for _ in range(max_iter):
        f = resid(x)
        if f == 0.0:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        dens = gamma_density(a, x)
        new = x - f / dens if dens > 0 else math.nan
        if not (lo < new < hi):
            new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * x + 1.0
        if abs(new - x) <= 1e-14 * x:
            x = new
            break
        x = new
    if abs(resid(x)) <= tol:
        return x
    raise NumericError(f"gamma quantile inversion did not converge (a={a}, p={p})")


def gamma_upper_quantile(a, alpha):
    """``x`` with ``Q(a, x) = alpha``: the ``(1 - alpha)``-quantile of Gamma(a, 1)."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    return gamma_quantile(a, 1.0 - alpha)
