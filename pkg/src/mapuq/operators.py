"""Linear forward operators for the two imaging problems.

Images are plain 2-D ``float64`` arrays (row-major, ``shape == (height, width)``).
A gradient field is a ``(2, height, width)`` array holding the horizontal
differences in ``[0]`` and the vertical differences in ``[1]``.

All Fourier transforms are unitary (``norm="ortho"``), so ``||dft2(x)|| == ||x||``
and the normal operator of every forward map here is diagonal in the unitary
Fourier basis.  :meth:`LinearOperator.gram_spectrum` exposes that diagonal, which
is what makes the quadratic ADMM step exact.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sp_fft

from .errors import InvalidInputError


@functools.lru_cache(maxsize=1)
def fft_workers():
    """Worker threads for scipy.fft, capped by ``UQ_THREADS`` (default 1)."""
    raw = os.environ.get("UQ_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)


def as_image(x, name="image"):
    """Validate and return ``x`` as a finite 2-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def _check_shape(arr, shape, name):
    if tuple(arr.shape) != tuple(shape):
        raise InvalidInputError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")


# --------------------------------------------------------------------------
# Fourier transform and subsampling
# --------------------------------------------------------------------------


def dft2(img):
    """Unitary 2-D DFT of a real or complex image."""
    arr = np.asarray(img)
    if arr.ndim != 2 or 0 in arr.shape:
        raise InvalidInputError(f"dft2 expects a non-empty 2-D array, got shape {arr.shape}")
    return sp_fft.fft2(arr, norm="ortho", workers=fft_workers())


def idft2(coeffs):
    """Inverse of :func:`dft2` (complex output)."""
    arr = np.asarray(coeffs)
    if arr.ndim != 2 or 0 in arr.shape:
        raise InvalidInputError(f"idft2 expects a non-empty 2-D array, got shape {arr.shape}")
    return sp_fft.ifft2(arr, norm="ortho", workers=fft_workers())


@dataclass(frozen=True)
class SamplingMask:
    """Boolean keep-mask over the (unshifted) 2-D frequency grid.

    ``keep[0, 0]`` is the zero frequency and is always retained.
    """

    keep: np.ndarray

    def __post_init__(self):
        keep = np.asarray(self.keep, dtype=bool)
        if keep.ndim != 2 or 0 in keep.shape:
            raise InvalidInputError("mask must be a non-empty 2-D boolean array")
        keep = keep.copy()
        keep[0, 0] = True
        keep.setflags(write=False)
        object.__setattr__(self, "keep", keep)

    @property
    def shape(self):
        return self.keep.shape

    @property
    def height(self):
        return self.keep.shape[0]

    @property
    def width(self):
        return self.keep.shape[1]

    @property
    def fraction(self):
        return float(self.keep.sum()) / self.keep.size

    def symmetrized(self):
        """``(M(k) + M(-k)) / 2``: the diagonal of ``Re(F^H M F)`` on real images."""
        m = self.keep.astype(np.float64)
        flipped = np.roll(m[::-1, ::-1], shift=(1, 1), axis=(0, 1))
        return 0.5 * (m + flipped)


def radial_mask(shape, lines, seed=None):
    """Pseudo-tomographic mask made of ``lines`` radial lines through DC.

    Lines are equally spaced in angle over ``[0, pi)``; ``seed`` (if given)
    draws a random rotation of the whole pattern.  Each line is point-symmetric
    through the origin, so the mask is conjugate-symmetric.
    """
    h, w = int(shape[0]), int(shape[1])
    if h < 1 or w < 1:
        raise InvalidInputError("mask shape must be positive")
    if int(lines) < 1:
        raise InvalidInputError("radial mask needs at least one line")
    offset = 0.0
    if seed is not None:
        offset = np.random.default_rng(seed).uniform(0.0, np.pi / lines)
    angles = offset + np.pi * np.arange(lines) / lines
    radius = 0.5 * min(h, w)
    r = np.arange(-radius, radius + 0.25, 0.25)
    keep = np.zeros((h, w), dtype=bool)
    for theta in angles:
        rows = np.rint(r * np.sin(theta)).astype(int)
        cols = np.rint(r * np.cos(theta)).astype(int)
        inside = (np.abs(rows) <= h // 2) & (np.abs(cols) <= w // 2)
        keep[rows[inside] % h, cols[inside] % w] = True
    return SamplingMask(keep)


def radial_mask_for_fraction(shape, fraction, seed=None, max_lines=None):
    """Smallest radial mask whose coverage reaches ``fraction``."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidInputError("fraction must lie in (0, 1]")
    max_lines = max_lines or 4 * max(shape)
    for lines in range(1, max_lines + 1):
        mask = radial_mask(shape, lines, seed=seed)
        if mask.fraction >= fraction:
            return mask
    return SamplingMask(np.ones(shape, dtype=bool))


def uniform_mask(shape, fraction, seed=0):
    """Uniform random mask keeping ``round(fraction * n)`` coefficients (DC included)."""
    h, w = int(shape[0]), int(shape[1])
    if not 0.0 < fraction <= 1.0:
        raise InvalidInputError("fraction must lie in (0, 1]")
    n = h * w
    count = max(1, int(round(fraction * n)))
    rng = np.random.default_rng(seed)
    # DC (flat index 0) is forced in, the rest is drawn from the other n - 1 slots
    others = rng.choice(np.arange(1, n), size=count - 1, replace=False)
    flat = np.zeros(n, dtype=bool)
    flat[0] = True
    flat[others] = True
    return SamplingMask(flat.reshape(h, w))


def fourier_subsample(img, mask):
    """``H F x``: unitary DFT with unobserved coefficients set to zero."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise InvalidInputError("fourier_subsample expects a 2-D image")
    _check_shape(arr, mask.shape, "image")
    return dft2(arr) * mask.keep


def fourier_subsample_adjoint(coeffs, mask):
    """Complex adjoint ``F^H H u``."""
    arr = np.asarray(coeffs)
    if arr.ndim != 2:
        raise InvalidInputError("expected 2-D coefficients")
    _check_shape(arr, mask.shape, "coefficients")
    return idft2(arr * mask.keep)


# --------------------------------------------------------------------------
# Convolution
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PointSpreadFunction:
    """Shift-invariant blur kernel; its centre tap sits at ``(kh // 2, kw // 2)``."""

    kernel: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        k = as_image(self.kernel, "psf kernel").copy()
        if self.normalized:
            total = k.sum()
            if total == 0:
                raise InvalidInputError("cannot normalise a kernel with zero sum")
            k = k / total
        k.setflags(write=False)
        object.__setattr__(self, "kernel", k)

    @property
    def shape(self):
        return self.kernel.shape

    def otf(self, shape):
        """Unnormalised DFT of the kernel zero-padded and centred at the origin."""
        kh, kw = self.kernel.shape
        h, w = shape
        if kh > h or kw > w:
            raise InvalidInputError(f"kernel {self.kernel.shape} larger than image {tuple(shape)}")
        padded = np.zeros((h, w))
        padded[:kh, :kw] = self.kernel
        padded = np.roll(padded, shift=(-(kh // 2), -(kw // 2)), axis=(0, 1))
        return sp_fft.fft2(padded, workers=fft_workers())


def gaussian_psf(size=16, width=2.0):
    """Truncated isotropic Gaussian on a ``size x size`` support, normalised to unit sum."""
    if size < 1 or width <= 0:
        raise InvalidInputError("gaussian psf needs size >= 1 and width > 0")
    c = (size - 1) / 2.0 if size % 2 else size // 2
    r = np.arange(size) - c
    g = np.exp(-0.5 * (r / width) ** 2)
    return PointSpreadFunction(np.outer(g, g), normalized=True)


def airy_like_psf(size=16, width=2.0):
    """Squared-sinc (Airy-like ring) profile, normalised to unit sum."""
    if size < 1 or width <= 0:
        raise InvalidInputError("airy-like psf needs size >= 1 and width > 0")
    c = (size - 1) / 2.0 if size % 2 else size // 2
    yy, xx = np.mgrid[0:size, 0:size]
    rho = np.hypot(yy - c, xx - c) / width
    return PointSpreadFunction(np.sinc(rho) ** 2, normalized=True)


def convolve(img, psf):
    """Circular convolution of ``img`` with ``psf`` through the frequency domain."""
    x = as_image(img)
    otf = psf.otf(x.shape)
    return sp_fft.ifft2(sp_fft.fft2(x, workers=fft_workers()) * otf, workers=fft_workers()).real


def convolve_adjoint(img, psf):
    """Adjoint of :func:`convolve`: correlation, i.e. convolution with the flipped kernel."""
    x = as_image(img)
    otf = psf.otf(x.shape)
    return sp_fft.ifft2(sp_fft.fft2(x, workers=fft_workers()) * np.conj(otf), workers=fft_workers()).real


# --------------------------------------------------------------------------
# Discrete gradient (periodic forward differences)
# --------------------------------------------------------------------------


def grad2(img):
    """Periodic forward differences, returned as a ``(2, h, w)`` field."""
    x = np.asarray(img, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError("grad2 expects a 2-D image")
    out = np.empty((2,) + x.shape)
    np.subtract(np.roll(x, -1, axis=1), x, out=out[0])
    np.subtract(np.roll(x, -1, axis=0), x, out=out[1])
    return out


def div2(field):
    """Discrete divergence, ``div2 = -grad2^T``."""
    u = np.asarray(field, dtype=np.float64)
    if u.ndim != 3 or u.shape[0] != 2:
        raise InvalidInputError(f"div2 expects a (2, h, w) field, got shape {u.shape}")
    return (u[0] - np.roll(u[0], 1, axis=1)) + (u[1] - np.roll(u[1], 1, axis=0))


def gradient_spectrum(shape):
    """Eigenvalues of ``grad2^T grad2`` on the unshifted DFT grid."""
    h, w = shape
    ky = 4.0 * np.sin(np.pi * np.arange(h) / h) ** 2
    kx = 4.0 * np.sin(np.pi * np.arange(w) / w) ** 2
    return ky[:, None] + kx[None, :]


# --------------------------------------------------------------------------
# Operator objects
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearOperator:
    """Real-linear map on images with a normal operator diagonal in Fourier space.

    Subclasses implement ``forward``, ``adjoint`` and ``gram_spectrum``.
    ``adjoint`` is taken with respect to the real inner product
    ``Re <u, v>`` on the output space, so it always returns a real image.
    """

    shape: tuple

    def forward(self, x):
        raise NotImplementedError

    def adjoint(self, y):
        raise NotImplementedError

    def gram_spectrum(self):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)


@dataclass(frozen=True)
class Identity(LinearOperator):
    def forward(self, x):
        return np.asarray(x, dtype=np.float64)

    def adjoint(self, y):
        return np.asarray(y, dtype=np.float64)

    def gram_spectrum(self):
        return np.ones(self.shape)


@dataclass(frozen=True)
class FourierSampling(LinearOperator):
    """``x -> H F x`` for a :class:`SamplingMask`."""

    mask: SamplingMask = field(default=None)

    def __post_init__(self):
        if self.mask is None or tuple(self.mask.shape) != tuple(self.shape):
            raise InvalidInputError("FourierSampling needs a mask matching its shape")

    def forward(self, x):
        return fourier_subsample(x, self.mask)

    def adjoint(self, y):
        return fourier_subsample_adjoint(y, self.mask).real

    def gram_spectrum(self):
        return self.mask.symmetrized()


@dataclass(frozen=True)
class Convolution(LinearOperator):
    """Periodic blur by a :class:`PointSpreadFunction`."""

    psf: PointSpreadFunction = field(default=None)

    def __post_init__(self):
        if self.psf is None:
            raise InvalidInputError("Convolution needs a psf")
        object.__setattr__(self, "_otf", self.psf.otf(self.shape))

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        _check_shape(x, self.shape, "image")
        return sp_fft.ifft2(sp_fft.fft2(x, workers=fft_workers()) * self._otf, workers=fft_workers()).real

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        _check_shape(y, self.shape, "image")
        return sp_fft.ifft2(sp_fft.fft2(y, workers=fft_workers()) * np.conj(self._otf),
                            workers=fft_workers()).real

    def gram_spectrum(self):
        return np.abs(self._otf) ** 2


@dataclass(frozen=True)
class Gradient(LinearOperator):
    def forward(self, x):
        return grad2(x)

    def adjoint(self, y):
        return -div2(y)

    def gram_spectrum(self):
        return gradient_spectrum(self.shape)


def operator_norm(op, iters=100, seed=0, shape=None, adjoint=None):
    """Largest singular value by power iteration on ``A^T A``.

    Parameters
    ----------
    op : LinearOperator or callable
        Either an object with ``forward``/``adjoint`` methods or a plain
        callable; a callable needs ``adjoint`` (defaults to ``op`` itself,
        i.e. a self-adjoint map) and ``shape``.
    iters : int
        Number of power iterations, at least 1.
    seed : int
        Seed for the random start vector.
    """
    if iters < 1:
        raise InvalidInputError("iters must be >= 1")
    if hasattr(op, "forward"):
        fwd, adj = op.forward, op.adjoint
        shape = op.shape if shape is None else shape
    else:
        fwd = op
        adj = adjoint if adjoint is not None else op
    if shape is None:
        raise InvalidInputError("shape is required for callable operators")
    x = np.random.default_rng(seed).standard_normal(shape)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iters):
        y = np.real(adj(fwd(x)))
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            return 0.0
        # Rayleigh quotient <x, A^T A x> = ||A x||^2 for unit x
        estimate = float(np.sqrt(max(np.vdot(x, y).real, 0.0)))
        x = y / norm_y
    return estimate
