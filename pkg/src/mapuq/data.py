"""Synthetic test data: Shepp-Logan phantom, sparse point scenes, noisy observations."""

import numpy as np

from .errors import InvalidInputError
from .model import Kind, PosteriorModel
from .operators import as_image

# Modified (high-contrast) Shepp-Logan table:
# (intensity, semi-axis a, semi-axis b, centre x, centre y, rotation in degrees)
SHEPP_LOGAN = (
    (1.0, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.8, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.1, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.1, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.1, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.1, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)

# the three small bright spots near the bottom of the phantom
THREE_SPOTS = (7, 8, 9)

_SUPERSAMPLE = 4


def _coords(size, oversample=1):
    """Pixel (sub)sample centres in [-1, 1]; rows run from y = +1 (top) downwards."""
    m = size * oversample
    t = (np.arange(m) + 0.5) / m * 2.0 - 1.0
    x = t[None, :]
    y = -t[:, None]
    return x, y


def _ellipse(x, y, a, b, x0, y0, phi_deg):
    phi = np.deg2rad(phi_deg)
    c, s = np.cos(phi), np.sin(phi)
    xr = (x - x0) * c + (y - y0) * s
    yr = -(x - x0) * s + (y - y0) * c
    return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0


def _render(size, ellipses, oversample):
    x, y = _coords(size, oversample)
    img = np.zeros((size * oversample, size * oversample))
    for value, a, b, x0, y0, phi in ellipses:
        img += value * _ellipse(x, y, a, b, x0, y0, phi)
    if oversample > 1:
        img = img.reshape(size, oversample, size, oversample).mean(axis=(1, 3))
    return img


def make_phantom(size=64):
    """Shepp-Logan phantom on ``size x size`` pixels, intensities in [0, 1].

    Each pixel is the average over a 4x4 grid of sub-samples, which keeps the
    small features visible at low resolution.
    """
    size = int(size)
    if size < 32:
        raise InvalidInputError("phantom size must be >= 32")
    return np.clip(_render(size, SHEPP_LOGAN, _SUPERSAMPLE), 0.0, 1.0)


def phantom_feature_mask(size, features=THREE_SPOTS, dilate=0):
    """Boolean mask of pixels touched by the selected phantom ellipses."""
    chosen = [(1.0,) + SHEPP_LOGAN[i][1:] for i in features]
    cover = _render(int(size), chosen, _SUPERSAMPLE) > 0
    if dilate:
        from scipy import ndimage

        cover = ndimage.binary_dilation(cover, iterations=int(dilate))
    return cover


def feature_centre(size, features=THREE_SPOTS):
    """Centre of the selected ellipses in (row, col) pixel coordinates."""
    xs = np.mean([SHEPP_LOGAN[i][3] for i in features])
    ys = np.mean([SHEPP_LOGAN[i][4] for i in features])
    col = (xs + 1.0) / 2.0 * size - 0.5
    row = (1.0 - ys) / 2.0 * size - 0.5
    return float(row), float(col)


def make_sparse_scene(size, n_sources, seed=0):
    """``n_sources`` unit impulses at distinct, uniformly drawn pixels."""
    size, n_sources = int(size), int(n_sources)
    if size < 1:
        raise InvalidInputError("size must be positive")
    if n_sources < 0 or n_sources >= size * size:
        raise InvalidInputError("n_sources must lie in [0, size^2)")
    img = np.zeros(size * size)
    if n_sources:
        idx = np.random.default_rng(seed).choice(size * size, size=n_sources, replace=False)
        img[idx] = 1.0
    return img.reshape(size, size)


def sigma_for_snr(clean, snr_db):
    """Noise level giving ``10 log10(mean |clean|^2 / sigma^2) = snr_db``."""
    power = float(np.mean(np.abs(np.asarray(clean)) ** 2))
    return float(np.sqrt(power / 10.0 ** (snr_db / 10.0)))


def simulate_observation(truth, model, seed=0, sigma=None):
    """Apply ``model.forward`` to ``truth`` and add seeded Gaussian noise.

    ``sigma`` defaults to ``model.sigma``; ``sigma=0`` gives noiseless data.
    For Fourier data the noise is circular complex Gaussian on the kept
    coefficients with ``E|w|^2 = sigma^2``.

    Returns
    -------
    observation : ndarray
    info : dict
        Realised noise statistics (``sigma``, ``noise_std``, ``snr_db``).
    """
    truth = as_image(truth, "truth")
    if model.kind is Kind.GEN_GAUSSIAN:
        raise InvalidInputError("the generalised-Gaussian family has no observation model")
    if truth.shape != model.shape:
        raise InvalidInputError("truth shape does not match the model")
    sigma = model.sigma if sigma is None else float(sigma)
    if sigma < 0:
        raise InvalidInputError("sigma must be >= 0")
    clean = model.forward.forward(truth)
    rng = np.random.default_rng(seed)
    if model.kind is Kind.TV_TOMOGRAPHY:
        keep = model.forward.mask.keep
        noise = (rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape))
        noise *= sigma / np.sqrt(2.0)
        noise *= keep
        obs = clean + noise
        kept = noise[keep]
        signal = clean[keep]
    else:
        noise = sigma * rng.standard_normal(clean.shape)
        obs = clean + noise
        kept = noise.ravel()
        signal = clean.ravel()
    noise_std = float(np.sqrt(np.mean(np.abs(kept) ** 2)))
    sig_pow = float(np.mean(np.abs(signal) ** 2))
    snr = 10.0 * np.log10(sig_pow / noise_std ** 2) if noise_std > 0 else float("inf")
    return obs, {"sigma": sigma, "noise_std": noise_std, "snr_db": float(snr)}


def with_observation(model, observation):
    """Copy of ``model`` holding a new observation."""
    return PosteriorModel(model.kind, model.shape, model.forward, observation,
                          model.sigma, model.lam, model.nonneg, model.q, dict(model.meta))
