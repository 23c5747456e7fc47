import numpy as np
import pytest

from mapuq.data import (
    THREE_SPOTS,
    feature_centre,
    make_phantom,
    make_sparse_scene,
    phantom_feature_mask,
    sigma_for_snr,
    simulate_observation,
)
from mapuq.errors import InvalidInputError
from mapuq.model import eval_potential, l1_deconvolution, tv_tomography
from mapuq.operators import gaussian_psf, radial_mask


def test_phantom_basic_properties():
    p = make_phantom(128)
    assert p.shape == (128, 128)
    assert p.min() >= 0.0 and p.max() <= 1.0
    for corner in (p[0, 0], p[0, -1], p[-1, 0], p[-1, -1], p[64, 0]):
        assert corner == 0.0
    np.testing.assert_array_equal(p, make_phantom(128))
    assert abs(make_phantom(64).mean() - p.mean()) < 0.01
    with pytest.raises(InvalidInputError):
        make_phantom(16)


def test_three_spots_are_brighter_than_background():
    p = make_phantom(64)
    spots = phantom_feature_mask(64, THREE_SPOTS)
    assert spots.sum() > 0
    assert p[spots].mean() > 0.2
    r, c = feature_centre(64)
    assert 45 < r < 55 and 28 < c < 35


def test_sparse_scene():
    assert not make_sparse_scene(32, 0).any()
    s = make_sparse_scene(256, 100, seed=5)
    assert np.count_nonzero(s) == 100 and s.max() == 1.0
    np.testing.assert_array_equal(s, make_sparse_scene(256, 100, seed=5))
    assert not np.array_equal(s, make_sparse_scene(256, 100, seed=6))


def test_noiseless_observation():
    x = make_phantom(32)
    tmpl = tv_tomography(np.zeros((32, 32), complex), radial_mask((32, 32), 8), 0.1, 1.0)
    y, info = simulate_observation(x, tmpl, seed=0, sigma=0.0)
    m = tmpl.replace(observation=y)
    assert eval_potential(m, x).data_term == 0.0
    assert info["snr_db"] == float("inf")


def test_noise_level_and_reproducibility():
    x = make_phantom(128)
    tmpl = tv_tomography(np.zeros((128, 128), complex), radial_mask((128, 128), 30), 0.05, 1.0)
    y1, info = simulate_observation(x, tmpl, seed=3)
    y2, _ = simulate_observation(x, tmpl, seed=3)
    np.testing.assert_array_equal(y1, y2)
    assert abs(info["noise_std"] / 0.05 - 1.0) < 0.05
    assert np.all(y1[~tmpl.forward.mask.keep] == 0)


def test_snr_definition():
    x = make_sparse_scene(64, 20, seed=0)
    tmpl = l1_deconvolution(None, gaussian_psf(16, 2.0), 1.0, 1.0, shape=(64, 64))
    clean = tmpl.forward.forward(x)
    sigma = sigma_for_snr(clean, 20.0)
    assert 10 * np.log10(np.mean(clean ** 2) / sigma ** 2) == pytest.approx(20.0)
    _, info = simulate_observation(x, tmpl.replace(sigma=sigma), seed=1)
    assert abs(info["snr_db"] - 20.0) < 0.5
