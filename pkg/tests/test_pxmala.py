import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mapuq.errors import ChainFailureError, InvalidInputError
from mapuq.model import gen_gaussian, l1_deconvolution
from mapuq.pxmala import (
    ChainConfig,
    ChainOutput,
    batch_means_ess,
    estimate_gamma,
    log_proposal_density,
    pxmala_step,
    relative_error,
    run_chain,
    suggest_step,
)
from mapuq.region import build_region


def chain(model, iterations, burn_in=0, seed=0, **kw):
    cfg = ChainConfig(step_delta=kw.pop("step_delta", suggest_step(model)), iterations=iterations,
                      burn_in=burn_in, seed=seed, **kw)
    return run_chain(model, cfg)


def test_tiny_step_always_accepts():
    model = gen_gaussian(20, q=1.0)
    rng = np.random.default_rng(0)
    cfg = ChainConfig(step_delta=1e-10, iterations=1)
    x = rng.normal(size=model.shape)
    accepted = 0
    for _ in range(100):
        x, ok = pxmala_step(model, x, cfg, rng)
        accepted += ok
    assert accepted / 100 >= 0.999


def test_one_dimensional_gaussian_variance():
    # exp(-x^2) has variance 1/2; the chain's estimate must be within 3 standard errors
    model = gen_gaussian(1, q=2.0)
    cfg = ChainConfig(step_delta=0.8, iterations=1)
    rng = np.random.default_rng(1)
    x = np.zeros(model.shape)
    xs = np.empty(100_000)
    for i in range(xs.size):
        x, _ = pxmala_step(model, x, cfg, rng)
        xs[i] = x[0, 0]
    sq = xs ** 2
    se = math.sqrt(sq.var() / batch_means_ess(sq))
    assert abs(sq.mean() - 0.5) <= 3 * se
    assert abs(xs.var() - 0.5) <= 3 * se + abs(xs.mean()) ** 2


@given(st.integers(0, 10_000), st.floats(1e-4, 10.0))
def test_proposal_density_symmetric_in_swap(seed, delta):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, 3, 3))
    ga, gb = rng.normal(size=(2, 3, 3))
    # with zero drift the kernel is symmetric
    zero = np.zeros((3, 3))
    assert log_proposal_density(a, b, zero, delta) == pytest.approx(log_proposal_density(b, a, zero, delta))
    # by hand: -|to - from + delta/2 grad_from|^2 / (2 delta)
    d = b - a + 0.5 * delta * ga
    assert log_proposal_density(b, a, ga, delta) == pytest.approx(-np.sum(d * d) / (2 * delta))
    d = a - b + 0.5 * delta * gb
    assert log_proposal_density(a, b, gb, delta) == pytest.approx(-np.sum(d * d) / (2 * delta))


def test_gaussian_chain_mean_and_acceptance():
    model = gen_gaussian(100, q=2.0)
    out = chain(model, 60_000, burn_in=5_000, seed=3)
    se = out.g_samples.std() / math.sqrt(out.ess_estimate)
    assert abs(out.g_samples.mean() - 50.0) <= 3 * se
    assert 0.3 <= out.acceptance_rate <= 0.7


def test_thinning_count():
    model = gen_gaussian(5, q=1.0)
    for iters, burn, thin in ((100, 0, 1), (101, 10, 3), (50, 49, 7), (1000, 100, 9)):
        out = chain(model, iters, burn_in=burn, thin=thin)
        assert out.g_samples.size == (iters - burn) // thin


def test_reproducible():
    model = gen_gaussian(30, q=1.5)
    a = chain(model, 2000, burn_in=500, seed=11)
    b = chain(model, 2000, burn_in=500, seed=11)
    np.testing.assert_array_equal(a.g_samples, b.g_samples)
    for field in ("acceptance_rate", "ess_estimate", "step_delta", "moreau_lambda", "burn_in_acceptance"):
        assert getattr(a, field) == getattr(b, field)
    c = chain(model, 2000, burn_in=500, seed=12)
    assert not np.array_equal(a.g_samples, c.g_samples)


def test_adaptation_frozen_after_burn_in():
    model = gen_gaussian(10, q=2.0)
    out = chain(model, 500, burn_in=0, step_delta=0.123)
    assert out.step_delta == 0.123
    out = chain(model, 500, burn_in=100, step_delta=0.123, target_acceptance=None)
    assert out.step_delta == 0.123


def test_summary_fields():
    out = chain(gen_gaussian(10, q=2.0), 300, burn_in=100)
    s = out.summary()
    assert s["samples"] == 200 and 0 <= s["acceptance_rate"] <= 1
    assert np.all(np.isfinite(out.g_samples))


def test_imaging_chain_runs_from_map():
    rng = np.random.default_rng(0)
    model = l1_deconvolution(rng.normal(size=(8, 8)), None, 0.5, 2.0)
    out = chain(model, 400, burn_in=100, moreau_lambda=suggest_step(model))
    assert np.all(np.isfinite(out.g_samples)) and 0 < out.acceptance_rate <= 1


def test_nonneg_support_is_respected():
    model = gen_gaussian(4, q=1.0, nonneg=True)
    out = run_chain(model, ChainConfig(step_delta=0.5, iterations=500), x0=np.full(model.shape, 0.5))
    assert np.all(np.isfinite(out.g_samples))


def test_chain_errors():
    model = gen_gaussian(4, q=1.0, nonneg=True)
    with pytest.raises(ChainFailureError):
        run_chain(model, ChainConfig(step_delta=0.1, iterations=10), x0=-np.ones(model.shape))
    with pytest.raises(InvalidInputError):
        run_chain(model, ChainConfig(step_delta=0.1, iterations=10), x0=np.ones((2, 2)))


@pytest.mark.parametrize("kw", [
    {"step_delta": 0.0}, {"step_delta": math.nan}, {"iterations": 0}, {"burn_in": 10},
    {"burn_in": -1}, {"thin": 0}, {"moreau_lambda": -1.0}, {"target_acceptance": 1.0},
])
def test_config_validation(kw):
    base = {"step_delta": 0.1, "iterations": 10}
    base.update(kw)
    with pytest.raises(InvalidInputError):
        ChainConfig(**base)


def test_quantile_examples():
    est = estimate_gamma(np.arange(1, 101, dtype=float), 0.05)
    assert est.gamma_hat == pytest.approx(95.05)
    assert est.mc_std_error >= 0
    assert "warning" in est.method  # 100 samples < 100 / 0.05
    g = np.random.default_rng(0).normal(size=5000)
    assert estimate_gamma(g, 1 - 1e-12).gamma_hat == pytest.approx(g.min(), abs=1e-6)
    assert "warning" not in estimate_gamma(g, 0.05).method
    with pytest.raises(InvalidInputError):
        estimate_gamma(g, 0.0)
    with pytest.raises(InvalidInputError):
        estimate_gamma(np.array([]), 0.1)


def test_quantile_accepts_chain_output():
    out = ChainOutput(np.arange(1, 101, dtype=float), 0.5, 100.0, 0)
    assert estimate_gamma(out, 0.05).gamma_hat == pytest.approx(95.05)


def test_relative_error():
    est = estimate_gamma(np.arange(1, 101, dtype=float), 0.05)
    assert relative_error(est.gamma_hat, est) == 0.0
    r = build_region(0.05, 100, 0.0)
    assert relative_error(r, est) == pytest.approx((r.gamma_tilde - est.gamma_hat) / est.gamma_hat)
    bad = estimate_gamma(-np.arange(1, 101, dtype=float), 0.05)
    with pytest.raises(InvalidInputError):
        relative_error(r, bad)


def test_ess_bounds():
    rng = np.random.default_rng(0)
    iid = rng.normal(size=10_000)
    assert 0.5 * iid.size < batch_means_ess(iid) <= iid.size
    walk = np.cumsum(iid)
    assert batch_means_ess(walk) < 0.05 * walk.size
    assert batch_means_ess(np.ones(100)) == 100


@pytest.mark.parametrize("tau", [0.5, 1.0])
@pytest.mark.parametrize("n", [100, 1000])
def test_concentration_bound(tau, n):
    model = gen_gaussian(n, q=1.0)
    out = chain(model, 30_000, burn_in=3_000, seed=5)
    g = out.g_samples
    frac = float(np.mean(np.abs(g - g.mean()) >= tau * n))
    bound = 3 * math.exp(-tau ** 2 * n / 16)
    allowance = 3 * math.sqrt(max(bound * (1 - bound), 1 / g.size) / out.ess_estimate)
    assert frac <= bound + allowance


def test_quantile_spread_shrinks_with_n():
    spreads = []
    for n in (100, 1000, 10_000):
        out = chain(gen_gaussian(n, q=2.0), 6000, burn_in=2000, seed=9)
        spreads.append((estimate_gamma(out, 0.01).gamma_hat - estimate_gamma(out, 0.99).gamma_hat) / n)
    assert spreads[0] > spreads[1] > spreads[2]


def test_suggestions_positive():
    assert suggest_step(gen_gaussian(100, q=1.0)) > 0
    model = l1_deconvolution(np.zeros((8, 8)), None, 0.5, 2.0)
    assert suggest_step(model) == pytest.approx(0.25 * 64 ** (-1 / 3))
