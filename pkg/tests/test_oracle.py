import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrvi.core import StaleCacheError
from vrvi.oracle import (
    CallCounter, ComponentFamily, NoiseModel, compute_theory_constants, eval_component_noisy, make_streams,
    refresh_snapshot, sample_component, unit_sphere, vr_estimate,
)


def linear_family(coeffs, lips=None):
    return ComponentFamily([(lambda x, c=c: c * x) for c in coeffs], lips or [abs(c) for c in coeffs])


def test_sampling_frequencies_chi_square():
    from scipy.stats import chisquare

    fam = linear_family([1.0, 3.0])
    rng = np.random.default_rng(0)
    N = 100_000
    counts = np.bincount([sample_component(fam, rng) for _ in range(N)], minlength=2)
    assert abs(counts[0] / N - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / N)
    assert chisquare(counts, N * fam.probs).pvalue > 1e-3


def test_sampling_trivial_cases():
    rng = np.random.default_rng(1)
    assert {sample_component(linear_family([5.0]), rng) for _ in range(50)} == {0}
    np.testing.assert_allclose(linear_family([2.0, 2.0, 2.0]).probs, [1 / 3] * 3)
    with pytest.raises(ValueError):
        sample_component(ComponentFamily([], []), rng)


def test_family_validation():
    with pytest.raises(ValueError):
        ComponentFamily([lambda x: x], [0.0])
    with pytest.raises(ValueError):
        ComponentFamily([lambda x: x], [1.0, 2.0])


def test_noiseless_passthrough_and_counting():
    fam = linear_family([2.0])
    c = CallCounter()
    out = eval_component_noisy(fam, NoiseModel.exact(), 0, np.array([1.0, 0.0]), np.random.default_rng(0), c)
    np.testing.assert_array_equal(out, [2.0, 0.0])
    assert c.h == 1 and c.total == 1
    with pytest.raises(IndexError):
        eval_component_noisy(fam, None, 3, np.zeros(2), None)


def test_bias_only_noise_has_bias_norm():
    fam = linear_family([1.0, 2.0])
    nm = NoiseModel.for_family(fam, 3, bias_norm=0.4, std=0.0, stream=5)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(3)
    for i in range(2):
        d = eval_component_noisy(fam, nm, i, x, rng) - fam.eval(i, x)
        assert np.linalg.norm(d) == pytest.approx(0.4, abs=1e-12)


def test_noise_variance_monte_carlo():
    fam = linear_family([1.0])
    nm = NoiseModel.for_family(fam, 4, std=1.0)
    rng = np.random.default_rng(2)
    x = np.ones(4)
    N = 100_000
    d = np.array([eval_component_noisy(fam, nm, 0, x, rng) for _ in range(N)]) - x
    v = float(np.mean(np.sum(d * d, axis=1)))
    assert 0.95 <= v <= 1.05
    assert np.linalg.norm(d.mean(axis=0)) <= 4 / math.sqrt(N) * 1.0 * 2


def test_vr_hand_example():
    fam = linear_family([1.0, 2.0])
    rng = np.random.default_rng(0)
    cache = refresh_snapshot(fam, None, np.zeros(1), rng)
    for i in (0, 1):
        assert vr_estimate(cache, fam, None, i, np.ones(1), rng)[0] == pytest.approx(3.0, abs=1e-15)
    np.testing.assert_array_equal(vr_estimate(cache, fam, None, 1, np.zeros(1), rng), cache.full_sum)


def test_stale_cache_rejected():
    fam = linear_family([1.0, 2.0])
    rng = np.random.default_rng(0)
    cache = refresh_snapshot(fam, None, np.zeros(1), rng)
    with pytest.raises(StaleCacheError):
        vr_estimate(cache, fam, None, 0, np.ones(1), rng, anchor=np.ones(1))


def _nonlinear_family(m, n, seed):
    rng = np.random.default_rng(seed)
    mats = [rng.standard_normal((n, n)) for _ in range(m)]
    comps = [(lambda x, A=A: np.tanh(A @ x) + 0.1 * x) for A in mats]
    return ComponentFamily(comps, rng.uniform(0.3, 3.0, m))


@settings(max_examples=25, deadline=None)
@given(m=st.integers(1, 8), seed=st.integers(0, 10_000))
def test_vr_unbiased_exhaustive(m, seed):
    fam = _nonlinear_family(m, 3, seed)
    rng = np.random.default_rng(seed)
    anchor, x = rng.standard_normal(3), rng.standard_normal(3)
    cache = refresh_snapshot(fam, None, anchor, rng)
    mean = sum(fam.probs[i] * vr_estimate(cache, fam, None, i, x, rng) for i in range(m))
    np.testing.assert_allclose(mean, fam.sum(x), atol=1e-12)


def test_vr_unbiased_monte_carlo():
    fam = _nonlinear_family(30, 3, 7)
    rng = np.random.default_rng(3)
    anchor, x = rng.standard_normal(3), rng.standard_normal(3)
    cache = refresh_snapshot(fam, None, anchor, rng)
    N = 100_000
    draws = np.array([vr_estimate(cache, fam, None, sample_component(fam, rng), x, rng) for _ in range(N)])
    half = 4 * draws.std(axis=0) / math.sqrt(N)
    assert np.all(np.abs(draws.mean(axis=0) - fam.sum(x)) <= half + 1e-12)


def test_refresh_snapshot_properties():
    fam = linear_family([1.0])
    c = CallCounter()
    cache = refresh_snapshot(fam, None, np.array([2.0]), np.random.default_rng(0), c)
    assert len(cache.per_component) == 1 and np.array_equal(cache.per_component[0], cache.full_sum)
    assert c.h == 1
    fam3 = linear_family([1.0, 2.0, 3.0])
    nm = NoiseModel.for_family(fam3, 2, bias_norm=0.1, std=0.5)
    a = refresh_snapshot(fam3, nm, np.ones(2), make_streams(4, ["n"])["n"])
    b = refresh_snapshot(fam3, nm, np.ones(2), make_streams(4, ["n"])["n"])
    np.testing.assert_array_equal(a.full_sum, b.full_sum)


def test_theory_constants_examples():
    f1, g1 = linear_family([1.0]), ComponentFamily([lambda x: x], [1.0], kind="g")
    t0 = compute_theory_constants(f1, g1, None, None)
    assert t0.delta_cap == 0.0
    nh = NoiseModel.for_family(f1, 1, std=1.0)
    t = compute_theory_constants(f1, g1, nh, None, q=0.75)
    assert t.sigma_h_tilde_sq == pytest.approx(2.0) and t.delta_cap == pytest.approx(4.0)
    t2 = compute_theory_constants(f1, g1, NoiseModel.for_family(f1, 1, std=2.0), None)
    assert t2.sigma_h_tilde_sq == pytest.approx(4 * t.sigma_h_tilde_sq)
    with pytest.raises(ValueError):
        compute_theory_constants(f1, g1, None, None, q=1.0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 1000))
def test_unit_sphere_norm(n, seed):
    u = unit_sphere(np.random.default_rng(seed), n)
    assert u.shape == (n,) and abs(np.linalg.norm(u) - 1) < 1e-12


def test_streams_independent_and_reproducible():
    a = make_streams(3, ["xi", "zeta"])
    b = make_streams(3, ["xi", "zeta"])
    assert a["xi"].random() == b["xi"].random()
    assert make_streams(3, ["xi", "zeta"])["xi"].random() != make_streams(3, ["xi", "zeta"])["zeta"].random()
