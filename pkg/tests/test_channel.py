import math

import numpy as np
import pytest

from qiopa.channel import (
    ChannelParams,
    ThinningSizeError,
    binomial_thinning_exact,
    build_source_law,
    detected_joint_law,
    sample_detected_counts,
    thinned_moments,
    thinned_squeezed_distribution,
)
from qiopa.fock import (
    FockDistribution,
    GainParams,
    TruncationPolicy,
    sector_moments,
    squeezed_single_photon_distribution,
    squeezed_vacuum_distribution,
)
from qiopa.mc import stream


def _pad(v, n):
    out = np.zeros(n)
    out[: v.size] = v
    return out


@pytest.mark.parametrize("kw", [dict(p=-0.1, eta=0.5), dict(p=0.5, eta=0.0), dict(p=0.5, eta=1.2),
                                dict(p=0.5, eta=0.5, seed_visibility=1.5), dict(p=0.5, eta=0.5, trials=0)])
def test_channel_validation(kw):
    with pytest.raises(ValueError):
        ChannelParams(**kw)


def test_channel_t():
    assert ChannelParams(p=0.15, eta=3e-4).t == pytest.approx(4.5e-5)
    assert ChannelParams.ideal().t == 1.0


@pytest.mark.parametrize("g, eta", [(0.5, 0.3), (1.0, 0.01), (1.5, 0.7)])
def test_thinning_preserves_mass(g, eta):
    dist = squeezed_single_photon_distribution(GainParams(g))
    out = binomial_thinning_exact(dist, eta)
    assert out.total() == pytest.approx(dist.total(), abs=1e-12)


@pytest.mark.parametrize("eta", [0.05, 0.4, 0.9])
def test_thinning_commutes_with_mixture(eta):
    gain = GainParams(0.8)
    one = squeezed_single_photon_distribution(gain)
    zero = squeezed_vacuum_distribution(gain)
    n = max(one.probs.size, zero.probs.size)
    w = 0.3
    mix = FockDistribution.from_probs(w * _pad(one.probs, n) + (1 - w) * _pad(zero.probs, n), "mixed")
    lhs = binomial_thinning_exact(mix, eta).probs
    rhs = w * _pad(binomial_thinning_exact(one, eta).probs, n) + (1 - w) * _pad(binomial_thinning_exact(zero, eta).probs, n)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@pytest.mark.parametrize("e1, e2", [(0.5, 0.5), (0.1, 0.9), (0.73, 0.02)])
def test_thinning_composition(e1, e2):
    dist = squeezed_vacuum_distribution(GainParams(1.2))
    twice = binomial_thinning_exact(binomial_thinning_exact(dist, e1), e2).probs
    once = binomial_thinning_exact(dist, e1 * e2).probs
    assert np.max(np.abs(twice - once)) <= 1e-10


def test_thinning_endpoints():
    dist = squeezed_vacuum_distribution(GainParams(0.5))
    assert binomial_thinning_exact(dist, 1.0) is dist
    zeroed = binomial_thinning_exact(dist, 0.0)
    assert zeroed.probs[0] == pytest.approx(dist.total(), abs=1e-15)
    assert np.all(zeroed.probs[1:] == 0)


def test_thinning_size_guard():
    with pytest.raises(ThinningSizeError):
        binomial_thinning_exact(squeezed_vacuum_distribution(GainParams(4.5)), 0.01)


@pytest.mark.parametrize("g, eta", [(0.3, 0.5), (1.0, 0.2), (2.0, 0.01)])
@pytest.mark.parametrize("odd", [False, True])
def test_generating_function_route_matches_matrix(g, eta, odd):
    gain = GainParams(g)
    tight = TruncationPolicy.tail(1e-14)
    dist = squeezed_single_photon_distribution(gain, tight) if odd else squeezed_vacuum_distribution(gain, tight)
    exact = binomial_thinning_exact(dist, eta).probs
    fft = thinned_squeezed_distribution(gain, eta, odd).probs
    n = max(exact.size, fft.size)
    assert np.max(np.abs(_pad(exact, n) - _pad(fft, n))) <= 1e-10


@pytest.mark.parametrize("odd", [False, True])
def test_generating_function_route_large_gain(odd):
    gain = GainParams(4.5)
    eta = 3e-4
    dist = thinned_squeezed_distribution(gain, eta, odd)
    mean, var = thinned_moments(*sector_moments(gain, odd), eta)
    assert dist.total() == pytest.approx(1.0, abs=1e-10)
    assert dist.mean() == pytest.approx(mean, rel=1e-8)
    assert dist.variance() == pytest.approx(var, rel=1e-6)


def test_thinned_moments_binomial():
    # a Fock state n thins to Binomial(n, eta)
    assert thinned_moments(10.0, 0.0, 0.3) == pytest.approx((3.0, 2.1))
    with pytest.raises(ValueError):
        thinned_moments(1.0, -1.0, 0.5)


def test_source_weights():
    src = build_source_law(0.7, GainParams(1.0), ChannelParams(p=0.4, eta=0.5, seed_visibility=0.45))
    wa, wb, wc = src.sector_weights
    assert wa + wb + wc == pytest.approx(1.0, abs=1e-15)
    assert wa - wb == pytest.approx(0.4 * 0.45 * math.cos(0.7), rel=1e-14)
    assert src.sector_weight_derivatives[0] == pytest.approx(-0.4 * 0.45 * math.sin(0.7) / 2)
    assert sum(w for w, _ in src.components()) == pytest.approx(1.0)


def test_source_summary_fields():
    s = build_source_law(0.2, GainParams(0.5), ChannelParams(p=0.5, eta=0.5)).summary()
    assert {"weights", "mean_plus", "mean_minus", "var_single_photon", "var_vacuum"} <= set(s)


def test_ideal_unamplified_probe():
    src = build_source_law(0.0, GainParams(0.0), ChannelParams.ideal())
    mp, mm = sample_detected_counts(src, rng=stream(1, 0), size=1000)
    assert np.all(mp == 1) and np.all(mm == 0)
    assert sample_detected_counts(src, rng=stream(1, 1)) == (1, 0)


def test_sampler_needs_rng():
    src = build_source_law(0.0, GainParams(0.0), ChannelParams.ideal())
    with pytest.raises(ValueError):
        sample_detected_counts(src)


@pytest.mark.parametrize("phi, expected", [(math.pi / 2, 0.0), (0.0, 0.18231939114716672)])
def test_large_gain_difference_mean(phi, expected):
    gain = GainParams(4.5)
    src = build_source_law(phi, gain, ChannelParams(p=0.15, eta=3e-4))
    mp, mm = sample_detected_counts(src, rng=stream(11, 0), size=1_000_000)
    d = mp - mm
    se = d.std(ddof=1) / math.sqrt(d.size)
    assert abs(d.mean() - expected) < 4 * se


def test_fringe_law_random_points():
    rng = np.random.default_rng(2024)
    for i in range(10):
        g = rng.uniform(0.0, 3.0)
        p, eta, vs = rng.uniform(0.05, 1.0), rng.uniform(0.01, 1.0), rng.uniform(0.3, 1.0)
        phi = rng.uniform(0, 2 * math.pi)
        gain = GainParams(g)
        src = build_source_law(phi, gain, ChannelParams(p=p, eta=eta, seed_visibility=vs))
        mp, mm = sample_detected_counts(src, rng=stream(7, i), size=200_000)
        d = mp - mm
        se = d.std(ddof=1) / math.sqrt(d.size)
        assert abs(d.mean() - eta * p * vs * gain.c * math.cos(phi)) < 4 * se


@pytest.mark.parametrize("phi", [0.0, 1.0])
def test_detected_joint_law(phi):
    src = build_source_law(phi, GainParams(0.6), ChannelParams(p=0.5, eta=0.3))
    law = detected_joint_law(src)
    assert law.sum() == pytest.approx(1.0, abs=1e-7)
    m = np.arange(law.shape[0])
    mean_diff = (law.sum(axis=1) - law.sum(axis=0)) @ m
    assert mean_diff == pytest.approx(0.3 * 0.5 * GainParams(0.6).c * math.cos(phi), rel=1e-6)
