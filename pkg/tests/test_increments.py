import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hurstlab.generators import generate
from hurstlab.increments import (
    OverlapError,
    TransitionKernel,
    ck_residual,
    increment_autocorrelation,
    increments,
    kernel_density,
    martingale_residual,
    process_autocorrelation,
    propagate_density,
    stationarity_test,
    two_point_density,
)
from hurstlab.process import Ensemble, ProcessSpec, make_grid
from hurstlab.scaling import DensityEstimate, one_point_density
from hurstlab.stattools import ks_critical, ks_one_sample

from oracles import gaussian_peak_gap, gaussian_pdf


def adjacent_corr(H):
    # unit increments on [0,1] and [1,2]
    return (2 ** (2 * H) - 2) / 2


def test_increments_basic():
    g = make_grid("uniform", 0, 2, 3)
    e = Ensemble(g, np.array([[0.0, 1.0, 3.0], [0.0, -1.0, 0.0]]))
    inc = increments(e, 1, 1)
    np.testing.assert_array_equal(inc.samples, [2.0, 1.0])
    assert inc.mean.value == 1.5
    with pytest.raises(ValueError):
        increments(e, 1, 0)
    with pytest.raises(ValueError, match="spans"):
        increments(e, 1.5, 0.5)


def test_fbm_increments_have_stationary_law(fbm07):
    r = stationarity_test(fbm07, 8, 1)
    assert r.verdict == "stationary-consistent"
    assert r.increment_variance == pytest.approx(1.0, abs=3 * np.sqrt(2 / fbm07.n_paths))


def test_markov_increments_are_not_stationary(markov07):
    r = stationarity_test(markov07, 8, 1)
    assert r.verdict == "reject"
    # Var[x(9) - x(8)] = 9^1.4 - 8^1.4
    target = 9**1.4 - 8**1.4
    assert r.increment_variance == pytest.approx(target, rel=3 * np.sqrt(2 / markov07.n_paths))


def test_brownian_case_is_stationary_for_both():
    g = make_grid("uniform", 0, 16, 17)
    for kind, seed in (("fbm", 51), ("markov-exact", 52)):
        e = generate(ProcessSpec(kind, 0.5), g, 10_000, seed)
        assert stationarity_test(e, 8, 1).stationary


def test_stationarity_needs_reference_time():
    g = make_grid("uniform", 0.5, 8.5, 9)
    e = generate(ProcessSpec("fbm", 0.6), g, 200, 1)
    with pytest.raises(ValueError, match="T="):
        stationarity_test(e, 1.5, 1.0)


DICHOTOMY_GRID = make_grid("uniform", 0, 32, 33)
DICHOTOMY_PAIRS = [(t, T) for T in (1, 2, 4) for t in range(4 * T, 33 - T)]


@pytest.fixture(scope="module")
def dichotomy_markov():
    return {
        H: generate(ProcessSpec("markov-exact", H), DICHOTOMY_GRID, 10_000, seed=300 + i)
        for i, H in enumerate((0.3, 0.4, 0.6, 0.7))
    }


@settings(max_examples=30, deadline=None)
@given(H=st.sampled_from((0.3, 0.4, 0.6, 0.7)), pair=st.sampled_from(DICHOTOMY_PAIRS))
def test_markov_rejects_stationarity_away_from_half(dichotomy_markov, H, pair):
    assert stationarity_test(dichotomy_markov[H], *pair).verdict == "reject"


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_fbm_mostly_stationary_consistent(H):
    e = generate(ProcessSpec("fbm", H), DICHOTOMY_GRID, 10_000, seed=400)
    passed = [stationarity_test(e, t, T).stationary for t, T in DICHOTOMY_PAIRS]
    assert np.mean(passed) >= 0.9


def test_markov_fails_at_most_pairs(dichotomy_markov):
    for e in dichotomy_markov.values():
        failed = [not stationarity_test(e, t, T).stationary for t, T in DICHOTOMY_PAIRS]
        assert np.mean(failed) >= 0.9


def test_adjacent_correlation_values():
    assert adjacent_corr(0.5) == 0.0
    assert adjacent_corr(0.7) == pytest.approx(0.3195, abs=1e-4)
    assert adjacent_corr(0.25) == pytest.approx(-0.2929, abs=1e-4)


def test_increment_autocorrelation_fbm_and_markov(fbm07, markov07):
    r = increment_autocorrelation(fbm07, 1, 1, 1, 1)
    assert abs(r.value - adjacent_corr(0.7)) < 3 * r.se
    assert r.se == pytest.approx(0.01)
    m = increment_autocorrelation(markov07, 1, 1, 1, 1)
    assert abs(m.value) < 3 * m.se


def test_increment_autocorrelation_antipersistent():
    g = make_grid("uniform", 0, 2, 3)
    e = generate(ProcessSpec("fbm", 0.25), g, 10_000, seed=61)
    r = increment_autocorrelation(e, 1, 1, 1, 1)
    assert abs(r.value - adjacent_corr(0.25)) < 3 * r.se


@given(
    t1=st.integers(1, 16), lag1=st.integers(1, 16), t2=st.integers(0, 15), lag2=st.integers(1, 16)
)
def test_overlapping_intervals_always_rejected(t1, lag1, t2, lag2):
    g = make_grid("uniform", 0, 48, 49)
    e = Ensemble(g, np.zeros((3, 49)) + np.arange(3)[:, None])
    t1, t2 = t1 + 16, t2 + 16
    a0, a1, b0, b1 = t1 - lag1, t1, t2, t2 + lag2
    overlap = max(a0, b0) < min(a1, b1)
    if overlap:
        with pytest.raises(OverlapError):
            increment_autocorrelation(e, t1, lag1, t2, lag2)
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            increment_autocorrelation(e, t1, lag1, t2, lag2)


def test_process_autocorrelation(fbm07, markov07):
    for e in (fbm07, markov07):
        zero = process_autocorrelation(e, 4, 0)
        np.testing.assert_allclose(zero.value, np.mean(e.at(4) ** 2), rtol=1e-14)
    f = process_autocorrelation(fbm07, 1, 1)
    assert abs(f.value - 2**0.4) < 3 * f.se
    m = process_autocorrelation(markov07, 1, 1)
    assert abs(m.value - 1.0) < 3 * m.se


def test_martingale_residual(fbm07, markov07):
    f = martingale_residual(fbm07, 1, 1)
    assert abs(f.residual.value - (2**0.4 - 1)) < 3 * f.residual.se
    assert f.max_bin_z > 5
    m = martingale_residual(markov07, 1, 1)
    assert abs(m.residual.value) < 3 * m.residual.se
    # 20 bins: the largest |z| of 20 standard normals stays well under 4.5
    assert m.max_bin_z < 4.5
    assert m.as_dict()["n_bins"] == 20


def test_kernel_density_values():
    k = TransitionKernel(0.5)
    assert kernel_density(k, 0.0, 1.0, 0.0, 0.0) == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-15)
    k7 = TransitionKernel(0.7, c=2.0)
    v = 2.0 * (2**1.4 - 1)
    x = np.array([-1.0, 0.3, 2.0])
    np.testing.assert_allclose(kernel_density(k7, x + 0.5, 2.0, 0.5, 1.0), gaussian_pdf(x, v), rtol=1e-14)
    with pytest.raises(ValueError):
        kernel_density(k, 0.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        TransitionKernel(1.0)


def _delta(t, eps=1e-6):
    return DensityEstimate(t, np.array([-eps, eps]), np.array([0.5 / eps]), 1, "delta")


def test_propagate_delta_gives_kernel():
    f = propagate_density(TransitionKernel(0.5), _delta(0.0), 1.0, width=0.01)
    assert f.mass == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(f.density, gaussian_pdf(f.centers, 1.0), atol=1e-6)
    assert f.variance() == pytest.approx(1.0, abs=1e-4)


def test_propagate_histogram_matches_later_marginal(fbm07, markov07):
    f1 = one_point_density(markov07, 1.0)
    f2 = propagate_density(TransitionKernel(0.7), f1, 2.0)
    assert f2.mass == pytest.approx(1.0, abs=1e-12)
    # bin spread of the input adds about w^2/12 to the variance
    w = f1.widths[0]
    assert f2.variance() == pytest.approx(2**1.4 + w**2 / 12, abs=4 * 2**1.4 * np.sqrt(2 / 1e4))
    # compare against an independent sample at t=2 (both have the law N(0, 2^1.4))
    n = fbm07.n_paths
    assert ks_one_sample(fbm07.at(2.0), f2.cdf) < np.sqrt(2) * ks_critical(n)


def test_propagate_argument_checks():
    with pytest.raises(ValueError):
        propagate_density(TransitionKernel(0.5), _delta(1.0), 1.0)
    bad = DensityEstimate(0.0, np.array([0.0, 1.0]), np.array([2.0]), 1)
    with pytest.raises(ValueError, match="normalized"):
        propagate_density(TransitionKernel(0.5), bad, 1.0)


def _ck_grid(k, t0, t, n):
    s = np.sqrt(k.variance(t0, t))
    return np.linspace(-10 * s, 10 * s, n)


@pytest.mark.parametrize("H, c", [(0.3, 1.0), (0.5, 0.5), (0.7, 1.0), (0.9, 3.0)])
def test_ck_residual_small_for_consistent_kernel(H, c):
    k = TransitionKernel(H, c)
    assert ck_residual(k, 1.0, 2.0, 4.0, _ck_grid(k, 1.0, 4.0, 2048)) < 1e-6


def test_ck_residual_shrinks_with_spacing():
    k = TransitionKernel(0.7)
    coarse = ck_residual(k, 1.0, 2.0, 4.0, _ck_grid(k, 1.0, 4.0, 21))
    fine = ck_residual(k, 1.0, 2.0, 4.0, _ck_grid(k, 1.0, 4.0, 41))
    assert fine < coarse


def test_ck_residual_detects_corrupted_kernel():
    k = TransitionKernel(0.7)
    inner = TransitionKernel(0.7, exponent=1.5)
    r = ck_residual(k, 1.0, 2.0, 4.0, _ck_grid(k, 1.0, 4.0, 2048), inner=inner)
    v_direct = 4**1.4 - 1
    v_composed = (4**1.4 - 2**1.4) + (2**1.5 - 1)
    assert r == pytest.approx(gaussian_peak_gap(v_direct, v_composed), rel=1e-6)
    assert r > 1e-3


def test_ck_residual_argument_checks():
    k = TransitionKernel(0.7)
    with pytest.raises(ValueError, match="t_mid"):
        ck_residual(k, 2.0, 1.0, 4.0, _ck_grid(k, 1.0, 4.0, 101))
    with pytest.raises(ValueError, match="standard deviations"):
        ck_residual(k, 1.0, 2.0, 4.0, np.linspace(-1, 1, 101))
    with pytest.raises(ValueError, match="increasing"):
        ck_residual(k, 1.0, 2.0, 4.0, np.zeros(10))


def test_two_point_density_marginals(fbm07):
    tp = two_point_density(fbm07, 1.0, 2.0)
    assert tp.mass == pytest.approx(1.0, abs=1e-12)
    m1 = one_point_density(fbm07, 1.0)
    np.testing.assert_allclose(tp.marginal(0), m1.density, rtol=1e-12)
    m2 = one_point_density(fbm07, 2.0)
    np.testing.assert_allclose(tp.marginal(1), m2.density, rtol=1e-12)


def _slope_se(e, t1, t2, slope):
    a, b = e.at(t1), e.at(t2)
    resid = b - slope * a
    return np.std(resid) / (np.std(a) * np.sqrt(a.size))


def test_conditional_slopes(fbm07, markov07):
    f = two_point_density(fbm07, 1.0, 2.0)
    assert abs(f.conditional_slope - 2**0.4) < 3 * _slope_se(fbm07, 1, 2, 2**0.4)
    m = two_point_density(markov07, 1.0, 2.0)
    assert abs(m.conditional_slope - 1.0) < 3 * _slope_se(markov07, 1, 2, 1.0)


def test_markov_conditional_slice_matches_kernel(markov07):
    tp = two_point_density(markov07, 1.0, 2.0)
    i = np.searchsorted(tp.edges1, 0.0) - 1
    cond = tp.conditional(i)
    c2 = 0.5 * (tp.edges2[1:] + tp.edges2[:-1])
    w2 = np.diff(tp.edges2)
    mean = np.sum(cond * c2 * w2)
    var = np.sum(cond * c2**2 * w2) - mean**2
    x = markov07.at(1.0)
    inside = (x >= tp.edges1[i]) & (x < tp.edges1[i + 1])
    n_bin = inside.sum()
    x_bar = x[inside].mean()
    kv = TransitionKernel(0.7).variance(1.0, 2.0)
    w1 = tp.edges1[i + 1] - tp.edges1[i]
    expected_var = kv + w1**2 / 12 + w2[0] ** 2 / 12
    assert abs(mean - x_bar) < 3 * np.sqrt(kv / n_bin) + w2[0] / 2
    assert abs(var - expected_var) < 3 * kv * np.sqrt(2 / n_bin)


def test_two_point_dilation(fbm07, markov07):
    for e in (fbm07, markov07):
        tp = two_point_density(e, 2.0, 4.0, dilation=2.0)
        # KS-type distance between two independent-ish samples of the same law
        assert tp.dilation_distance < 2 * ks_critical(e.n_paths, e.n_paths)
    with pytest.raises(ValueError):
        two_point_density(fbm07, 2.0, 1.0)
