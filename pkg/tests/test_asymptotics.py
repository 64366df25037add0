import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.asymptotics import (ConditioningError, DataQualityError, OutOfHypothesisWarning,
                                  asymptotic_coefficients, cross_sector_agreement, equivalence_suite,
                                  flatness_fit, gevrey_fit, kappa_of, lad_fit, laplace_gevrey_check,
                                  thinning_stability, watson_equivalence_check)
from artifact.specfun import lgamma


def test_kappa_examples():
    assert kappa_of(3, 2) == Fraction(6, 5)
    with pytest.warns(OutOfHypothesisWarning):
        assert kappa_of(1, 1) == Fraction(1, 2)
    assert kappa_of(2, 2) == 1


def test_kappa_exhaustive():
    for k in range(1, 7):
        for kp in range(1, 7):
            with warnings.catch_warnings(record=True) as rec:
                warnings.simplefilter("always")
                kap = kappa_of(k, kp)
            assert 1 / kap == Fraction(1, k) + Fraction(1, kp)
            assert bool(rec) == (kap < Fraction(2, 3))
            if kp >= 2:  # k' > k1 >= 1
                assert not rec
    with pytest.warns(OutOfHypothesisWarning):
        kappa_of(1, 1)
    with pytest.raises(ValueError):
        kappa_of(0, 2)


def test_lad_ignores_outlier():
    x = np.arange(10.0)
    y = 2.0 + 0.5 * x
    y[3] += 100.0
    b = lad_fit(np.column_stack([np.ones_like(x), x]), y)
    assert np.allclose(b, [2.0, 0.5], atol=1e-9)


def _ladder(kap, K=2.0, M=0.7, noise=0.0, seed=0, n=12, lo=0.02, hi=1.0):
    eps = np.geomspace(hi, lo, n)
    rng = np.random.default_rng(seed)
    d = K * np.exp(-M / eps ** kap) * np.exp(noise * rng.standard_normal(n))
    return list(zip(eps, d))


@pytest.mark.parametrize("kap", [0.8, 1.0, 1.2, 1.5])
def test_flatness_recovers_planted_exponent(kap):
    # the same |eps| range must hold resolvable values for each exponent
    lo = {0.8: 0.005, 1.0: 0.02, 1.2: 0.03, 1.5: 0.06}[kap]
    fit = flatness_fit(_ladder(kap, lo=lo, hi=lo * 10 ** 1.7), kap)
    assert fit.passes(0.05)
    assert fit.K_est == pytest.approx(2.0, rel=0.05) and fit.M_est == pytest.approx(0.7, rel=0.05)
    assert fit.pinned_M == pytest.approx(0.7, rel=1e-6)


def test_flatness_discriminates_orders():
    fit = flatness_fit(_ladder(1.0, lo=0.03, hi=1.5), 1.2)
    assert not fit.passes(0.15)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.9, 1.4), st.integers(0, 1000))
def test_flatness_with_small_noise(kap, seed):
    fit = flatness_fit(_ladder(kap, noise=0.01, seed=seed, lo=0.04, hi=0.04 * 10 ** 1.6), kap)
    assert fit.relative_error <= 0.1


def test_flatness_ladder_validation():
    with pytest.raises(DataQualityError, match="empty"):
        flatness_fit([])
    with pytest.raises(DataQualityError):
        flatness_fit(_ladder(1.0)[:3])
    with pytest.raises(DataQualityError):
        flatness_fit(list(reversed(_ladder(1.0))))
    bad = _ladder(1.0)
    bad[2] = (bad[2][0], 0.0)
    with pytest.raises(DataQualityError):
        flatness_fit(bad)
    with pytest.raises(DataQualityError, match="decades"):
        flatness_fit(_ladder(1.0, lo=0.5, hi=1.0))


@pytest.mark.parametrize("inv_kappa", [0.5, 1.0 / 1.2, 1.5])
def test_gevrey_fit_recovers_planted_order(inv_kappa):
    C, M = 0.3, 1.7
    rem = {}
    for n in range(2, 16):
        h = C * M ** n * math.exp(lgamma(1 + n * inv_kappa))
        eps = np.geomspace(0.01, 0.001, 4)
        rem[n] = [(e, h * e ** n * (1 + 0.1 * e)) for e in eps]
    rep = gevrey_fit(rem)
    assert rep.inv_kappa_est == pytest.approx(inv_kappa, rel=0.02)
    assert not rep.analytic_signal


def test_gevrey_fit_analytic_signal_and_conditioning():
    rem = {n: [(0.1, (0.5 * 0.1) ** n)] for n in range(2, 12)}
    assert gevrey_fit(rem, power_term=False).analytic_signal
    with pytest.raises(ConditioningError):
        gevrey_fit({1: [(0.1, 1.0)], 2: [(0.1, 1.0)]})
    unresolved = {n: [(0.1, 1e-20)] for n in range(2, 10)}
    with pytest.raises(ConditioningError):
        gevrey_fit(unresolved, noise_floor=1e-16)


def test_asymptotic_coefficients_polynomial():
    eps = 0.3 * np.exp(1j * np.linspace(-0.2, 0.2, 3))[None, :] * np.geomspace(1, 0.1, 8)[:, None]
    eps = eps.ravel()
    u = 1.0 + 2.0 * eps - 0.5 * eps ** 3
    fit = asymptotic_coefficients(eps, u, 4)
    assert np.allclose(fit.h, [1.0, 2.0, 0.0, -0.5, 0.0], atol=1e-8)
    zero = asymptotic_coefficients(eps, np.zeros_like(eps), 3)
    assert np.all(zero.h == 0)
    with pytest.raises(ValueError):
        asymptotic_coefficients(eps, u, 9)


def test_thinning_and_cross_sector():
    eps = np.geomspace(0.5, 0.01, 24) * np.exp(0.1j)
    u = np.exp(eps) - 1
    ok, worst = thinning_stability(eps, u, 6)
    assert ok and worst <= 0.05
    a = asymptotic_coefficients(eps, u, 6)
    # the error bars cover the truncation bias of the exact coefficients 1/m!
    exact = [0.0] + [1 / math.factorial(m) for m in range(1, 5)]
    assert np.all(np.abs(a.h[:5] - exact) <= 2 * a.se[:5])
    b = asymptotic_coefficients(eps * np.exp(0.3j), np.exp(eps * np.exp(0.3j)) - 1, 6)
    ok, z = cross_sector_agreement(a, b)
    assert ok and z <= 2.0


@pytest.mark.parametrize("q", [1.0 / 1.2, 1.0, 0.5])
@pytest.mark.parametrize("mode", ["flat->bound", "bound->flat"])
def test_watson_planted(q, mode):
    r = watson_equivalence_check(lambda x: np.exp(-1.0 / x ** (1.0 / q)), q, mode=mode)
    assert r.ok
    assert r.flat_fit["exponent_est"] == pytest.approx(1.0 / q, rel=0.05)


def test_watson_rejects_polynomial_and_wrong_order():
    assert not watson_equivalence_check(lambda x: x ** 3, 1.0).ok
    assert not watson_equivalence_check(lambda x: np.exp(-1.0 / x), 0.5).ok
    with pytest.raises(ValueError):
        watson_equivalence_check(lambda x: x, 1.0, mode="sideways")


def test_laplace_order_shift_entire_kernel():
    r = laplace_gevrey_check(lambda n: (-1) ** n, lambda s: 1 / (1 + s), 0.0)
    assert r["ok"] and r["order_est"] == pytest.approx(1.0, rel=0.05)


@pytest.mark.slow
def test_equivalence_suite():
    res = equivalence_suite()
    assert res["ok"] and len(res["cases"]) == 8
