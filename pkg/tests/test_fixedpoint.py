import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from artifact.banach import FreqGrid, RadialGrid, SampledSymbol, norm_weighted
from artifact.fixedpoint import (CoefficientProfile, ForcingProfile, HOperator, NonContractionError, P_symbol,
                                 apply_H_epsilon, formal_borel_coefficients, forcing_psi, fourier_convolve,
                                 radial_convolution, radial_convolution_matrix, solve_fixed_point)
from artifact.problem import Polynomial, ProblemSpec, worked_example_problem
from artifact.specfun import WimanParams, beta, mittag_leffler

SP = worked_example_problem()
GRID = RadialGrid.graded(30.0, 0.25, 1.0, 1.3, 3.0, 12)
FREQ = FreqGrid.for_decay(1.0, 0.4)
SMALL_GRID = RadialGrid.graded(4.0, 0.5, 1.0, 1.5, 2.0, 10)
SMALL_FREQ = FreqGrid(0.5, 16)


@pytest.fixture(scope="module")
def s7_solution():
    return solve_fixed_point(SP, 1.0, 1e-8, 60, GRID, FREQ, [0.0], pointwise_tol=1e-14)


def test_zero_forcing_profile_gives_zero():
    prof = ForcingProfile(0.0, 1.0, 1)
    assert np.all(forcing_psi(prof, [0.3, 1 + 1j], SMALL_FREQ.m) == 0)
    prof = ForcingProfile(1.0, 1.0, 1, modes=())
    assert np.all(forcing_psi(prof, [0.3, 2.0], SMALL_FREQ.m) == 0)


def test_single_mode_forcing():
    prof = ForcingProfile(1.0, 1.0, 1, modes=(1.0,), kind="abs", beta=1.0, mu=2.0)
    u = np.array([0.2, 1.5j, 3.0])
    m = SMALL_FREQ.m
    g = (1 + np.abs(m)) ** -2.0 * np.exp(-np.abs(m))
    assert np.allclose(forcing_psi(prof, u, m), np.multiply.outer(u, g), rtol=1e-14)


@pytest.mark.parametrize("k1", [1, 2])
def test_forcing_series_against_mittag_leffler(k1):
    # sum_n (u/T)^n / Gamma(n/k1 + 1) = E_{1/k1,1}(u/T) - 1
    T = 0.5
    prof = ForcingProfile(1.0, T, k1, N=200)
    u = np.array([0.1, 0.7, 2.0])
    got = prof.radial_series(u)
    ref = np.array([mittag_leffler(WimanParams(1.0 / k1, 1.0), x / T) - 1.0 for x in u])
    assert np.allclose(got.real, ref, rtol=1e-12) and np.allclose(got.imag, 0.0)


def test_required_truncation_controls_tail():
    prof = ForcingProfile(1.0, 0.5, 1, N=400)
    n = prof.required_truncation(5.0, 1e-10)
    head = dataclasses.replace(prof, N=n).radial_series(np.array([5.0]))[0]
    full = prof.radial_series(np.array([5.0]))[0]
    assert abs(full - head) <= 1e-10 * abs(full)
    with pytest.raises(ValueError):
        dataclasses.replace(prof, N=5).check_tail(5.0)


@pytest.mark.parametrize("a,b,kp", [(1.0, 1.0, 1), (0.5, 2.0, 2), (2 / 3, 1.0, 3), (1.5, 1.0, 2), (3.0, 2.0, 3)])
def test_radial_convolution_of_identity(a, b, kp):
    # a = m'/k' and integer b as in the operator; w(u) = u: closed form u^(k'(a+b)+1) B(a, b + 1/k') and a direct quadrature along the ray
    r = SMALL_GRID.nodes
    vals = np.broadcast_to(r[:, None], (r.size, SMALL_FREQ.size)).astype(complex)
    w = SampledSymbol([0.0], SMALL_GRID, SMALL_FREQ, vals[None])
    for u in (0.3, 1.7, 3.9):
        got = radial_convolution(w, complex(u), a, b, kp)
        closed = u ** (kp * (a + b) + 1) * beta(a, b + 1.0 / kp)
        U = u ** kp
        direct, _ = integrate.quad(lambda s: 1.0, 0, U, weight="alg", wvar=(b - 1 + 1.0 / kp, a - 1),
                                   epsabs=0, epsrel=1e-13)
        assert closed == pytest.approx(U * direct, rel=1e-9)
        assert np.allclose(got, closed, rtol=1e-10)


def test_radial_convolution_rejects_off_ray():
    w = SampledSymbol.zeros([0.0], SMALL_GRID, SMALL_FREQ)
    with pytest.raises(ValueError):
        radial_convolution(w, 1j, 1.0, 1.0, 1)
    with pytest.raises(ValueError):
        radial_convolution(w, 10.0, 1.0, 1.0, 1)
    assert np.all(radial_convolution(w, 0j, 1.0, 1.0, 1) == 0)


def test_radial_matrix_on_monomials():
    # R @ r^j = int_0^1 (1-x^k')^(a-1) x^(k'b-1+j) dx r^j = B(a, b + j/k') r^j / k'
    a, b, kp = 0.7, 1.5, 2
    R = radial_convolution_matrix(SMALL_GRID, a, b, kp)
    r = SMALL_GRID.nodes
    for j in (0, 1, 4):
        assert np.allclose(R @ r ** j, beta(a, b + j / kp) / kp * r ** j, rtol=1e-10, atol=1e-12)


def test_fourier_convolve_zero_and_mollifier():
    m = np.linspace(-3, 3, 7)
    g = np.cos(SMALL_FREQ.m) / (1 + SMALL_FREQ.m ** 2)
    one = Polynomial((1.0,))
    assert np.all(fourier_convolve(lambda x: 0 * x, one, g, m, freq=SMALL_FREQ) == 0)
    # a narrow normalized Gaussian C reproduces g up to O(s^2)
    fine = FreqGrid(0.005, 4000)
    s = 0.02
    C = lambda x: np.sqrt(2 * np.pi) * np.exp(-x * x / (2 * s * s)) / (s * np.sqrt(2 * np.pi))  # noqa: E731
    gf = np.cos(fine.m) / (1 + fine.m ** 2)
    got = fourier_convolve(C, one, gf, m, freq=fine)
    assert np.allclose(got, np.cos(m) / (1 + m ** 2), atol=5 * s * s)


def test_H_is_affine():
    op = HOperator(SP, SMALL_GRID, SMALL_FREQ, [0.0, math.pi / 3], 0.8 * np.exp(0.2j))
    rng = np.random.default_rng(3)
    shape = (2, SMALL_GRID.size, SMALL_FREQ.size)
    x = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    y = rng.normal(size=shape)
    a, b = 0.3 - 1.1j, 2.0
    lhs = op.apply(a * x + b * y) - op.forcing
    rhs = a * (op.apply(x) - op.forcing) + b * (op.apply(y) - op.forcing)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(rhs))


def test_H_of_zero_is_forcing_over_P():
    w = SampledSymbol.zeros([0.0], SMALL_GRID, SMALL_FREQ)
    out = apply_H_epsilon(SP, w, 1.0)
    u = SMALL_GRID.nodes.astype(complex)
    prof = ForcingProfile.from_spec(SP)
    ref = forcing_psi(prof, u, SMALL_FREQ.m) / P_symbol(SP, u, SMALL_FREQ.m)
    assert np.allclose(out.values[0], ref, rtol=1e-14, atol=0)


def test_no_lower_terms_gives_constant_map():
    # m_D = 1 leaves no main convolution, I is empty: H(w) = psi / P for every w
    sp = ProblemSpec(k=2, kprime=2, delta_D=1, m_D=1, k1=1, T0=1.0)
    rng = np.random.default_rng(0)
    d = [math.pi / 2]
    w = SampledSymbol(d, SMALL_GRID, SMALL_FREQ, rng.normal(size=(1, SMALL_GRID.size, SMALL_FREQ.size)))
    out = apply_H_epsilon(sp, w)
    ref = apply_H_epsilon(sp, SampledSymbol.zeros(d, SMALL_GRID, SMALL_FREQ))
    assert np.array_equal(out.values, ref.values)


def test_zero_forcing_fixed_point_is_zero():
    sp = dataclasses.replace(SP, K0=0.0)
    sym, rep = solve_fixed_point(sp, 1.0, 1e-10, 20, SMALL_GRID, SMALL_FREQ, [0.0])
    assert rep.converged and rep.iterations == 1
    assert np.all(sym.values == 0)


def test_worked_example_contracts(s7_solution):
    sym, rep = s7_solution
    tol = 1e-8
    assert rep.converged
    assert rep.max_ratio <= 0.55
    assert rep.residual <= 2 * tol
    assert all(r < 1 for r in rep.ratios)
    # geometric decay predicts the iteration count from the observed ratios
    mean_ratio = math.exp(np.mean(np.log(rep.ratios)))
    predicted = 1 + math.log(tol / rep.step_norms[0]) / math.log(mean_ratio)
    assert 0.7 * predicted <= rep.iterations <= 1.3 * predicted + 1
    # the ball radius reported is the norm of the solution
    assert rep.ball_radius == pytest.approx(norm_weighted(sym, rep.norm), rel=1e-14)


def test_fixed_point_matches_formal_series(s7_solution):
    sym, _ = s7_solution
    c = formal_borel_coefficients(SP, FREQ, 40)
    assert np.all(c[0] == 0)
    for u in (0.05, 0.1, 0.2):
        series = sum(c[n] * u ** n for n in range(41))
        val = sym.evaluate(0, [u])[0]
        assert np.max(np.abs(val - series)) <= 1e-10 * np.max(np.abs(series))


def test_refinement_stable(s7_solution):
    sym, rep = s7_solution
    fine, _ = solve_fixed_point(SP, 1.0, 1e-8, 60, GRID.refined(), FREQ, [0.0], pointwise_tol=1e-14)
    diff = fine.evaluate(0, GRID.nodes) - sym.values[0]
    assert norm_weighted(sym.with_values(diff[None]), rep.norm) <= 5e-8


def test_large_coefficients_do_not_contract():
    sp = dataclasses.replace(SP, c_l=(50.0, 50.0), Q=Polynomial(tuple(0.01 * c for c in SP.R_D.coeffs)))
    with pytest.raises((NonContractionError, ZeroDivisionError)):
        solve_fixed_point(sp, 1.0, 1e-10, 40, SMALL_GRID, SMALL_FREQ, [0.0])


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 3.0))
def test_coefficient_profile_bound(c):
    prof = CoefficientProfile(c, "abs", 1.0, 2.0)
    assert prof.bound(SMALL_FREQ.m) == pytest.approx(c, rel=1e-14, abs=1e-300)
