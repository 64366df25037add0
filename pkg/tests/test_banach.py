import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.banach import FreqGrid, NormParams, RadialGrid, SampledSymbol, norm_E_beta_mu, norm_weighted

GRID = RadialGrid.graded(6.0, 0.5, 2.0, 1.5, 2.0, 8)
FREQ = FreqGrid(0.25, 24)


def test_grid_construction():
    assert GRID.breakpoints[0] == 0.0 and GRID.r_max == pytest.approx(6.0)
    assert GRID.size == GRID.n_panels * 8
    assert np.all(np.diff(GRID.nodes) > 0)
    assert GRID.weights.sum() == pytest.approx(6.0, rel=1e-14)
    with pytest.raises(ValueError):
        RadialGrid((0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        RadialGrid((0.5, 1.0))


@pytest.mark.parametrize("deg", [0, 1, 3, 7])
def test_interpolation_exact_on_polynomials(deg):
    x = GRID.nodes
    rho = np.linspace(0.0, 6.0, 37)
    assert np.allclose(GRID.interp_matrix(rho) @ (x ** deg), rho ** deg, rtol=1e-11, atol=1e-11 * 6.0 ** deg)


def test_refined_grid_halves_panels():
    r = GRID.refined()
    assert r.n_panels == 2 * GRID.n_panels
    assert set(GRID.breakpoints) <= set(r.breakpoints)


def test_freq_grid():
    f = FreqGrid.for_decay(2.0, 0.5, floor=1e-6)
    assert f.m_max >= math.log(1e6) / 2.0
    assert f.size == 2 * f.J + 1 and f.m[f.J] == 0.0


def test_norm_E_examples():
    m = FREQ.m
    beta, mu = 1.0, 2.0
    f = (1 + np.abs(m)) ** (-mu) * np.exp(-beta * np.abs(m))
    assert norm_E_beta_mu(f, m, beta, mu) == pytest.approx(1.0, rel=1e-14)
    assert norm_E_beta_mu(np.zeros_like(m), m, beta, mu) == 0.0
    assert norm_E_beta_mu(np.exp(-2 * beta * np.abs(m)), m, beta, 0.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        norm_E_beta_mu([], [], beta, mu)


def _inverse_weight(p, grid, freq):
    r = grid.nodes
    m = freq.m
    w = r * np.exp(p.nu * r ** p.growth_order)
    return w[:, None] * ((1 + np.abs(m)) ** (-p.mu) * np.exp(-p.beta * np.abs(m)))[None, :]


def test_norm_weighted_of_inverse_weight_is_one():
    p = NormParams(0.7, 1.0, 2.0, 1.0)
    sym = SampledSymbol([0.0, 1.0], GRID, FREQ, np.stack([_inverse_weight(p, GRID, FREQ)] * 2))
    assert norm_weighted(sym, p) == pytest.approx(1.0, rel=1e-13)
    assert norm_weighted(SampledSymbol.zeros([0.0], GRID, FREQ), p) == 0.0


def test_norm_params_positive():
    with pytest.raises(ValueError):
        NormParams(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        NormParams(1.0, 1.0, 1.0, -1.0)


arrays = st.integers(0, 2 ** 32 - 1).map(lambda s: np.random.default_rng(s))


@settings(max_examples=30, deadline=None)
@given(arrays, st.floats(-5.0, 5.0))
def test_norm_homogeneous_and_subadditive(rng, c):
    p = NormParams(0.5, 1.0, 1.0, 1.0)
    shape = (1, GRID.size, FREQ.size)
    a = SampledSymbol([0.0], GRID, FREQ, rng.normal(size=shape) + 1j * rng.normal(size=shape))
    b = SampledSymbol([0.0], GRID, FREQ, rng.normal(size=shape))
    assert norm_weighted(c * a, p) == pytest.approx(abs(c) * norm_weighted(a, p), rel=1e-12, abs=1e-300)
    assert norm_weighted(a + b, p) <= norm_weighted(a, p) + norm_weighted(b, p) * (1 + 1e-12)


def test_norm_monotone_under_frequency_refinement():
    p = NormParams(0.5, 1.0, 1.0, 1.0)
    fine = FreqGrid(0.25, 24)
    coarse = FreqGrid(0.5, 12)
    f = lambda m: np.exp(-np.abs(m - 0.3)) / (1 + m * m)  # noqa: E731
    r = GRID.nodes[:, None]
    sc = SampledSymbol([0.0], GRID, coarse, (r * f(coarse.m)[None, :])[None])
    sf = SampledSymbol([0.0], GRID, fine, (r * f(fine.m)[None, :])[None])
    assert set(coarse.m) <= set(fine.m)
    assert norm_weighted(sf, p) >= norm_weighted(sc, p)


def test_symbol_shape_and_finiteness_checked():
    with pytest.raises(ValueError):
        SampledSymbol([0.0], GRID, FREQ, np.zeros((1, 3, FREQ.size)))
    bad = np.zeros((1, GRID.size, FREQ.size))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        SampledSymbol([0.0], GRID, FREQ, bad)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    shape = (2, GRID.size, FREQ.size)
    sym = SampledSymbol([0.0, 0.5], GRID, FREQ, rng.normal(size=shape) + 1j * rng.normal(size=shape),
                        meta={"eps": [1.0, 0.0]})
    path = tmp_path / "w.npz"
    sym.save(path)
    back = SampledSymbol.load(path)
    assert np.array_equal(back.values, sym.values)
    assert np.array_equal(back.directions, sym.directions)
    assert back.grid == sym.grid and back.freq == sym.freq and back.meta == sym.meta


def test_evaluate_interpolates_along_ray():
    r = GRID.nodes
    vals = (r[:, None] ** 2) * np.cos(FREQ.m)[None, :]
    sym = SampledSymbol([0.3], GRID, FREQ, vals[None])
    rho = np.array([0.1, 1.234, 5.9])
    assert np.allclose(sym.evaluate(0, rho), rho[:, None] ** 2 * np.cos(FREQ.m)[None, :], atol=1e-12)
    assert np.allclose(sym.points(0), r * np.exp(0.3j))
