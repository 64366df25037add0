"""Laplace transforms along rays, Fourier inversion and solution assembly.

Conventions
-----------
* ``L_k(g)(T) = k int_0^{inf e^{i d}} g(u) exp(-(u/T)^k) du/u`` along a ray of
  direction ``d`` with damping ``cos(k (d - arg T)) >= delta1``.
* ``F^{-1}(f)(z) = (2 pi)^{-1/2} int f(m) exp(i z m) dm``.

Every ray integral is computed with the substitution ``u = |T| s e^{i d}``
and composite Gauss-Legendre panels in ``s`` whose widths grow with ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly
from numpy.polynomial.legendre import leggauss

from .banach import FreqGrid, RadialGrid, SampledSymbol
from .fixedpoint import CoefficientProfile, ForcingProfile, profile_shape
from .geometry import GeometryError, wrap_angle
from .opalgebra import DiffOperator
from .problem import ProblemSpec
from .specfun import lgamma

__all__ = [
    "LaplaceDirectionError",
    "LaplaceRangeError",
    "StripError",
    "laplace_order",
    "laplace_weights",
    "kernel_derivative_poly",
    "fourier_inverse",
    "build_W_d",
    "forcing_growth_rate",
    "build_forcing",
    "forcing_series",
    "TauTransform",
    "SectorSolution",
    "ArcDifference",
    "build_solution",
    "pde_residual",
    "t_operator_fd",
    "fd_weights",
    "ray_growth",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)
TAIL_TARGET = 40.0  # kernel exponent at the truncation point (e^-40 ~ 4e-18)


class LaplaceDirectionError(GeometryError):
    """The kernel is not damped enough along the requested direction."""


class LaplaceRangeError(ValueError):
    """A truncation or stencil leaves the range where data is available."""


class StripError(ValueError):
    """|Im z| is outside the strip where the Fourier integral converges."""


# --------------------------------------------------------------------------
# quadrature in the scaled variable s = |u| / |scale|


@lru_cache(maxsize=256)
def _s_rule(s_max: float, n: int = 20, h0: float = 0.125, growth: float = 1.3, h_cap: float = 1.5):
    x, w = leggauss(n)
    b = [0.0]
    h = h0
    while b[-1] < s_max:
        b.append(b[-1] + h)
        h = min(h * growth, h_cap)
    b = np.asarray(b)
    lo, hi = b[:-1, None], b[1:, None]
    nodes = (0.5 * (lo + hi) + 0.5 * (hi - lo) * x).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _damping(order: float, direction: float, scale: complex) -> float:
    return math.cos(order * wrap_angle(direction - math.atan2(scale.imag, scale.real)))


def _s_max(order: float, damp: float, scale_abs: float, growth: tuple, target: float) -> float:
    """Smallest s (on a doubling/bisection search) with damp s^order - nu (|scale| s)^g >= target."""
    nu, g = growth

    def expo(s):
        return damp * s ** order - nu * (scale_abs * s) ** g

    hi = 1.0
    while expo(hi) < target:
        hi *= 2.0
        if hi > 1e6:
            raise LaplaceRangeError("growth of the integrand is not dominated by the kernel")
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if expo(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def kernel_derivative_poly(j: int, order: int) -> np.ndarray:
    """Coefficients (increasing) of p_j with (tau d_tau)^j exp(-x) = p_j(x) exp(-x),
    x = (u/tau)^order; p_{j+1} = order x (p_j - p_j')."""
    p = np.array([1.0])
    for _ in range(j):
        p = order * npoly.polymulx(npoly.polysub(p, npoly.polyder(p)) if p.size > 1 else p)
    return p


def laplace_order(w, order: int, scale: complex, delta1: float = 0.5, direction: float | None = None,
                  ray: int | None = None, growth: tuple = (0.0, 1.0), tail_tol: float = 1e-10,
                  target: float = TAIL_TARGET):
    """order int_{L_d} w(u) exp(-(u/scale)^order) du/u.

    ``w`` is a callable of complex ``u`` (vectorized, leading axis over ``u``)
    or a :class:`SampledSymbol` (then ``ray`` selects the ray, or ``direction``
    picks the stored ray closest to it, and the result is a vector over m).
    ``growth = (nu, g)`` bounds |w(u)| by C exp(nu |u|^g) for the truncation.
    """
    scale = complex(scale)
    if scale == 0:
        raise ValueError("scale must be nonzero")
    sampled = isinstance(w, SampledSymbol)
    if sampled:
        if ray is None:
            if direction is None:
                ray = 0
            else:
                ray = int(np.argmin(np.abs(wrap_angle(w.directions - direction))))
        direction = float(w.directions[ray])
    elif direction is None:
        direction = math.atan2(scale.imag, scale.real)
    damp = _damping(order, direction, scale)
    if damp < delta1:
        raise LaplaceDirectionError(
            f"cos(order (d - arg scale)) = {damp:.3g} < delta1 = {delta1}", witness=direction)
    s_max = _s_max(order, damp, abs(scale), growth, target)
    s, ws = _s_rule(round(s_max, 6))
    if sampled:
        r_cap = w.grid.r_max / abs(scale)
        keep = s <= r_cap
        s, ws = s[keep], ws[keep]
        u = abs(scale) * s
        vals = w.grid.interp_matrix(u) @ w.values[ray]
    else:
        u = abs(scale) * s * np.exp(1j * direction)
        vals = np.asarray(w(u), dtype=complex)
    phi = direction - math.atan2(scale.imag, scale.real)
    kern = np.exp(-(s * np.exp(1j * phi)) ** order) * ws / s
    shape = (-1,) + (1,) * (vals.ndim - 1)
    res = order * np.sum(kern.reshape(shape) * vals, axis=0)
    # tail estimate from the integrand at the last node
    if s.size:
        s_end = s[-1]
        slope = max(order * damp * s_end ** order - growth[1] * growth[0] * (abs(scale) * s_end) ** growth[1], 1.0)
        tail = np.max(np.abs(vals[-1])) * math.exp(-damp * s_end ** order) * order / slope
        ref = max(float(np.max(np.abs(res))), float(np.max(np.abs(vals))) * 1e-300)
        if ref > 0 and tail > tail_tol * max(ref, 1e-300) and tail > 1e-300:
            raise LaplaceRangeError(f"tail estimate {tail:.3g} exceeds {tail_tol:g} x |result|")
    return res if np.ndim(res) else complex(res)


def laplace_weights(grid: RadialGrid, direction: float, order: int, scales, deriv: int = 0,
                    delta1: float = 0.5, target: float = TAIL_TARGET, growth: tuple = (0.0, 1.0),
                    r_start: float = 0.0):
    """Matrix A with (A @ values)[i] = order int_{r_start}^{inf} w(rho e^{id}) p_j(x) e^{-x} d rho/rho,
    x = (rho e^{id}/scales[i])^order, for values sampled on ``grid``.

    Also returns the per-row truncation radius and the kernel magnitude there,
    which bound the neglected tail once multiplied by |w| at that radius.
    """
    scales = np.atleast_1d(np.asarray(scales, dtype=complex))
    p = kernel_derivative_poly(deriv, order)
    target = target + 4.0 * deriv  # p_j(x) grows like x^j at the cut-off
    A = np.zeros((scales.size, grid.size), complex)
    r_end = np.zeros(scales.size)
    k_end = np.zeros(scales.size)
    for i, sc in enumerate(scales):
        damp = _damping(order, direction, sc)
        if damp < delta1:
            raise LaplaceDirectionError(f"damping {damp:.3g} < {delta1}", witness=(direction, complex(sc)))
        s_lo = r_start / abs(sc)
        # the cut-off is measured relative to the kernel at the start radius
        start = damp * s_lo ** order - growth[0] * r_start ** growth[1]
        s_max = _s_max(order, damp, abs(sc), growth, target + max(start, 0.0))
        s, ws = _s_rule(round(s_max, 6))
        if s_lo > 0:
            # composite rule on [s_lo, s_max] mapped panelwise from the base rule
            s, ws = _segment_rule(s_lo, s_max)
        s_cap = grid.r_max / abs(sc)
        keep = s <= s_cap
        s, ws = s[keep], ws[keep]
        phi = direction - math.atan2(sc.imag, sc.real)
        x = (s * np.exp(1j * phi)) ** order
        kern = order * npoly.polyval(x, p) * np.exp(-x) * ws / s
        A[i] = kern @ grid.interp_matrix(abs(sc) * s)
        r_end[i] = abs(sc) * s[-1] if s.size else r_start
        k_end[i] = float(np.abs(npoly.polyval(x[-1], p) * np.exp(-x[-1]))) if s.size else 0.0
    return A, r_end, k_end


@lru_cache(maxsize=256)
def _segment_rule(a: float, b: float, n: int = 20):
    x, w = leggauss(n)
    bps = [a]
    h = max(0.125, 0.1 * a)
    while bps[-1] < b:
        bps.append(bps[-1] + h)
        h = min(h * 1.3, 1.5)
    bps = np.asarray(bps)
    lo, hi = bps[:-1, None], bps[1:, None]
    return (0.5 * (lo + hi) + 0.5 * (hi - lo) * x).ravel(), (0.5 * (hi - lo) * w).ravel()


def _tail(grid: RadialGrid, values: np.ndarray, r_end, k_end) -> np.ndarray:
    """|integrand| at the truncation radius of each row (tail size estimate)."""
    r_end = np.minimum(np.asarray(r_end), grid.r_max)
    at_end = np.abs(grid.interp_matrix(r_end) @ values).max(axis=1)
    return k_end * at_end


def ray_growth(grid: RadialGrid, values: np.ndarray, order: float = 1.0) -> float:
    """Slope a of log max_m |w| against r^order on the outer half of a ray."""
    r = grid.nodes
    v = np.max(np.abs(values), axis=1)
    sel = (r > 0.5 * r[-1]) & (v > 0)
    if sel.sum() < 3:
        return 0.0
    return max(float(np.polyfit(r[sel] ** order, np.log(v[sel]), 1)[0]), 0.0)


def _check_tail(grid, values, r_end, k_end, result, tol=1e-12, what="radial grid too short"):
    tail = _tail(grid, values, r_end, k_end)
    scale = np.max(np.abs(result), axis=1)
    bad = (tail > tol * scale) & (tail > 1e-300)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise LaplaceRangeError(f"{what}: tail {tail[i]:.3g} vs |result| {scale[i]:.3g} (row {i})")


# --------------------------------------------------------------------------
# Fourier inversion


def fourier_inverse(f, z, beta: float | None = None, freq: FreqGrid | None = None,
                    m_max: float = 60.0, kinks=(0.0,), panel: float = 0.5, n: int = 20):
    """(2 pi)^-1/2 int f(m) e^{izm} dm.

    ``f`` is either a callable (composite Gauss-Legendre on [-m_max, m_max],
    panels split at ``kinks``) or an array sampled on ``freq`` (trapezoid
    rule).  With ``beta`` given, |Im z| >= beta raises :class:`StripError`.
    """
    z = np.asarray(z, dtype=complex)
    if beta is not None and np.any(np.abs(z.imag) >= beta):
        raise StripError(f"|Im z| must stay below beta = {beta}")
    if callable(f):
        x, w = leggauss(n)
        cuts = sorted({-m_max, m_max, *[c for c in kinks if -m_max < c < m_max]})
        bps = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            npan = max(1, int(math.ceil((hi - lo) / panel)))
            bps.extend(np.linspace(lo, hi, npan + 1)[:-1])
        bps.append(m_max)
        bps = np.asarray(bps)
        lo, hi = bps[:-1, None], bps[1:, None]
        m = (0.5 * (lo + hi) + 0.5 * (hi - lo) * x).ravel()
        wt = (0.5 * (hi - lo) * w).ravel()
        vals = np.asarray(f(m), dtype=complex)
    else:
        if freq is None:
            raise ValueError("sampled input needs its FreqGrid")
        vals = np.asarray(f, dtype=complex)
        m = freq.m
        wt = np.full(m.size, freq.h)
    phase = np.exp(1j * np.multiply.outer(z, m))
    out = (phase * (wt * vals)) .sum(axis=-1) / SQRT_2PI
    return complex(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# forcing


def forcing_growth_rate(spec: ProblemSpec) -> float:
    """nu1 with L_{k'}(exp((u/T_f)^k1))(tau) ~ exp(nu1 |tau|^kappa1) (saddle point)."""
    k1, kp = spec.k1, spec.kprime
    a = spec.forcing_T ** (-k1)
    return a * (1.0 - k1 / kp) * (k1 * a / kp) ** (k1 / (kp - k1))


def forcing_series(spec: ProblemSpec, profile: ForcingProfile, T, z, n_terms: int | None = None,
                   tail_tol: float = 1e-14):
    """sum_n F_n(z) Gamma(n/k) Gamma(n/k') / Gamma(n/k1 + 1) T^n for the separable profile."""
    T = np.asarray(T, dtype=complex)
    N = profile.n_modes() if n_terms is None else n_terms
    acc = np.zeros_like(T)
    last = 0.0
    for n in range(1, N + 1):
        wn = profile.mode_weight(n)
        if wn == 0.0:
            continue
        lg = lgamma(n / spec.k) + lgamma(n / spec.kprime) - lgamma(n / spec.k1 + 1.0)
        term = wn * np.exp(lg + n * np.log(T))
        acc = acc + term
        last = float(np.max(np.abs(term)))
        if n > 10 and last < tail_tol * float(np.max(np.abs(acc))):
            break
    else:
        if last > 1e-10 * float(np.max(np.abs(acc)) + 1e-300):
            raise LaplaceRangeError("coefficient series not converged within the stored modes")
    shape_z = _shape_inverse(profile, z)
    return np.multiply.outer(acc, shape_z) if np.ndim(acc) else acc * shape_z


def _shape_inverse(profile: ForcingProfile, z):
    kinks = (0.0,) if profile.kind == "abs" else ()
    mm = 40.0 / profile.beta
    return fourier_inverse(lambda m: profile_shape(m, profile.kind, profile.beta, profile.mu), z,
                           beta=profile.beta, m_max=mm, kinks=kinks)


def _radial_forcing_transform(spec: ProblemSpec, profile: ForcingProfile, T: complex, delta1: float):
    """L_k of tau -> L_{k'}(phi)(tau) at T, phi the radial factor of psi.

    Both rays point along arg T.  The inner rule is shared by every outer
    node (its cut-off is set by the largest tau), so phi is evaluated once on
    a tensor grid.
    """
    k, kp = spec.k, spec.kprime
    gam = math.atan2(T.imag, T.real)
    nu1 = forcing_growth_rate(spec)
    a = profile.T0 ** (-profile.k1)
    s_out = _s_max(k, 1.0, abs(T), (nu1, float(spec.kappa1)), TAIL_TARGET)
    so, wo = _s_rule(round(s_out, 6))
    tau_max = abs(T) * so[-1]
    s_in = _s_max(kp, 1.0, tau_max, (a, float(profile.k1)), TAIL_TARGET)
    si, wi = _s_rule(round(s_in, 6))
    tau = abs(T) * so
    u = np.outer(tau, si) * np.exp(1j * gam)
    phi = profile.radial_series(u.ravel()).reshape(u.shape)
    Phi = kp * (phi * (np.exp(-si ** kp) * wi / si)[None, :]).sum(axis=1)
    return complex(k * np.sum(Phi * np.exp(-so ** k) * wo / so))


def build_forcing(spec: ProblemSpec, profile: ForcingProfile | None, T, z, eps=None,
                  delta1: float = 0.5, method: str = "iterated"):
    """F_d(T, z) from psi by Laplace of order k' then k and Fourier inversion.

    ``method='series'`` sums the coefficient series instead (cross-check).
    Only the convergent/entire branch kappa1 <= k is accepted.
    """
    if profile is None:
        profile = ForcingProfile.from_spec(spec)
    if spec.kappa1 > spec.k:
        raise ValueError("kappa1 > k: forcing branch not covered")
    if method == "series":
        return forcing_series(spec, profile, T, z)
    if method != "iterated":
        raise ValueError(f"unknown method {method!r}")
    T = np.atleast_1d(np.asarray(T, dtype=complex))
    rad = np.array([_radial_forcing_transform(spec, profile, complex(t), delta1) if t != 0 else 0j
                    for t in T])
    out = np.multiply.outer(rad, _shape_inverse(profile, z))
    return out[0] if out.shape[0] == 1 and np.ndim(T) == 1 and T.size == 1 else out


def build_W_d(wd: SampledSymbol, spec: ProblemSpec, tau, m=None, ray: int = 0, deriv: int = 0,
              delta1: float = 0.5):
    """W^d(tau, m) = L_{k'}(w^d(., m))(tau) along the stored ray ``ray``.

    Returns an array (len(tau), M); with ``m`` given, values are restricted
    to those grid frequencies.  ``deriv = j`` returns (tau d_tau)^j W.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=complex))
    a = ray_growth(wd.grid, wd.values[ray], spec.k1)
    A, r_end, k_end = laplace_weights(wd.grid, float(wd.directions[ray]), spec.kprime, tau, deriv, delta1,
                                      growth=(a, float(spec.k1)))
    W = A @ wd.values[ray]
    _check_tail(wd.grid, wd.values[ray], r_end, k_end, W)
    if m is not None:
        idx = [int(np.argmin(np.abs(wd.freq.m - mm))) for mm in np.atleast_1d(m)]
        W = W[:, idx]
    return W


# --------------------------------------------------------------------------
# transforms along a fixed tau ray


@dataclass
class TauTransform:
    """Order-k Laplace transform in tau followed by Fourier inversion, for
    symbols sampled on fixed tau nodes along the direction ``gamma``."""

    k: int
    gamma: float
    freq: FreqGrid
    tau_min: float
    tau_max: float
    n: int = 16
    ratio: float = 1.35

    def __post_init__(self):
        b = [0.0, self.tau_min]
        while b[-1] < self.tau_max:
            b.append(b[-1] * self.ratio)
        self.grid = RadialGrid(tuple(b), self.n)
        self.radii = self.grid.nodes
        self.tau = self.radii * np.exp(1j * self.gamma)

    def check(self, T: complex, delta1: float, growth: tuple = (0.0, 2.0)) -> float:
        damp = _damping(self.k, self.gamma, complex(T))
        if damp < delta1:
            raise LaplaceDirectionError(f"arg(eps t) too far from the tau direction (damping {damp:.3g})",
                                        witness=complex(T))
        s_max = _s_max(self.k, damp, abs(T), growth, TAIL_TARGET)
        if abs(T) * s_max > self.tau_max:
            raise LaplaceRangeError(f"|eps t| = {abs(T):.3g} needs tau up to {abs(T) * s_max:.3g}")
        if abs(T) < 2.0 * self.tau_min:
            raise LaplaceRangeError(f"|eps t| = {abs(T):.3g} below the resolved range")
        return damp

    def kernel(self, T: complex) -> np.ndarray:
        x = (self.tau / complex(T)) ** self.k
        return self.k * np.exp(-x) * self.grid.weights / self.radii

    def laplace(self, values: np.ndarray, T: complex) -> np.ndarray:
        """(n_tau, M) -> (M,)."""
        return self.kernel(T) @ values

    def fourier(self, mvals: np.ndarray, z) -> np.ndarray:
        return fourier_inverse(mvals, z, freq=self.freq)


class SectorSolution:
    """u_p(t, z, eps) from the fixed point on one ray, with the tau-side symbols
    needed for the residual precomputed on fixed tau nodes.

    The tau direction is ``gamma``; every evaluation requires
    cos(k (gamma - arg(eps t))) >= delta1.
    """

    def __init__(self, spec: ProblemSpec, w: SampledSymbol, ray: int, gamma: float,
                 T_min: float, T_max: float, delta1: float = 0.5, eps: complex = 1.0,
                 coefficients=None, forcing: ForcingProfile | None = None):
        self.spec = spec
        self.w = w
        self.ray = ray
        self.delta1 = delta1
        self.eps = complex(eps)
        self.direction = float(w.directions[ray])
        self.growth = ray_growth(w.grid, w.values[ray], spec.k1)
        nu1 = self._growth_estimate()
        k = spec.k
        # tau range: resolve |T| down to T_min and damp the growth of W up to T_max
        s_max = _s_max(k, delta1, T_max, (nu1, float(spec.kappa1)), TAIL_TARGET)
        self.tt = TauTransform(k, gamma, w.freq, 0.05 * T_min, 1.05 * T_max * s_max)
        self.nu1 = nu1
        J = max([spec.m_D] + [l[1] for l in spec.I])
        self.W = []
        for j in range(J + 1):
            A, r_end, k_end = laplace_weights(w.grid, self.direction, spec.kprime, self.tt.tau, j, 0.05,
                                              growth=(self.growth, float(spec.k1)))
            Wj = A @ w.values[ray]
            _check_tail(w.grid, w.values[ray], r_end, k_end, Wj,
                        what=f"radial grid (R={w.grid.r_max}) too short for tau up to {self.tt.tau_max:.3g}")
            self.W.append(Wj)
        self.coefficients = coefficients if coefficients is not None else [
            CoefficientProfile(c, spec.profile_kind, spec.beta, spec.mu) for c in spec.c_l]
        self.forcing = forcing if forcing is not None else ForcingProfile.from_spec(spec)
        self._c_cache = {}

    def _growth_estimate(self) -> float:
        """Growth rate nu1 of |W| ~ exp(nu1 |tau|^kappa1) predicted from the ray data:
        fit |w| ~ exp(a r^k1) on the outer half of the ray and apply the saddle formula."""
        k1, kp = self.spec.k1, self.spec.kprime
        a = max(self.growth, 1e-6)
        return a * (1.0 - k1 / kp) * (k1 * a / kp) ** (k1 / (kp - k1))

    def _T(self, t, eps) -> complex:
        T = complex(eps) * complex(t)
        self.tt.check(T, self.delta1, (self.nu1, float(self.spec.kappa1)))
        return T

    def symbol(self, t, eps) -> np.ndarray:
        """U(T, m) = L_k(W(., m))(eps t) on the frequency grid."""
        return self.tt.laplace(self.W[0], self._T(t, eps))

    def __call__(self, t, z, eps):
        return self.tt.fourier(self.symbol(t, eps), z)

    # residual ingredients -------------------------------------------------
    def c_of_z(self, l: int, z):
        key = (l, complex(z))
        if key not in self._c_cache:
            C = self.coefficients[l]
            kinks = (0.0,) if C.kind == "abs" else ()
            self._c_cache[key] = fourier_inverse(C, z, beta=C.beta, m_max=40.0 / C.beta, kinks=kinks)
        return self._c_cache[key]

    def t_operator(self, t, z, eps, l1: int, l2: int) -> complex:
        """(T^{k+1} d_T)^l1 (T d_T)^l2 u at T = eps t through the integral
        representation: multiplication by (k tau^k)^l1 of (tau d_tau)^l2 W."""
        k = self.spec.k
        if l2 >= len(self.W):
            raise ValueError(f"(tau d_tau)^{l2} W was not precomputed")
        kern = self.tt.kernel(self._T(t, eps))
        vals = (k ** l1) * self.tt.tau[:, None] ** (k * l1) * self.W[l2]
        return complex(self.tt.fourier(kern @ vals, z))

    def operator_terms(self, t, z, eps) -> dict:
        """The four groups of terms of the equation at (t, z, eps), each computed
        through its integral representation (multiplication by k tau^k for
        T^{k+1} d_T, tau d_tau under the integral, i m for d_z)."""
        spec = self.spec
        T = self._T(t, eps)
        m = self.w.freq.m
        k, d = spec.k, spec.delta_D
        kern = self.tt.kernel(T)
        tau_k = self.tt.tau ** k
        lhs = spec.Q.at_im(m) * (kern @ self.W[0])
        main = spec.R_D.at_im(m) * (kern @ ((k ** d) * tau_k[:, None] ** d * self.W[spec.m_D]))
        lower = []
        for idx, (l, Dl) in enumerate(zip(spec.I, spec.Delta)):
            l1, l2 = l
            sym = complex(eps) ** (Dl - k * l1) * (k ** l1) * tau_k[:, None] ** l1 * self.W[l2]
            lower.append(spec.R_l[idx].at_im(m) * (kern @ sym))
        out = {
            "Q": complex(self.tt.fourier(lhs, z)),
            "main": complex(self.tt.fourier(main, z)),
            "lower": [complex(self.c_of_z(i, z) * self.tt.fourier(v, z)) for i, v in enumerate(lower)],
            "u": complex(self.tt.fourier(kern @ self.W[0], z)),
        }
        out["f"] = complex(build_forcing(spec, self.forcing, T, z, delta1=self.delta1))
        return out


def build_solution(spec: ProblemSpec, wd_p: SampledSymbol, data, p: int, t, z, eps,
                   ray: int | None = None, solution: SectorSolution | None = None):
    """u_p(t, z, eps); checks eps in E_p, t in the time sector and the strip.

    ``solution`` reuses a precomputed :class:`SectorSolution`.
    """
    E = data.coverings[p]
    if not bool(E.contains(complex(eps))):
        raise GeometryError(f"eps = {eps} is not in E_{p}", witness=complex(eps))
    if not bool(data.T_sector.contains(complex(t))):
        raise GeometryError(f"t = {t} is not in the time sector", witness=complex(t))
    if abs(complex(z).imag) >= spec.beta:
        raise StripError("|Im z| >= beta")
    if solution is None:
        if ray is None:
            ray = int(np.argmin(np.abs(wrap_angle(wd_p.directions - data.U_sectors[p].direction))))
        T = abs(complex(eps) * complex(t))
        gamma = math.atan2(complex(eps * t).imag, complex(eps * t).real)
        solution = SectorSolution(spec, wd_p, ray, gamma, T, T, data.delta1, eps)
    return solution(t, z, eps)


# --------------------------------------------------------------------------
# difference of adjacent solutions through a deformed contour


class ArcDifference:
    """u_{p+1} - u_p computed without subtracting two O(1) numbers.

    With the two u-rays at angles a_lo < a_hi and no root of P_m inside the
    disc of radius r0, the difference of the order-k' transforms equals the
    integral along the arc |u| = r0 between the rays plus the two ray tails
    beyond r0.  ``w_arc`` holds the fixed point on short rays through the arc
    quadrature nodes (values at r0 are read from it).
    """

    def __init__(self, spec: ProblemSpec, w_lo: SampledSymbol, w_hi: SampledSymbol,
                 w_arc: SampledSymbol, arc_weights: np.ndarray, r0: float, gamma: float,
                 T_min: float, T_max: float, delta1: float = 0.5, nu1: float | None = None):
        self.spec = spec
        kp = spec.kprime
        a_lo, a_hi = float(w_lo.directions[0]), float(w_hi.directions[0])
        th = w_arc.directions
        if not (np.all(th > a_lo - 1e-12) and np.all(th < a_hi + 1e-12)):
            raise ValueError("arc nodes must lie between the two rays")
        if abs(w_arc.grid.r_max - r0) > 1e-12:
            raise ValueError("arc rays must end at r0")
        nu1 = nu1 if nu1 is not None else forcing_growth_rate(spec)
        s_max = _s_max(spec.k, delta1, T_max, (nu1, float(spec.kappa1)), TAIL_TARGET)
        self.tt = TauTransform(spec.k, gamma, w_lo.freq, 0.05 * T_min, 1.05 * T_max * s_max)
        self.delta1 = delta1
        self.nu1 = nu1
        tau = self.tt.tau
        # arc part: i int w(r0 e^{i th}) exp(-(r0 e^{i th}/tau)^k') d th
        w_r0 = np.array([w_arc.grid.interp_matrix([r0])[0] @ w_arc.values[i] for i in range(th.size)])
        u0 = r0 * np.exp(1j * th)
        ker = np.exp(-(u0[None, :] / tau[:, None]) ** kp) * arc_weights[None, :]
        self.arc = kp * 1j * (ker @ w_r0)
        # ray tails beyond r0
        g_hi = (ray_growth(w_hi.grid, w_hi.values[0], spec.k1), float(spec.k1))
        g_lo = (ray_growth(w_lo.grid, w_lo.values[0], spec.k1), float(spec.k1))
        A_hi, r_hi, k_hi = laplace_weights(w_hi.grid, a_hi, kp, tau, 0, 0.05, growth=g_hi, r_start=r0)
        A_lo, r_lo, k_lo = laplace_weights(w_lo.grid, a_lo, kp, tau, 0, 0.05, growth=g_lo, r_start=r0)
        t_hi = A_hi @ w_hi.values[0]
        t_lo = A_lo @ w_lo.values[0]
        _check_tail(w_hi.grid, w_hi.values[0], r_hi, k_hi, t_hi)
        _check_tail(w_lo.grid, w_lo.values[0], r_lo, k_lo, t_lo)
        self.tails = t_hi - t_lo
        self.D = self.arc + self.tails

    def check(self, T: complex):
        self.tt.check(T, self.delta1, (self.nu1, float(self.spec.kappa1)))

    def __call__(self, t, z, eps):
        T = complex(eps) * complex(t)
        self.check(T)
        return self.tt.fourier(self.tt.laplace(self.D, T), z)


# --------------------------------------------------------------------------
# residual of the equation


def fd_weights(order: int, half: int) -> np.ndarray:
    """Central finite-difference weights for d^order on offsets -half..half."""
    x = np.arange(-half, half + 1, dtype=float)
    V = np.vander(x, increasing=True).T
    rhs = np.zeros(x.size)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


def _t_operator(spec: ProblemSpec) -> DiffOperator:
    return DiffOperator.irregular(spec.k) ** spec.delta_D * DiffOperator.euler() ** spec.m_D


def _lower_operator(spec: ProblemSpec, l) -> DiffOperator:
    return DiffOperator.irregular(spec.k) ** l[0] * DiffOperator.euler() ** l[1]


def _apply_t_fd(op: DiffOperator, u_of_t, t: complex, h: complex) -> complex:
    """sum c t^a d_t^b u at t, derivatives by 2nd-order central stencils of step h."""
    cache = {}

    def val(j):
        if j not in cache:
            cache[j] = u_of_t(t + j * h)
        return cache[j]

    out = 0j
    for (a, b), c in op.terms.items():
        if b == 0:
            d = val(0)
        else:
            half = (b + 1) // 2
            wts = fd_weights(b, half)
            d = sum(wt * val(j) for wt, j in zip(wts, range(-half, half + 1))) / h ** b
        out += float(c) * t ** a * d
    return out


def _apply_z_poly(poly, g_of_z, z: complex, h: float) -> complex:
    """P(d_z) g at z with 4th-order central differences."""
    out = 0j
    for j, c in enumerate(poly.coeffs):
        if c == 0:
            continue
        if j == 0:
            out += c * g_of_z(z)
            continue
        half = (j + 1) // 2 + 1
        wts = fd_weights(j, half)
        d = sum(wt * g_of_z(z + i * h) for wt, i in zip(wts, range(-half, half + 1))) / h ** j
        out += c * d
    return out


def t_operator_fd(spec: ProblemSpec, u_fn, t, z, eps, l1: int, l2: int, h_t: float) -> complex:
    """eps^{k l1} (t^{k+1} d_t)^l1 (t d_t)^l2 u by central differences of step h_t
    along arg t; equals (T^{k+1} d_T)^l1 (T d_T)^l2 u at T = eps t."""
    t, z, eps = complex(t), complex(z), complex(eps)
    op = DiffOperator.irregular(spec.k) ** l1 * DiffOperator.euler() ** l2
    h = h_t * t / abs(t)
    if 3 * abs(h) >= abs(t):
        raise LaplaceRangeError("t-stencil reaches the origin")
    return eps ** (spec.k * l1) * _apply_t_fd(op, lambda tt: u_fn(tt, z, eps), t, h)


def pde_residual(spec: ProblemSpec, u_fn, t, z, eps, h_t=None, h_z=None, method: str = "representation"):
    """LHS - RHS of the equation at (t, z, eps).

    ``method='representation'`` needs a :class:`SectorSolution` (derivatives
    under the integrals); ``method='fd'`` accepts any callable u(t, z, eps)
    and uses finite differences (2nd order in t, 4th order in z).  Returns
    ``(residual, scale)`` with ``scale`` the largest term magnitude.
    """
    t, z, eps = complex(t), complex(z), complex(eps)
    if method == "representation":
        if not isinstance(u_fn, SectorSolution):
            raise TypeError("representation path needs a SectorSolution")
        terms = u_fn.operator_terms(t, z, eps)
        res = terms["Q"] - terms["main"] - sum(terms["lower"]) - terms["f"]
        scale = max(abs(terms["Q"]), abs(terms["main"]), *[abs(v) for v in terms["lower"]], abs(terms["f"]))
        return res, scale
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")
    if t == 0:
        raise LaplaceRangeError("t must be away from 0")
    h_t = 0.02 * abs(t) if h_t is None else h_t
    h_z = 0.05 if h_z is None else h_z
    h = h_t * t / abs(t)
    if 3 * abs(h) >= abs(t):
        raise LaplaceRangeError("t-stencil reaches the origin")
    if abs(z.imag) + 3 * h_z >= spec.beta:
        raise LaplaceRangeError("z-stencil leaves the strip")
    k = spec.k
    op_main = _t_operator(spec)
    # eps^{k dD} (t^{k+1} d_t)^dD (t d_t)^mD
    main_t = lambda zz: eps ** (k * spec.delta_D) * _apply_t_fd(op_main, lambda tt: u_fn(tt, zz, eps), t, h)
    Q_term = _apply_z_poly(spec.Q, lambda zz: u_fn(t, zz, eps), z, h_z)
    main = _apply_z_poly(spec.R_D, main_t, z, h_z)
    lower = []
    coeffs = [CoefficientProfile(c, spec.profile_kind, spec.beta, spec.mu) for c in spec.c_l]
    for idx, (l, Dl) in enumerate(zip(spec.I, spec.Delta)):
        op = _lower_operator(spec, l)
        inner = lambda zz, op=op, Dl=Dl: eps ** Dl * _apply_t_fd(op, lambda tt: u_fn(tt, zz, eps), t, h)
        C = coeffs[idx]
        cz = fourier_inverse(C, z, beta=C.beta, m_max=40.0 / C.beta, kinks=(0.0,) if C.kind == "abs" else ())
        lower.append(cz * _apply_z_poly(spec.R_l[idx], inner, z, h_z))
    f = complex(build_forcing(spec, None, eps * t, z))
    res = Q_term - main - sum(lower) - f
    scale = max(abs(Q_term), abs(main), *[abs(v) for v in lower], abs(f))
    return res, scale
