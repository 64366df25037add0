"""Borel-plane convolution equation and its Picard iteration.

The unknown w(u, m) lives on rays u = r e^{i theta}.  Every convolution
operator of the equation is ray-closed (it only reads w on [0, u]), so on a
fixed ray it becomes a dense matrix acting on the radial nodes.  Frequencies
couple only through the coefficient convolutions in m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .banach import FreqGrid, NormParams, RadialGrid, SampledSymbol, norm_weighted
from .opalgebra import euler_power_expand, tahara_expand, validate_structure
from .problem import ProblemSpec
from .specfun import gamma, lgamma

__all__ = [
    "profile_shape",
    "ForcingProfile",
    "CoefficientProfile",
    "forcing_psi",
    "radial_rule",
    "radial_convolution_matrix",
    "radial_convolution",
    "fourier_convolve",
    "convolution_terms",
    "HOperator",
    "apply_H_epsilon",
    "FixedPointReport",
    "NonContractionError",
    "solve_fixed_point",
    "formal_borel_coefficients",
    "P_symbol",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)


def profile_shape(m, kind: str, beta: float, mu: float):
    """Frequency profile in the (beta, mu) space.

    ``"abs"``: (1+|m|)^-mu e^{-beta|m|}; ``"smooth"``: (1+m^2)^{-mu/2} sech(beta m),
    an analytic profile in the same weighted space.
    """
    m = np.asarray(m, dtype=float)
    if kind == "abs":
        return (1.0 + np.abs(m)) ** (-mu) * np.exp(-beta * np.abs(m))
    if kind == "smooth":
        return (1.0 + m * m) ** (-mu / 2.0) / np.cosh(beta * m)
    raise ValueError(f"unknown profile kind {kind!r}")


@dataclass(frozen=True)
class ForcingProfile:
    """psi_n(m) = K0 (1/T0)^n * shape(m) for 1 <= n <= N.

    Here ``T0`` is the radius of the forcing modes; ``from_spec`` takes it
    from ``spec.forcing_T``, which may exceed the norm radius ``spec.T0``.
    """

    K0: float
    T0: float
    k1: int
    N: int = 200
    kind: str = "smooth"
    beta: float = 1.0
    mu: float = 3.0
    modes: tuple | None = None  # optional explicit mode weights replacing K0 T0^-n

    @classmethod
    def from_spec(cls, spec: ProblemSpec, N: int = 200, modes=None) -> "ForcingProfile":
        return cls(spec.K0, spec.forcing_T, spec.k1, N, spec.profile_kind, spec.beta, spec.mu, modes)

    def mode_weight(self, n: int) -> float:
        if self.modes is not None:
            return float(self.modes[n - 1]) if n <= len(self.modes) else 0.0
        return self.K0 * (1.0 / self.T0) ** n

    def psi_n(self, n: int, m, eps=None):
        return self.mode_weight(n) * profile_shape(m, self.kind, self.beta, self.mu)

    def n_modes(self) -> int:
        return min(self.N, len(self.modes)) if self.modes is not None else self.N

    def radial_series(self, u, order_k1: float | None = None):
        """sum_n weight_n u^n / Gamma(n/k1 + 1) (the m-independent factor)."""
        u = np.asarray(u, dtype=complex)
        k1 = self.k1 if order_k1 is None else order_k1
        acc = np.zeros_like(u)
        for n in range(1, self.n_modes() + 1):
            wn = self.mode_weight(n)
            if wn == 0.0:
                continue
            acc = acc + wn * np.exp(n * np.log(u + (u == 0)) - lgamma(n / k1 + 1.0)) * (u != 0)
        return acc

    def required_truncation(self, r_max: float, rtol: float = 1e-10) -> int:
        """Smallest N with the dropped tail below rtol of the partial sum on |u| <= r_max."""
        total = 0.0
        for n in range(1, 100000):
            t = math.exp(n * math.log(r_max / self.T0) - lgamma(n / self.k1 + 1.0)) * self.K0
            total += t
            if n > r_max / self.T0 and t < rtol * total * 0.1:
                return n
        raise RuntimeError("truncation search failed")

    def check_tail(self, r_max: float, rtol: float = 1e-10) -> None:
        need = self.required_truncation(r_max, rtol)
        if self.modes is None and self.N < need:
            raise ValueError(f"forcing truncation N={self.N} too small, need N >= {need}")


def forcing_psi(profile: ForcingProfile, u, m, eps=None):
    """psi(u, m) = sum_{n<=N} psi_n(m) u^n / Gamma(n/k1 + 1), broadcast over u x m."""
    u = np.asarray(u, dtype=complex)
    m = np.asarray(m, dtype=float)
    shape = profile_shape(m, profile.kind, profile.beta, profile.mu)
    return np.multiply.outer(profile.radial_series(u), shape)


@dataclass(frozen=True)
class CoefficientProfile:
    """C_l(m) = c * shape(m); the scalar c is the knob controlling contraction."""

    c: float
    kind: str = "smooth"
    beta: float = 1.0
    mu: float = 3.0

    def __call__(self, m):
        return self.c * profile_shape(m, self.kind, self.beta, self.mu)

    def bound(self, m) -> float:
        m = np.asarray(m, dtype=float)
        w = (1 + np.abs(m)) ** self.mu * np.exp(self.beta * np.abs(m))
        return float(np.max(w * np.abs(self(m))))


def P_symbol(spec: ProblemSpec, u, m):
    """P_m(u) = Q(im) - R_D(im) k^delta_D k'^m_D u^(k delta_D), shape (len(u), len(m))."""
    u = np.asarray(u, dtype=complex)
    qm = spec.Q.at_im(m)
    rm = spec.R_D.at_im(m)
    c = spec.k ** spec.delta_D * spec.kprime ** spec.m_D
    return qm[None, :] - rm[None, :] * c * (u ** (spec.k * spec.delta_D))[:, None]


# --------------------------------------------------------------------------
# radial quadrature


@lru_cache(maxsize=None)
def _jacobi(n: int, alpha: float, beta_: float):
    x, w = roots_jacobi(n, alpha, beta_)
    return x, w


@lru_cache(maxsize=None)
def _legendre(n: int):
    return leggauss(n)


def radial_rule(r: float, a: float, b: float, kprime: int, grid: RadialGrid, extra: int = 6):
    """Nodes rho and weights with

        int_0^1 (1 - x^k')^(a-1) x^(k' b - 1) g(r x) dx  ~  sum wt * g(rho).

    A Gauss-Jacobi window absorbs the (1-x)^(a-1) endpoint factor; the rest of
    [0, 1] is split at the panel breakpoints and integrated by Gauss-Legendre.
    """
    if r <= 0:
        return np.zeros(0), np.zeros(0)
    n = grid.n + extra
    L = min(r, float(grid.panel_width_at(r)))
    x0 = 1.0 - L / r
    rho_all, w_all = [], []
    if x0 > 0:
        cut = r - L
        pts = [0.0] + [bp for bp in grid.breakpoints if 0.0 < bp < cut - 0.2 * L] + [cut]
        xg, wg = _legendre(n)
        for lo, hi in zip(pts[:-1], pts[1:]):
            xl, xh = lo / r, hi / r
            x = 0.5 * (xl + xh) + 0.5 * (xh - xl) * xg
            wt = 0.5 * (xh - xl) * wg * (1.0 - x ** kprime) ** (a - 1.0) * x ** (kprime * b - 1.0)
            rho_all.append(r * x)
            w_all.append(wt)
    yj, wj = _jacobi(n, a - 1.0, 0.0)
    x = x0 + (1.0 - x0) * 0.5 * (1.0 + yj)
    geo = sum(x ** i for i in range(kprime))  # (1 - x^k') = (1 - x) * geo
    wt = ((1.0 - x0) / 2.0) ** a * wj * geo ** (a - 1.0) * x ** (kprime * b - 1.0)
    rho_all.append(r * x)
    w_all.append(wt)
    return np.concatenate(rho_all), np.concatenate(w_all)


@lru_cache(maxsize=64)
def _conv_matrix_cached(grid: RadialGrid, a: float, b: float, kprime: int) -> np.ndarray:
    N = grid.size
    out = np.zeros((N, N))
    for i, r in enumerate(grid.nodes):
        rho, wt = radial_rule(float(r), a, b, kprime, grid)
        out[i] = wt @ grid.interp_matrix(rho)
    out.setflags(write=False)
    return out


def radial_convolution_matrix(grid: RadialGrid, a: float, b: float, kprime: int) -> np.ndarray:
    """Real matrix R with (R @ w)[i] = int_0^1 (1-x^k')^(a-1) x^(k'b-1) w(r_i x) dx."""
    return _conv_matrix_cached(grid, float(a), float(b), int(kprime))


def radial_convolution(w: SampledSymbol, u: complex, a: float, b: float, kprime: int) -> np.ndarray:
    """u^k' int_0^{u^k'} (u^k' - s)^(a-1) s^b w(s^(1/k'), m) ds/s for every grid m.

    ``u`` must lie on one of the stored rays; the path s^(1/k') stays on it.
    """
    if a <= 0 or kprime * b <= -1:
        raise ValueError("need a > 0 and k' b > -1")
    theta = math.atan2(u.imag, u.real)
    idx = int(np.argmin(np.abs(np.angle(np.exp(1j * (w.directions - theta))))))
    if abs(np.angle(np.exp(1j * (w.directions[idx] - theta)))) > 1e-12:
        raise ValueError("u is not on a stored ray")
    r = abs(u)
    if r > w.grid.r_max:
        raise ValueError("u outside the radial grid")
    if r == 0:
        return np.zeros(w.freq.size, complex)
    rho, wt = radial_rule(r, a, b, kprime, w.grid)
    vals = wt @ (w.grid.interp_matrix(rho) @ w.values[idx])
    return kprime * u ** (kprime * (a + b)) * vals


def fourier_convolve(C, R_l, g, m, freq: FreqGrid | None = None, m_grid=None):
    """(2 pi)^-1/2 int C(m - m1) R_l(i m1) g(m1) dm1 by the trapezoid rule on the grid."""
    if freq is not None:
        m_grid = freq.m
        h = freq.h
    else:
        m_grid = np.asarray(m_grid, dtype=float)
        h = m_grid[1] - m_grid[0]
    g = np.asarray(g)
    m = np.atleast_1d(np.asarray(m, dtype=float))
    kern = C(m[:, None] - m_grid[None, :])
    out = (kern * (R_l.at_im(m_grid) * g)[None, :]).sum(axis=1) * h / SQRT_2PI
    return out if out.size > 1 else out[0]


def convolution_matrix(C, freq: FreqGrid) -> np.ndarray:
    m = freq.m
    return C(m[:, None] - m[None, :]) * freq.h / SQRT_2PI


# --------------------------------------------------------------------------
# the affine map


def convolution_terms(spec: ProblemSpec):
    """Expand both sides into shifted Borel convolutions.

    Returns ``(main, lower)``: ``main`` is a list of (coef, m', p) for the
    leading term, ``lower[l]`` the same for each (l1, l2) in I.  Each entry
    stands for the Borel image of tau^m' (tau^(k'+1) d_tau)^p.
    """
    table = validate_structure(spec)
    kp, mD = spec.kprime, spec.m_D
    aq = euler_power_expand(mD)
    main = []
    for p, A in enumerate(tahara_expand(kp, mD), start=1):
        main.append((float(A), kp * (mD - p), p))
    for q in range(1, mD):
        dq = table.d[q]
        main.append((float(aq[q - 1]), dq, q))
        for p, A in enumerate(tahara_expand(kp, q), start=1):
            main.append((float(aq[q - 1] * A), dq + kp * (q - p), p))
    lower = []
    for l in spec.I:
        l1, l2 = l
        terms = []
        if l2 == 0:
            terms.append((1.0, spec.k * l1, 0))
        else:
            al = euler_power_expand(l2)
            for q in range(1, l2 + 1):
                e = table.e[(l, q)]
                terms.append((float(al[q - 1]), e, q))
                for p, A in enumerate(tahara_expand(kp, q), start=1):
                    terms.append((float(al[q - 1] * A), e + kp * (q - p), p))
        lower.append(terms)
    return main, lower


class HOperator:
    """The affine map w -> H_eps(w) on a fixed set of rays.

    ``apply(values)`` returns the image values of shape (ndir, N, M); the
    linear part is ``apply(values) - forcing``.
    """

    def __init__(self, spec: ProblemSpec, grid: RadialGrid, freq: FreqGrid, directions,
                 eps: complex = 1.0, forcing: ForcingProfile | None = None,
                 coefficients=None):
        self.spec = spec
        self.grid = grid
        self.freq = freq
        self.directions = np.atleast_1d(np.asarray(directions, dtype=float))
        self.eps = complex(eps)
        self.forcing_profile = forcing if forcing is not None else ForcingProfile.from_spec(spec)
        self.coefficients = coefficients if coefficients is not None else [
            CoefficientProfile(c, spec.profile_kind, spec.beta, spec.mu) for c in spec.c_l
        ]
        kp = spec.kprime
        self.main_terms, self.lower_terms = convolution_terms(spec)
        s_main = spec.k * spec.delta_D

        def bhat(terms):
            K = np.zeros((grid.size, grid.size))
            for coef, mprime, p in terms:
                a = mprime / kp
                K += coef * kp ** (p + 1) / gamma(a) * radial_convolution_matrix(grid, a, p, kp)
            return K

        self.K_main = bhat(self.main_terms)
        self.K_lower = [bhat(t) for t in self.lower_terms]
        self.C_mats = [convolution_matrix(C, freq) for C in self.coefficients]
        m = freq.m
        self.Rl_im = [pl.at_im(m) for pl in spec.R_l]
        self.main_factor = []
        self.lower_factor = []
        self.forcing = []
        for th in self.directions:
            u = grid.nodes * np.exp(1j * th)
            P = P_symbol(spec, u, m)
            if np.any(np.abs(P) < 1e-300):
                raise ZeroDivisionError("P_m(u) vanishes on the grid")
            fac = spec.R_D.at_im(m)[None, :] * spec.k ** spec.delta_D * (u ** s_main)[:, None] / P
            self.main_factor.append(fac)
            lf = []
            for l, dl in zip(spec.I, spec.Delta):
                l1 = l[0]
                lf.append(self.eps ** (dl - spec.k * l1) * spec.k ** l1 * (u ** (spec.k * l1))[:, None] / P)
            self.lower_factor.append(lf)
            self.forcing.append(forcing_psi(self.forcing_profile, u, m, eps) / P)
        self.forcing = np.array(self.forcing)

    def linear(self, values: np.ndarray) -> np.ndarray:
        out = np.empty_like(values, dtype=complex)
        for i in range(self.directions.size):
            w = values[i]
            acc = self.main_factor[i] * (self.K_main @ w)
            for K, fac, Cm, rl in zip(self.K_lower, self.lower_factor[i], self.C_mats, self.Rl_im):
                acc = acc + fac * (((K @ w) * rl[None, :]) @ Cm.T)
            out[i] = acc
        return out

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.linear(values) + self.forcing

    def symbol(self, values) -> SampledSymbol:
        return SampledSymbol(self.directions, self.grid, self.freq, values)


def apply_H_epsilon(spec: ProblemSpec, w: SampledSymbol, eps: complex = 1.0,
                    op: HOperator | None = None, **kw) -> SampledSymbol:
    """One application of H_eps to a sampled symbol."""
    if op is None:
        op = HOperator(spec, w.grid, w.freq, w.directions, eps, **kw)
    return w.with_values(op.apply(w.values))


class NonContractionError(RuntimeError):
    """Raised when a Picard step fails to contract."""


@dataclass
class FixedPointReport:
    iterations: int
    step_norms: list
    ratios: list
    residual: float
    ball_radius: float
    converged: bool
    norm: NormParams
    polish_iterations: int = 0
    pointwise_step: float = float("nan")
    label: str = "empirical over grid"

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "step_norms": self.step_norms,
            "ratios": self.ratios,
            "max_ratio": self.max_ratio,
            "residual": self.residual,
            "ball_radius": self.ball_radius,
            "converged": self.converged,
            "polish_iterations": self.polish_iterations,
            "pointwise_step": self.pointwise_step,
            "norm": {"nu": self.norm.nu, "beta": self.norm.beta, "mu": self.norm.mu,
                     "order": self.norm.growth_order},
            "label": self.label,
        }


def _pointwise_step(new: np.ndarray, old: np.ndarray) -> float:
    """max over rays and radii of max_m |new - old| / max_m |new|."""
    d = np.abs(new - old).max(axis=2)
    s = np.abs(new).max(axis=2)
    nz = s > 0
    if not np.any(nz):
        return float(np.max(d))
    return float(np.max(d[nz] / s[nz])) if np.all(d[~nz] == 0) else float("inf")


def solve_fixed_point(spec: ProblemSpec, eps: complex, tol: float, max_iter: int,
                      grid: RadialGrid, freq: FreqGrid, directions,
                      op: HOperator | None = None, norm: NormParams | None = None,
                      pointwise_tol: float | None = None, max_polish: int = 1000, **kw):
    """Picard iteration w_{n+1} = H_eps(w_n) from w_0 = 0.

    Stops once the step norm drops below ``tol`` and reports every
    consecutive-step ratio; a ratio >= 1 raises :class:`NonContractionError`.
    The weighted norm hides the far part of each ray (weight exp(-nu r)), so
    with ``pointwise_tol`` the iteration goes on until the relative step is
    below it at every node; the Volterra structure makes this converge.
    """
    if op is None:
        op = HOperator(spec, grid, freq, directions, eps, **kw)
    if norm is None:
        norm = NormParams(spec.nu2, spec.beta, spec.mu, spec.k1)
    w = np.zeros((op.directions.size, grid.size, freq.size), complex)
    steps, ratios = [], []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = op.apply(w)
        step = norm_weighted(op.symbol(new - w), norm)
        if steps and steps[-1] > 0:
            ratio = step / steps[-1]
            ratios.append(ratio)
            if ratio >= 1.0 and step > tol:
                raise NonContractionError(
                    f"step ratio {ratio:.3g} >= 1 at iteration {it}; increase |Q/R_D| "
                    "or decrease the coefficient sizes c_l")
        steps.append(step)
        w = new
        if step < tol:
            converged = True
            break
    residual = norm_weighted(op.symbol(op.apply(w) - w), norm)
    polish = 0
    pstep = float("nan")
    if pointwise_tol is not None and converged:
        for polish in range(1, max_polish + 1):
            new = op.apply(w)
            pstep = _pointwise_step(new, w)
            w = new
            if pstep < pointwise_tol:
                break
        else:
            converged = False
    sym = op.symbol(w)
    sym.meta.update({"eps": [complex(eps).real, complex(eps).imag], "spec": spec.digest()})
    report = FixedPointReport(it, steps, ratios, residual, norm_weighted(sym, norm), converged, norm,
                              polish, pstep)
    return sym, report


# --------------------------------------------------------------------------
# formal Taylor coefficients (independent of the quadrature)


def formal_borel_coefficients(spec: ProblemSpec, freq: FreqGrid, n_max: int, eps: complex = 1.0,
                              forcing: ForcingProfile | None = None, coefficients=None) -> np.ndarray:
    """Taylor coefficients w_n(m), n = 0..n_max, of the fixed point at u = 0.

    Uses only the exact monomial action of each convolution,
    u^j -> k'^p Gamma(p + j/k') / Gamma(m'/k' + p + j/k') u^(j + m' + k' p),
    so it shares no quadrature with :class:`HOperator`.
    """
    forcing = forcing if forcing is not None else ForcingProfile.from_spec(spec)
    coefficients = coefficients if coefficients is not None else [
        CoefficientProfile(c, spec.profile_kind, spec.beta, spec.mu) for c in spec.c_l
    ]
    kp = spec.kprime
    main, lower = convolution_terms(spec)
    m = freq.m
    qm = spec.Q.at_im(m)
    rm = spec.R_D.at_im(m)
    kd = spec.k ** spec.delta_D
    lead = kd * kp ** spec.m_D
    s_main = spec.k * spec.delta_D
    shape = profile_shape(m, forcing.kind, forcing.beta, forcing.mu)
    Cm = [convolution_matrix(C, freq) for C in coefficients]
    w = np.zeros((n_max + 1, m.size), complex)

    def mono(terms, j):
        tot = 0.0
        for coef, mprime, p in terms:
            a = mprime / kp
            tot += coef * kp ** p * math.exp(lgamma(p + j / kp) - lgamma(a + p + j / kp)) if (p + j / kp) > 0 else 0.0
        return tot

    for n in range(1, n_max + 1):
        rhs = np.zeros(m.size, complex)
        if n <= forcing.n_modes():
            rhs += forcing.mode_weight(n) * shape / math.exp(lgamma(n / spec.k1 + 1.0))
        j = n - s_main
        if j >= 1:
            rhs += rm * (kd * mono(main, j) + lead) * w[j]
        for l, dl, terms, C, pl in zip(spec.I, spec.Delta, lower, Cm, spec.R_l):
            j = n - spec.k * l[0]
            if j >= 1:
                fac = complex(eps) ** (dl - spec.k * l[0]) * spec.k ** l[0] * mono(terms, j)
                rhs += fac * (C @ (pl.at_im(m) * w[j]))
        w[n] = rhs / qm
    return w
