"""Special functions used by the growth estimates.

Gamma and log-Gamma (Lanczos), Beta, the two-parameter Mittag-Leffler
(Wiman) function on the nonnegative real axis, and a few inequality checks
whose constants are fitted as grid suprema instead of being hardcoded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = [
    "WimanParams",
    "gamma",
    "lgamma",
    "beta",
    "mittag_leffler",
    "log_mittag_leffler",
    "check_gamma_quotient",
    "fit_wiman_bound_constant",
    "convolution_power_identity",
]

# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _check_positive(name: str, x) -> None:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError(f"{name} must be finite and > 0, got {x!r}")


def _lanczos_sum(x: np.ndarray) -> np.ndarray:
    # x is the shifted argument (Gamma(x + 1) form)
    acc = np.full_like(x, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc = acc + c / (x + i)
    return acc


def _lgamma_pos(x: np.ndarray) -> np.ndarray:
    """log Gamma for x >= 0.5."""
    xm = x - 1.0
    t = xm + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (xm + 0.5) * np.log(t) - t + np.log(_lanczos_sum(xm))


def lgamma(x):
    """Natural log of Gamma(x) for x > 0 (scalar or array)."""
    _check_positive("x", x)
    arr = np.asarray(x, dtype=float)
    out = np.empty_like(arr)
    small = arr < 0.5
    if np.any(small):
        xs = arr[small]
        # reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x)
        out[small] = math.log(math.pi) - np.log(np.sin(math.pi * xs)) - _lgamma_pos(1.0 - xs)
    if np.any(~small):
        out[~small] = _lgamma_pos(arr[~small])
    return float(out) if out.ndim == 0 else out


def gamma(x):
    """Gamma(x) for real x > 0 (scalar or array).

    Relative accuracy is about 1e-14 on [1e-3, 170]; beyond ~171.6 the value
    overflows, use :func:`lgamma` there.
    """
    _check_positive("x", x)
    arr = np.asarray(x, dtype=float)
    out = np.empty_like(arr)
    small = arr < 0.5
    if np.any(small):
        xs = arr[small]
        out[small] = math.pi / (np.sin(math.pi * xs) * gamma(1.0 - xs))
    big = ~small
    if np.any(big):
        xm = arr[big] - 1.0
        t = xm + _LANCZOS_G + 0.5
        # split the power to keep t**(xm + 0.5) finite near x = 170
        half = np.power(t, 0.5 * (xm + 0.5))
        out[big] = math.sqrt(2.0 * math.pi) * half * (half * np.exp(-t)) * _lanczos_sum(xm)
    return float(out) if out.ndim == 0 else out


def beta(a, b):
    """Euler Beta function Gamma(a)Gamma(b)/Gamma(a+b) for a, b > 0."""
    _check_positive("a", a)
    _check_positive("b", b)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.all(a + b < 160.0):
        out = gamma(a) * gamma(b) / gamma(a + b)
    else:
        out = np.exp(lgamma(a) + lgamma(b) - lgamma(a + b))
    return float(out) if np.ndim(out) == 0 else out


def convolution_power_identity(x: float, a: float, b: float) -> float:
    """Closed form of int_0^x (x - h)^(a-1) h^(b-1) dh = x^(a+b-1) B(a, b)."""
    _check_positive("x", x)
    return x ** (a + b - 1.0) * beta(a, b)


@dataclass(frozen=True)
class WimanParams:
    """Parameters of E_{alpha,beta}(z) = sum z^n / Gamma(beta + alpha n)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not self.beta > 0.0:
            raise ValueError(f"beta must be > 0, got {self.beta}")


_SERIES_RTOL = 1e-14
_SWITCH = 35.0


def _log_ml_series(p: WimanParams, z: float) -> float:
    if z == 0.0:
        return -lgamma(p.beta)
    logz = math.log(z)
    log_sum = -lgamma(p.beta)
    quiet = 0
    n = 0
    peaked = False
    prev = log_sum
    while True:
        n += 1
        lt = n * logz - lgamma(p.beta + p.alpha * n)
        log_sum = np.logaddexp(log_sum, lt)
        peaked = peaked or lt < prev
        prev = lt
        if lt - log_sum < math.log(_SERIES_RTOL) and (peaked or lt < -700):
            quiet += 1
            if quiet >= 3:
                return float(log_sum)
        else:
            quiet = 0
        if n > 100000:
            raise RuntimeError("Mittag-Leffler series did not converge")


def _log_ml_asymptotic(p: WimanParams, z: float) -> float:
    # On the positive axis with 0 < alpha < 2 only the principal exponential
    # survives; the remaining part is the algebraic tail -sum z^-j/Gamma(b - a j).
    a, b = p.alpha, p.beta
    root = z ** (1.0 / a)
    log_main = (1.0 - b) / a * math.log(z) + root - math.log(a)
    alg = 0.0
    for j in range(1, 12):
        arg = b - a * j
        if arg <= 0 and abs(arg - round(arg)) < 1e-15:
            continue  # 1/Gamma vanishes at non-positive integers
        if arg > 0:
            g = math.gamma(arg)
        else:
            g = math.pi / (math.sin(math.pi * arg) * math.gamma(1 - arg))
        alg -= z ** (-j) / g
    ratio = alg * math.exp(-log_main) if log_main < 700 else 0.0
    return log_main + math.log1p(ratio) if ratio > -1 else log_main


def log_mittag_leffler(params: WimanParams, z: float, method: str = "auto") -> float:
    """log E_{alpha,beta}(z) for real z >= 0.

    ``method`` is ``"auto"`` (series below the switch point z^(1/alpha) = 35,
    asymptotic expansion above), ``"series"`` or ``"asymptotic"``.
    """
    if z < 0 or not math.isfinite(z):
        raise ValueError(f"z must be finite and >= 0, got {z}")
    if method == "series":
        return _log_ml_series(params, z)
    if method == "asymptotic":
        if z <= 0:
            raise ValueError("asymptotic branch needs z > 0")
        return _log_ml_asymptotic(params, z)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    if z > 0 and z ** (1.0 / params.alpha) > _SWITCH:
        return _log_ml_asymptotic(params, z)
    return _log_ml_series(params, z)


def mittag_leffler(params: WimanParams, z: float, method: str = "auto") -> float:
    """E_{alpha,beta}(z) = sum_n z^n / Gamma(beta + alpha n) for z >= 0."""
    return math.exp(log_mittag_leffler(params, z, method))


def check_gamma_quotient(alpha: float, b: float, slack: float = 1e-12) -> bool:
    """Truth of Gamma(alpha)/Gamma(alpha + b) <= 1/Gamma(b) for alpha, b >= 1.

    The comparison is made in log form with a relative ``slack`` so that the
    equality case alpha = b = 1 is not lost to rounding.
    """
    if alpha < 1.0 or b < 1.0:
        raise ValueError(f"need alpha >= 1 and b >= 1, got ({alpha}, {b})")
    lhs = lgamma(alpha) - lgamma(alpha + b)
    rhs = -lgamma(b)
    return bool(lhs <= rhs + slack * max(1.0, abs(rhs)))


def fit_wiman_bound_constant(params: WimanParams, zgrid: Iterable[float]) -> float:
    """Smallest C with E(z) <= C z^((1-beta)/alpha) exp(z^(1/alpha)) on the grid."""
    z = np.asarray(list(zgrid), dtype=float)
    if z.size == 0:
        raise ValueError("empty z grid")
    if np.any(z < 1.0):
        raise ValueError("all grid points must be >= 1")
    a, b = params.alpha, params.beta
    logs = [
        log_mittag_leffler(params, float(zi)) - ((1.0 - b) / a * math.log(zi) + zi ** (1.0 / a))
        for zi in z
    ]
    return float(math.exp(max(logs)))
