"""Acceptance criteria as callable checks shared by the CLI and the test suite.

Criteria 1 to 3 are self-contained oracle suites.  Criteria 4 to 7 read the
verdicts of a pipeline run (``solve`` then ``verify``).
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate

from .laplace import fourier_inverse, laplace_order
from .opalgebra import DiffOperator, euler_power_expand, monomial_action, normal_form, tahara_expand
from .specfun import (WimanParams, beta, check_gamma_quotient, convolution_power_identity,
                      fit_wiman_bound_constant, gamma)

__all__ = ["CriterionResult", "operator_identities", "special_functions", "laplace_fourier",
           "pipeline_criteria", "quick_criteria", "format_line"]


@dataclass
class CriterionResult:
    number: int
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def format_line(r: CriterionResult) -> str:
    return f"[{'PASS' if r.ok else 'FAIL'}] {r.number}. {r.name}: {r.detail} ({r.seconds:.1f} s)"


def _timed(number, name, fn) -> CriterionResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    return CriterionResult(number, name, bool(ok), detail, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# 1. operator identities


def _euler_ok(l: int) -> bool:
    a = euler_power_expand(l)
    rhs = DiffOperator({})
    for q, c in enumerate(a, start=1):
        rhs = rhs + DiffOperator.monomial(q, q, c)
    lhs = DiffOperator.euler() ** l
    # second route: the action on t^j is j^l t^j
    by_action = all(monomial_action(rhs, j) == ({j: Fraction(j) ** l} if j else {})
                    for j in range(0, 2 * l + 2))
    return lhs == rhs and by_action


def _tahara_ok(kp: int, delta: int) -> bool:
    A = tahara_expand(kp, delta)
    lead = DiffOperator.irregular(kp)
    lhs = DiffOperator.monomial(delta * (kp + 1), delta)
    rhs = lead ** delta
    for p, c in enumerate(A, start=1):
        rhs = rhs + DiffOperator.monomial(kp * (delta - p), 0, c) * lead ** p
    by_action = all(monomial_action(lhs, j) == monomial_action(rhs, j) for j in range(0, 2 * delta * (kp + 1) + 1))
    return lhs == rhs and by_action


def operator_identities() -> CriterionResult:
    def run():
        euler = [l for l in range(1, 9) if not _euler_ok(l)]
        tahara = [(kp, d) for kp in (1, 2, 3) for d in (1, 2, 3, 4) if not _tahara_ok(kp, d)]
        t2d = DiffOperator.irregular(1)
        inst = normal_form(("add", ("mul", DiffOperator.monomial(1, 0), ("pow", t2d, 2)),
                            ("mul", DiffOperator.monomial(2, 0, -2), t2d)))
        inst_ok = inst == DiffOperator.monomial(5, 2)
        ok = not euler and not tahara and inst_ok
        return ok, (f"Euler powers l<=8 failures {euler}; irregular powers k'<=3, delta<=4 failures {tahara}; "
                    f"t^5 D^2 instance {'holds' if inst_ok else 'fails'}")
    return _timed(1, "operator identities", run)


# --------------------------------------------------------------------------
# 2. special functions


def special_functions() -> CriterionResult:
    def run():
        rng = np.random.default_rng(0)
        worst_beta = 0.0
        for a, b in rng.uniform(0.5, 6.0, size=(20, 2)):
            # algebraic-weight quadrature absorbs the endpoint singularities
            q, _ = integrate.quad(lambda s: 1.0, 0, 1, weight="alg", wvar=(a - 1, b - 1), epsabs=0, epsrel=1e-13)
            worst_beta = max(worst_beta, abs(beta(a, b) - q) / q)
        worst_conv = 0.0
        for x, a, b in zip(rng.uniform(0.2, 3.0, 20), rng.uniform(1.0, 4.0, 20), rng.uniform(1.0, 4.0, 20)):
            q, _ = integrate.quad(lambda h: (x - h) ** (a - 1) * h ** (b - 1), 0, x, epsabs=0, epsrel=1e-13)
            worst_conv = max(worst_conv, abs(convolution_power_identity(x, a, b) - q) / q)
        grid = np.linspace(1.0, 20.0, 50)
        gq = sum(not check_gamma_quotient(a, b) for a in grid for b in grid)
        consts = {}
        for al, be in ((0.5, 1.0), (1.0, 1.0), (1.5, 0.5), (1.2, 2.0)):
            consts[(al, be)] = fit_wiman_bound_constant(WimanParams(al, be), np.linspace(1.0, 30.0, 59))
        wiman_ok = all(math.isfinite(c) and c > 0 for c in consts.values())
        ok = worst_beta <= 1e-8 and worst_conv <= 1e-8 and gq == 0 and wiman_ok
        return ok, (f"Beta vs quadrature {worst_beta:.1e}, convolution identity {worst_conv:.1e} (<= 1e-8); "
                    f"Gamma quotient failures {gq}/{grid.size ** 2}; Wiman constants on [1,30] "
                    + ", ".join(f"{c:.3g}" for c in consts.values()))
    return _timed(2, "special functions", run)


# --------------------------------------------------------------------------
# 3. Laplace and Fourier oracles


def laplace_fourier() -> CriterionResult:
    def run():
        worst_mono = 0.0
        for k in (1, 2, 3):
            T = 0.7 * np.exp(0.1j)
            for n in range(1, 7):
                v = laplace_order(lambda u, n=n: u ** n, k, T, direction=0.1)
                ref = gamma(n / k) * T ** n
                worst_mono = max(worst_mono, abs(complex(v) - ref) / abs(ref))
        worst_dir = 0.0
        w = lambda u: u / (1 + u * u / 4)  # noqa: E731
        for k in (1, 2, 3):
            T = 0.5
            vals = [complex(laplace_order(w, k, T, direction=d)) for d in (-0.3 / k, 0.0, 0.3 / k)]
            worst_dir = max(worst_dir, max(abs(v - vals[1]) for v in vals) / abs(vals[1]))
        a = 1.3
        zs = np.linspace(-3.0, 3.0, 13)
        f = lambda m: np.exp(-a * np.abs(m))  # noqa: E731
        worst_ft = max(abs(complex(fourier_inverse(f, z, m_max=40.0)) - math.sqrt(2 / math.pi) * a / (a * a + z * z))
                       for z in zs)
        # derivative identity: the transform of i m f is the z-derivative
        g = lambda m: np.exp(-m * m / 2) * (1 + 0.3 * m)  # noqa: E731
        h = 2e-4
        worst_d = 0.0
        for z in (0.0, 0.4 + 0.2j, -1.1 - 0.3j):
            lhs = complex(fourier_inverse(lambda m: 1j * m * g(m), z, m_max=20.0))
            fd = (complex(fourier_inverse(g, z + h, m_max=20.0)) - complex(fourier_inverse(g, z - h, m_max=20.0))) / (2 * h)
            worst_d = max(worst_d, abs(lhs - fd))
        # product identity with psi = (2 pi)^-1/2 (f * g)
        f1 = lambda m: np.exp(-m * m / 2)  # noqa: E731
        g1 = lambda m: np.exp(-(m - 0.5) ** 2)  # noqa: E731

        def psi(m):
            m = np.atleast_1d(m)
            out = np.array([integrate.quad(lambda s: f1(mm - s) * g1(s), -30, 30, epsabs=1e-14)[0] for mm in m])
            return out / math.sqrt(2 * math.pi)

        worst_p = 0.0
        for z in (0.0, 0.7 + 0.1j, -1.5):
            lhs = complex(fourier_inverse(f1, z, m_max=20.0)) * complex(fourier_inverse(g1, z, m_max=20.0))
            worst_p = max(worst_p, abs(lhs - complex(fourier_inverse(psi, z, m_max=20.0))))
        ok = worst_mono <= 1e-7 and worst_dir <= 1e-8 and worst_ft <= 1e-8 and worst_d <= 1e-6 and worst_p <= 1e-6
        return ok, (f"monomials {worst_mono:.1e}, direction {worst_dir:.1e}, closed form {worst_ft:.1e}, "
                    f"derivative identity {worst_d:.1e}, product identity {worst_p:.1e}")
    return _timed(3, "Laplace and Fourier oracles", run)


def quick_criteria() -> list:
    return [operator_identities(), special_functions(), laplace_fourier()]


# --------------------------------------------------------------------------
# 4 to 7. pipeline verdicts


def pipeline_criteria(run: dict, seconds: float = 0.0) -> list:
    """Criteria 4 to 7 from a run record holding ``verdicts``."""
    out = []
    for i, v in enumerate(run.get("verdicts", []), start=4):
        out.append(CriterionResult(i, v["criterion"], bool(v["ok"]), v["detail"], seconds))
    if len(out) != 4:
        have = len(out)
        for i in range(4 + have, 8):
            out.append(CriterionResult(i, "missing", False, "no verdict recorded; run 'verify'", seconds))
    return out
