"""Exact algebra of one-variable differential operators sum c t^a d_t^b.

Coefficients are :class:`fractions.Fraction` so every identity below is an
equality test, not a tolerance test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Mapping, Union

import numpy as np

from .problem import ProblemSpec

__all__ = [
    "DiffOperator",
    "ExponentTable",
    "StructureError",
    "euler_power_expand",
    "tahara_expand",
    "normal_form",
    "monomial_action",
    "validate_structure",
    "falling",
]


def falling(j: int, q: int) -> int:
    """Falling factorial j (j-1) ... (j-q+1)."""
    out = 1
    for i in range(q):
        out *= j - i
    return out


def _rising_step(j: int, p: int, step: int) -> int:
    out = 1
    for i in range(p):
        out *= j + i * step
    return out


@dataclass(frozen=True)
class DiffOperator:
    """Normal form sum c * t^a * d_t^b, stored as {(a, b): c} without zeros."""

    terms: Mapping = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (a, b), c in dict(self.terms).items():
            if a < 0 or b < 0:
                raise ValueError("exponents must be >= 0")
            c = Fraction(c)
            if c != 0:
                clean[(int(a), int(b))] = clean.get((int(a), int(b)), Fraction(0)) + c
        object.__setattr__(self, "terms", {key: v for key, v in clean.items() if v != 0})

    # constructors ----------------------------------------------------------
    @classmethod
    def monomial(cls, a: int, b: int, c=1) -> "DiffOperator":
        return cls({(a, b): c})

    @classmethod
    def identity(cls) -> "DiffOperator":
        return cls({(0, 0): 1})

    @classmethod
    def euler(cls) -> "DiffOperator":
        """t d_t."""
        return cls({(1, 1): 1})

    @classmethod
    def irregular(cls, k: int) -> "DiffOperator":
        """t^(k+1) d_t."""
        return cls({(k + 1, 1): 1})

    # algebra ---------------------------------------------------------------
    def __add__(self, other: "DiffOperator") -> "DiffOperator":
        other = _coerce(other)
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, Fraction(0)) + c
        return DiffOperator(out)

    __radd__ = __add__

    def __neg__(self) -> "DiffOperator":
        return DiffOperator({key: -c for key, c in self.terms.items()})

    def __sub__(self, other: "DiffOperator") -> "DiffOperator":
        return self + (-_coerce(other))

    def __mul__(self, other) -> "DiffOperator":
        """Composition self o other (scalars multiply coefficients)."""
        if isinstance(other, (int, Fraction)):
            return DiffOperator({key: c * other for key, c in self.terms.items()})
        other = _coerce(other)
        out: dict = {}
        for (a, b), c in self.terms.items():
            for (e, f), d in other.terms.items():
                # d^b t^e = sum_i C(b, i) e^(i) t^(e-i) d^(b-i)
                for i in range(min(b, e) + 1):
                    coef = c * d * comb(b, i) * falling(e, i)
                    if coef:
                        key = (a + e - i, b - i + f)
                        out[key] = out.get(key, Fraction(0)) + coef
        return DiffOperator(out)

    def __rmul__(self, other) -> "DiffOperator":
        if isinstance(other, (int, Fraction)):
            return self * other
        return _coerce(other) * self

    def __pow__(self, n: int) -> "DiffOperator":
        out = DiffOperator.identity()
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, DiffOperator) and self.terms == other.terms

    def __hash__(self):
        return hash(tuple(sorted(self.terms.items())))

    @property
    def order(self) -> int:
        return max((b for _, b in self.terms), default=0)

    def __repr__(self) -> str:
        if not self.terms:
            return "DiffOperator(0)"
        parts = [f"{c}*t^{a}*D^{b}" for (a, b), c in sorted(self.terms.items())]
        return "DiffOperator(" + " + ".join(parts) + ")"

    def apply_to_monomial(self, j: int) -> dict:
        return monomial_action(self, j)


def _coerce(x) -> DiffOperator:
    if isinstance(x, DiffOperator):
        return x
    if isinstance(x, (int, Fraction)):
        return DiffOperator({(0, 0): x})
    raise TypeError(f"cannot interpret {x!r} as a differential operator")


Expr = Union[DiffOperator, int, Fraction, tuple]


def normal_form(expr: Expr) -> DiffOperator:
    """Reduce an expression tree to the canonical sum c t^a d_t^b.

    Trees are nested tuples ``("add", x, y, ...)``, ``("mul", x, y, ...)``
    (composition, left to right) and ``("pow", x, n)`` whose leaves are
    :class:`DiffOperator` objects or exact scalars.
    """
    if isinstance(expr, (DiffOperator, int, Fraction)):
        return _coerce(expr)
    if not isinstance(expr, tuple) or not expr:
        raise TypeError(f"malformed operator expression {expr!r}")
    head, *args = expr
    if head == "add":
        out = DiffOperator()
        for a in args:
            out = out + normal_form(a)
        return out
    if head == "mul":
        out = DiffOperator.identity()
        for a in args:
            out = out * normal_form(a)
        return out
    if head == "pow":
        base, n = args
        return normal_form(base) ** int(n)
    raise ValueError(f"unknown operator node {head!r}")


def monomial_action(op: DiffOperator, j: int) -> dict:
    """Exact image of t^j under ``op`` as {exponent: coefficient}."""
    if j < 0:
        raise ValueError("j must be >= 0")
    out: dict = {}
    for (a, b), c in op.terms.items():
        if b > j:
            continue
        coef = c * falling(j, b)
        if coef:
            e = j - b + a
            out[e] = out.get(e, Fraction(0)) + coef
    return {e: c for e, c in out.items() if c != 0}


def euler_power_expand(l: int) -> list:
    """Integers a_{q,l}, q = 1..l, with (t d_t)^l = sum_q a_{q,l} t^q d_t^q."""
    if l < 1:
        raise ValueError("l must be >= 1")
    row = [1]  # l = 1
    for n in range(1, l):
        nxt = [0] * (n + 1)
        for q in range(1, n + 2):
            left = row[q - 1] if q - 1 < len(row) else 0   # a_{q,n}
            down = row[q - 2] if q >= 2 else 0              # a_{q-1,n}
            nxt[q - 1] = q * left + down
        row = nxt
    return row


def _solve_exact(rows: list, rhs: list) -> list:
    """Gauss-Jordan elimination over the rationals for a square system."""
    n = len(rhs)
    m = [[Fraction(x) for x in r] + [Fraction(b)] for r, b in zip(rows, rhs)]
    for col in range(n):
        piv = next(r for r in range(col, n) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        pv = m[col][col]
        m[col] = [x / pv for x in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return [m[r][n] for r in range(n)]


def tahara_expand(kprime: int, delta: int) -> list:
    """Rationals A_{delta,p}, p = 1..delta-1, such that

    tau^(delta(k'+1)) d^delta = (tau^(k'+1) d)^delta
                                + sum_p A_{delta,p} tau^(k'(delta-p)) (tau^(k'+1) d)^p.

    Found by matching the action on monomials tau^j, j = 1..delta-1, then
    checked on j = 0..2 delta (k'+1) with full operator normal forms.
    """
    if kprime < 1 or delta < 1:
        raise ValueError("need kprime >= 1 and delta >= 1")
    if delta == 1:
        return []
    js = list(range(1, delta))
    rows = [[_rising_step(j, p, kprime) for p in range(1, delta)] for j in js]
    rhs = [falling(j, delta) - _rising_step(j, delta, kprime) for j in js]
    coeffs = _solve_exact(rows, rhs)
    lhs, rhs_op = tahara_sides(kprime, delta, coeffs)
    for j in range(0, 2 * delta * (kprime + 1) + 1):
        if monomial_action(lhs, j) != monomial_action(rhs_op, j):
            raise ArithmeticError(f"coefficient solve inconsistent at tau^{j}")
    return coeffs


def tahara_sides(kprime: int, delta: int, coeffs: list) -> tuple:
    """Both sides of the expansion as normal forms, for verification."""
    lhs = DiffOperator.monomial(delta * (kprime + 1), delta)
    irr = DiffOperator.irregular(kprime)
    rhs = irr ** delta
    for p, a in enumerate(coeffs, start=1):
        rhs = rhs + DiffOperator.monomial(kprime * (delta - p), 0, a) * (irr ** p)
    return lhs, rhs


# --------------------------------------------------------------------------
# structural constraints


class StructureError(ValueError):
    """Raised when a problem violates the structural hypotheses."""

    def __init__(self, violations: list):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class ExponentTable:
    """Shifted exponents of the prepared convolution equation.

    ``d[q] = k delta_D - q k'`` for the leading term and
    ``e[(l, q)] = k l1 - q k'`` for each lower order term l = (l1, l2).
    """

    d: dict
    e: dict


def _imag_axis_roots(poly) -> bool:
    if poly.degree <= 0:
        return False
    roots = np.roots(list(reversed(poly.coeffs)))
    return bool(np.any(np.abs(roots.real) < 1e-12))


def structure_checks(spec: ProblemSpec) -> list:
    """List of (name, passed, detail) for every structural inequality."""
    k, kp, dD, mD, k1 = spec.k, spec.kprime, spec.delta_D, spec.m_D, spec.k1
    out = []
    out.append(("k delta_D = m_D k'", k * dD == mD * kp, f"{k * dD} vs {mD * kp}"))
    for l, dl, rl in zip(spec.I, spec.Delta, spec.R_l):
        l1, l2 = l
        out.append((f"k l1 >= 1 + l2 k' for {l}", k * l1 >= 1 + l2 * kp, f"{k * l1} vs {1 + l2 * kp}"))
        out.append((f"Delta - k l1 >= 0 for {l}", dl - k * l1 >= 0, f"{dl - k * l1}"))
        out.append((f"mu > deg R_l + 1 for {l}", spec.mu > rl.degree + 1, f"mu={spec.mu}, deg={rl.degree}"))
        rhs = Fraction(k * l1) * (1 - Fraction(k1, kp)) + k1 * l2 + 1
        out.append((f"k delta_D >= k l1 (1 - k1/k') + k1 l2 + 1 for {l}", k * dD >= rhs, f"{k * dD} vs {rhs}"))
        out.append((f"deg R_D >= deg R_l for {l}", spec.R_D.degree >= rl.degree, f"{spec.R_D.degree} vs {rl.degree}"))
    out.append(("k1 >= 1", k1 >= 1, f"k1={k1}"))
    out.append(("0 < k1 < k'", 0 < k1 < kp, f"k1={k1}, k'={kp}"))
    if 0 < k1 < kp:
        kap1 = spec.kappa1
        out.append(("1/2 < kappa1 <= k", Fraction(1, 2) < kap1 <= k, f"kappa1={kap1}"))
    out.append(("deg Q = deg R_D", spec.Q.degree == spec.R_D.degree, f"{spec.Q.degree} vs {spec.R_D.degree}"))
    out.append(("Q(im) != 0", not _imag_axis_roots(spec.Q), "root on the imaginary axis"))
    out.append(("R_D(im) != 0", not _imag_axis_roots(spec.R_D), "root on the imaginary axis"))
    return out


def validate_structure(spec: ProblemSpec) -> ExponentTable:
    """Check the structural hypotheses and return the exponent table."""
    failed = [f"{name} ({detail})" for name, ok, detail in structure_checks(spec) if not ok]
    if failed:
        raise StructureError(failed)
    k, kp = spec.k, spec.kprime
    d = {q: k * spec.delta_D - q * kp for q in range(1, spec.m_D)}
    e = {}
    for l in spec.I:
        l1, l2 = l
        for q in range(1, l2 + 1):
            e[(l, q)] = k * l1 - q * kp
    bad = [f"d_{q}={v}" for q, v in d.items() if v < 1] + [f"e_{key}={v}" for key, v in e.items() if v < 1]
    if bad:
        raise StructureError(["shifted exponents must be >= 1: " + ", ".join(bad)])
    return ExponentTable(d=d, e=e)
