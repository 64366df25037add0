import dataclasses
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.opalgebra import (DiffOperator, StructureError, euler_power_expand, falling, monomial_action,
                                normal_form, structure_checks, tahara_expand, validate_structure)
from artifact.problem import ProblemSpec, worked_example_problem

D = DiffOperator.monomial(0, 1)
T = DiffOperator.monomial(1, 0)


def test_euler_expand_examples():
    assert euler_power_expand(1) == [1]
    assert euler_power_expand(3) == [1, 3, 1]
    # (t d_t)^3 t^2 = 8 t^2
    a = euler_power_expand(3)
    assert sum(c * falling(2, q) for q, c in enumerate(a, start=1)) == 8


@pytest.mark.parametrize("l", range(1, 9))
def test_euler_expand_on_monomials(l):
    a = euler_power_expand(l)
    assert a[0] == 1 and a[-1] == 1
    for j in range(13):
        assert sum(c * falling(j, q) for q, c in enumerate(a, start=1)) == j ** l


def test_tahara_examples():
    assert tahara_expand(1, 2) == [Fraction(-2)]
    assert tahara_expand(3, 1) == []


def test_tahara_k2_delta3_against_independent_expansion():
    # (tau^3 d)^3 in normal form, then solve for the lower coefficients by matching t^3 d^1 and t^6 d^2 terms
    lead = DiffOperator.irregular(2)
    cube = normal_form(("pow", lead, 3))
    sq = normal_form(("pow", lead, 2))
    target = DiffOperator.monomial(9, 3)
    # target = cube + A2 tau^2 sq + A1 tau^4 lead; sq has a t^6 d^2 part, lead is t^3 d
    A2 = -(cube.terms.get((8, 2), 0)) / sq.terms[(6, 2)]
    rest = cube + DiffOperator.monomial(2, 0, A2) * sq
    A1 = -rest.terms.get((7, 1), 0)
    assert tahara_expand(2, 3) == [A1, A2]
    assert cube + DiffOperator.monomial(2, 0, A2) * sq + DiffOperator.monomial(4, 0, A1) * lead == target


@pytest.mark.parametrize("kp", [1, 2, 3])
@pytest.mark.parametrize("delta", [1, 2, 3, 4])
def test_tahara_identity_on_monomials(kp, delta):
    A = tahara_expand(kp, delta)
    lead = DiffOperator.irregular(kp)
    lhs = DiffOperator.monomial(delta * (kp + 1), delta)
    rhs = lead ** delta
    for p, c in enumerate(A, start=1):
        rhs = rhs + DiffOperator.monomial(kp * (delta - p), 0, c) * lead ** p
    for j in range(2 * delta * (kp + 1) + 1):
        assert monomial_action(lhs, j) == monomial_action(rhs, j)


def test_t5_d2_instance():
    t2d = DiffOperator.irregular(1)
    expr = ("add", ("mul", T, ("pow", t2d, 2)), ("mul", DiffOperator.monomial(2, 0, -2), t2d))
    assert normal_form(expr) == DiffOperator.monomial(5, 2)


def test_normal_form_examples():
    assert normal_form(("mul", D, T)) == DiffOperator.euler() + DiffOperator.identity()
    sq = normal_form(("pow", DiffOperator.irregular(1), 2))
    assert sq == DiffOperator({(3, 1): 2, (4, 2): 1})
    # cross-check: t^j -> j t^(j+1) -> j (j+1) t^(j+2)
    for j in range(8):
        assert monomial_action(sq, j) == ({j + 2: j * (j + 1)} if j else {})


def test_monomial_action_examples():
    for j in range(6):
        assert monomial_action(DiffOperator.euler(), j) == ({j: j} if j else {})
        for k in (1, 2, 3):
            assert monomial_action(DiffOperator.irregular(k), j) == ({j + k: j} if j else {})


def test_leading_operator_rewrite_worked_example():
    # eps-free check of the rewrite: t^(k dD) (t^(k+1) d)^dD (t d)^mD acts on t^j like its expansion
    sp = worked_example_problem()
    k, dD, mD = sp.k, sp.delta_D, sp.m_D
    op = DiffOperator.irregular(k) ** dD * DiffOperator.euler() ** mD
    for j in range(11):
        img = monomial_action(op, j)
        expected = {j + k * dD: Fraction(j) ** mD * _irregular_chain(j, k, dD)} if j else {}
        assert img == expected


def _irregular_chain(j, k, d):
    out = Fraction(1)
    for i in range(d):
        out *= j + i * k
    return out


small_ops = st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)), st.integers(-3, 3), max_size=4)


@settings(max_examples=80, deadline=None)
@given(small_ops, small_ops, st.integers(0, 8))
def test_composition_matches_successive_action(x, y, j):
    X, Y = DiffOperator(x), DiffOperator(y)
    comp = normal_form(("mul", X, Y))
    inner = monomial_action(Y, j)
    expect: dict = {}
    for e, c in inner.items():
        for e2, c2 in monomial_action(X, e).items():
            expect[e2] = expect.get(e2, 0) + c * c2
    expect = {e: c for e, c in expect.items() if c != 0}
    assert monomial_action(comp, j) == expect


@settings(max_examples=40, deadline=None)
@given(small_ops)
def test_normal_form_idempotent(x):
    X = DiffOperator(x)
    assert normal_form(normal_form(X)) == normal_form(X)


def test_validate_structure_worked_example():
    tab = validate_structure(worked_example_problem())
    assert tab.d == {1: 4, 2: 2}
    assert tab.e == {((1, 1), 1): 1}


def test_validate_structure_minimal():
    # smallest configuration allowed by 0 < k1 < k'
    sp = ProblemSpec(k=2, kprime=2, delta_D=1, m_D=1, k1=1)
    tab = validate_structure(sp)
    assert tab.d == {} and tab.e == {}


def test_k_equal_kprime_one_rejected_only_by_k1():
    sp = ProblemSpec(k=1, kprime=1, delta_D=1, m_D=1, k1=1)
    failed = [n for n, ok, _ in structure_checks(sp) if not ok]
    assert failed == ["0 < k1 < k'"]


def test_rejects_mismatched_orders():
    with pytest.raises(StructureError, match="k delta_D = m_D k'"):
        validate_structure(ProblemSpec(k=2, kprime=3, delta_D=1, m_D=1, k1=1))


@pytest.mark.parametrize("mutation", [
    {"kprime": 3},
    {"m_D": 2},
    {"delta_D": 3},
    {"I": ((0, 1), (1, 0))},
    {"Delta": (2, 3)},
    {"mu": 1.5},
    {"k1": 2},
])
def test_single_mutations_rejected(mutation):
    sp = dataclasses.replace(worked_example_problem(), **mutation)
    with pytest.raises(StructureError):
        validate_structure(sp)
