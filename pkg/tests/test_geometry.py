import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.geometry import (AdmissibleData, GeometryError, Sector, build_admissible_data, build_good_covering,
                               check_annulus_containment, check_good_covering, estimate_sector_constants,
                               P_coefficients, quotient_bound, quotient_bound_closed_form, roots_qlm,
                               select_direction, verify_admissible_data, wrap_angle)
from artifact.problem import Polynomial, worked_example_problem

SP = worked_example_problem()


def ratio_one_problem():
    # Q = R_D: the roots have modulus 72^(-1/6) on the rays 2 pi l / 6
    return dataclasses.replace(SP, Q=SP.R_D)


def test_roots_moduli_and_angles_ratio_one():
    q = roots_qlm(ratio_one_problem(), 1.7)
    assert q.size == 6
    assert np.allclose(np.abs(q), 72.0 ** (-1 / 6), rtol=1e-14)
    ang = np.sort(np.mod(np.angle(q), 2 * math.pi))
    assert np.allclose(ang, 2 * math.pi * np.arange(6) / 6, atol=1e-12)


def test_roots_worked_example_on_thirty_degree_rays():
    q = roots_qlm(SP, 0.3)
    assert np.allclose(np.abs(q), 1.0, rtol=1e-14)
    ang = np.sort(np.mod(np.angle(q), 2 * math.pi))
    assert np.allclose(ang, np.pi / 6 + np.pi / 3 * np.arange(6), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-20, 20))
def test_roots_are_zeros_and_rotation_closed(m):
    q = roots_qlm(SP, m)
    c = P_coefficients(SP, m)
    assert np.max(np.abs(np.polyval(c, q))) <= 1e-10 * np.max(np.abs(c))
    rot = q * np.exp(2j * math.pi / q.size)
    assert all(np.min(np.abs(q - r)) < 1e-12 for r in rot)
    # product form reproduces the coefficients
    lead = -complex(SP.R_D.at_im(m)) * SP.k ** SP.delta_D * SP.kprime ** SP.m_D
    prod = lead * np.poly(q)
    assert np.allclose(prod, c, rtol=0, atol=1e-9 * np.max(np.abs(c)))


def test_annulus_containment():
    sp = ratio_one_problem()
    ok, wit = check_annulus_containment(sp, {"r1": 0.5, "r2": 2.0, "d": 0.0, "eta": 0.2}, np.linspace(-5, 5, 41))
    assert ok and wit is None
    bad = dataclasses.replace(SP, Q=Polynomial((2.0, 0.0, 1.0)), R_D=Polynomial((1.0, 0.0, 1.0)))
    ok, wit = check_annulus_containment(bad, {"r1": 0.5, "r2": 3.0, "d": 0.0, "eta": 0.2},
                                        np.linspace(-0.99, 0.99, 9).tolist() + [1.2, 1.5, 3.0])
    assert not ok and wit is not None
    assert check_annulus_containment(bad, {"r1": 0.5, "r2": 3.0, "d": 0.0, "eta": 0.2}, [])[0]


def test_sector_constants_positive_and_consistent():
    sp = ratio_one_problem()
    U = Sector(math.pi / 6, 0.8)  # between the root rays at 0 and pi/3
    rad = np.geomspace(1e-3, 40.0, 60)
    ang = U.direction + np.linspace(-0.45, 0.45, 9) * U.aperture
    ug = (rad[:, None] * np.exp(1j * ang[None, :])).ravel()
    mg = np.linspace(-10, 10, 21)
    sc = estimate_sector_constants(sp, U, 0.2, mg, ug)
    assert sc.M1 > 0 and sc.M2 > 0 and sc.lower_bound > 0
    ql0 = np.abs(roots_qlm(sp, 0.0)[sc.l0])
    assert sc.M2 <= sc.M1 * np.max(1 + np.abs(ug)) / ql0 + 1e-12


def test_sector_constants_reject_root_on_grid():
    sp = ratio_one_problem()
    root = roots_qlm(sp, 0.0)[1]
    U = Sector(float(np.angle(root)), 0.3)
    with pytest.raises(GeometryError):
        estimate_sector_constants(sp, U, 0.1, [0.0], [root, 2 * root])


def test_quotient_bound():
    sp = ratio_one_problem()
    U = Sector(math.pi / 6, 0.8)
    ug = (np.geomspace(1e-3, 30, 40)[:, None] * np.exp(1j * (U.direction + np.linspace(-0.3, 0.3, 5)))).ravel()
    mg = np.linspace(-5, 5, 11)
    qb = quotient_bound(sp, ug, mg)
    assert qb >= 1.0
    # the ratio Q/R_D is 1 for every m, so the bound is attained by P_m1/P_m = 1 on the diagonal
    assert qb == pytest.approx(1.0, rel=1e-12)
    assert quotient_bound(sp, ug, mg[::-1]) == qb
    sc = estimate_sector_constants(sp, U, 0.2, mg, ug)
    assert qb <= quotient_bound_closed_form(sp, sc.M1, 1.0) + 1e-12


def test_good_covering_examples():
    secs = build_good_covering(3, 1.0, overlap=0.1)
    ok, _, _ = check_good_covering(secs)
    assert ok
    two = [Sector(0.0, 2.0, 1.0), Sector(math.pi, 2.0, 1.0)]
    ok, reason, wit = check_good_covering(two)
    assert not ok and wit is not None
    wide = [Sector(0.0, 5.0, 1.0), Sector(2.1, 5.0, 1.0), Sector(-2.1, 5.0, 1.0)]
    ok, reason, _ = check_good_covering(wide)
    assert not ok and "three" in reason


def test_admissible_worked_example_default():
    data = build_admissible_data(SP, 6)
    ok, clauses = verify_admissible_data(SP, data)
    assert ok, [c for c in clauses if not c[1]]
    # the pair (0, 1) straddles the root ray at 30 degrees
    dirs = sorted(round(math.degrees(wrap_angle(u.direction))) for u in data.U_sectors)
    assert dirs == [-120, -60, 0, 60, 120, 180]


def test_admissible_worked_example_wide_sector():
    aps = [5 * math.pi / 6 + 0.1, 7 * math.pi / 12 + 0.1, 7 * math.pi / 12 + 0.1]
    data = build_admissible_data(SP, 3, E_apertures=aps)
    assert data.coverings[0].aperture > 5 * math.pi / 6
    assert verify_admissible_data(SP, data)[0]


def test_admissible_roundtrip():
    data = build_admissible_data(SP, 6)
    back = AdmissibleData.from_dict(data.to_dict())
    assert back.to_dict() == data.to_dict()


def test_product_condition_fails_for_tiny_antipodal_sectors():
    U = [Sector(0.0, 0.05), Sector(math.pi, 0.05)]
    E = build_good_covering(2, 1.0, overlap=0.1)
    S = [Sector(e.direction, math.pi / SP.kprime) for e in E]
    data = AdmissibleData(E, U, S, Sector(0.0, 0.1, 1.0), 0.3, theta_kk=math.pi / SP.k + 0.5)
    ok, clauses = verify_admissible_data(SP, data)
    assert not ok
    bad = [c for c in clauses if not c[1]]
    assert any("product sector" in c[0] and "arg(eps t)" in c[2] for c in bad)


def test_shrinking_radius_keeps_admissibility():
    for e0 in (2.4, 1.0, 0.1):
        sp = dataclasses.replace(SP, epsilon0=e0)
        assert verify_admissible_data(sp, build_admissible_data(sp, 6))[0]


def test_select_direction_examples():
    sec = Sector(0.3, 1.0)
    assert select_direction(sec, 3, 2.0 * np.exp(0.3j), 0.5) == pytest.approx(0.3)
    d = 0.0
    T = np.exp(1j * (d + math.pi / 6 - 0.01))
    g = select_direction(Sector(d, math.pi / 3 + 0.1), 3, T, 0.5)
    assert math.cos(3 * (g - np.angle(T))) >= 0.5 - 1e-12
    with pytest.raises(GeometryError):
        select_direction(Sector(0.0, 0.2), 3, np.exp(2.5j), 0.5)


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.25, 0.25), st.floats(-0.01, 0.01))
def test_select_direction_continuous(a, da):
    sec = Sector(0.0, 1.0)
    g1 = select_direction(sec, 3, np.exp(1j * a), 0.5)
    g2 = select_direction(sec, 3, np.exp(1j * (a + da)), 0.5)
    assert abs(g1 - g2) <= 2 * abs(da) + 1e-12
