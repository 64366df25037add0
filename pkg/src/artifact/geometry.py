"""Sector geometry: roots of P_m(u), root-avoiding sectors, coverings.

Angles are normalized to (-pi, pi]; membership of half-open angular
intervals avoids double counting on shared edges.  All constants returned
here are minima or suprema over finite grids, so they are empirical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .problem import ProblemSpec

__all__ = [
    "Sector",
    "GeometryError",
    "wrap_angle",
    "roots_qlm",
    "P_coefficients",
    "check_annulus_containment",
    "SectorConstants",
    "estimate_sector_constants",
    "quotient_bound",
    "quotient_bound_closed_form",
    "build_good_covering",
    "check_good_covering",
    "AdmissibleData",
    "build_admissible_data",
    "verify_admissible_data",
    "select_direction",
]

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Infeasible geometry; ``witness`` carries the offending data."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    out = -((-a + math.pi) % TWO_PI - math.pi)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Sector:
    """Open sector {|arg z - direction| < aperture/2, |z| < radius}."""

    direction: float
    aperture: float
    radius: float = math.inf

    def __post_init__(self):
        if not self.aperture > 0:
            raise ValueError("aperture must be > 0")
        if not self.radius > 0:
            raise ValueError("radius must be > 0")

    def offset(self, z) -> np.ndarray:
        return wrap_angle(np.angle(np.asarray(z, dtype=complex)) - self.direction)

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        ok = (np.abs(self.offset(z)) < self.aperture / 2.0) & (z != 0)
        if math.isfinite(self.radius):
            ok &= np.abs(z) < self.radius
        return ok

    def contains_angle(self, theta) -> np.ndarray:
        d = wrap_angle(np.asarray(theta, dtype=float) - self.direction)
        return np.abs(d) < self.aperture / 2.0

    @property
    def interval(self) -> tuple:
        return (self.direction - self.aperture / 2.0, self.direction + self.aperture / 2.0)

    def to_dict(self) -> dict:
        return {"direction": self.direction, "aperture": self.aperture,
                "radius": None if math.isinf(self.radius) else self.radius}

    @classmethod
    def from_dict(cls, d: dict) -> "Sector":
        r = d.get("radius")
        return cls(d["direction"], d["aperture"], math.inf if r is None else r)


# --------------------------------------------------------------------------
# roots of P_m


def _lead(spec: ProblemSpec) -> float:
    return float(spec.k ** spec.delta_D * spec.kprime ** spec.m_D)


def roots_qlm(spec: ProblemSpec, m: float) -> np.ndarray:
    """The k delta_D roots of P_m(u) = Q(im) - R_D(im) k^dD k'^mD u^(k dD)."""
    rd = complex(spec.R_D.at_im(m))
    if abs(rd) == 0.0:
        raise GeometryError(f"R_D(im) vanishes at m={m}", witness=m)
    ratio = complex(spec.Q.at_im(m)) / (rd * _lead(spec))
    n = spec.k * spec.delta_D
    mod = abs(ratio) ** (1.0 / n)
    arg = math.atan2(ratio.imag, ratio.real)
    ell = np.arange(n)
    return mod * np.exp(1j * (arg / n + TWO_PI * ell / n))


def P_coefficients(spec: ProblemSpec, m: float) -> np.ndarray:
    """Coefficients of P_m(u) in decreasing degree (numpy.roots order)."""
    n = spec.k * spec.delta_D
    c = np.zeros(n + 1, complex)
    c[0] = -complex(spec.R_D.at_im(m)) * _lead(spec)
    c[-1] = complex(spec.Q.at_im(m))
    return c


def check_annulus_containment(spec: ProblemSpec, annulus: dict, mgrid) -> tuple:
    """Is Q(im)/R_D(im) inside {r1 <= |z| <= r2, |arg z - d| <= eta/2} for all grid m?

    Returns ``(ok, witness)`` where ``witness`` is the worst violating m or None.
    """
    r1, r2, d, eta = annulus["r1"], annulus["r2"], annulus["d"], annulus["eta"]
    if not (r1 < r2 and eta > 0):
        raise ValueError("need r1 < r2 and eta > 0")
    m = np.asarray(mgrid, dtype=float)
    if m.size == 0:
        return True, None
    z = spec.Q.at_im(m) / spec.R_D.at_im(m)
    rad = np.abs(z)
    ang = np.abs(wrap_angle(np.angle(z) - d))
    viol = np.maximum.reduce([r1 - rad, rad - r2, (ang - eta / 2.0) * np.maximum(rad, 1e-300)])
    if np.all(viol <= 0):
        return True, None
    return False, float(m[int(np.argmax(viol))])


@dataclass
class SectorConstants:
    M1: float
    M2: float
    l0: int
    lower_bound: float
    witness: dict = field(default_factory=dict)
    label: str = "empirical over grid"


def _u_samples(U: Sector, r: float, ugrid) -> np.ndarray:
    ugrid = np.asarray(ugrid, dtype=complex)
    return ugrid


def estimate_sector_constants(spec: ProblemSpec, U_d: Sector, r: float, mgrid, ugrid) -> SectorConstants:
    """Grid minima M1 = |u - q_l|/(1+|u|), M2 = |u - q_l0|/|q_l0| and the lower
    bound constant c with |P_m(u)| >= c |R_D(im)| (1+|u|)^(k dD - 1) |u - q_l0|.

    ``ugrid`` is a set of complex points of U_d union D(0, r); points outside
    are rejected.  The best l0 maximizes the grid minimum of M2.
    """
    u = np.asarray(ugrid, dtype=complex).ravel()
    inside = U_d.contains(u) | (np.abs(u) < r)
    if not np.all(inside):
        raise GeometryError("u-grid leaves U_d union D(0, r)", witness=complex(u[~inside][0]))
    mgrid = np.asarray(mgrid, dtype=float)
    n = spec.k * spec.delta_D
    M1 = math.inf
    M2_per_l = np.full(n, math.inf)
    lower = math.inf
    wit = {}
    for m in mgrid:
        q = roots_qlm(spec, m)
        dist = np.abs(u[:, None] - q[None, :])
        val = dist / (1.0 + np.abs(u))[:, None]
        if val.min() < M1:
            M1 = float(val.min())
            i, j = np.unravel_index(np.argmin(val), val.shape)
            wit["M1"] = {"m": float(m), "u": [u[i].real, u[i].imag], "l": int(j)}
        M2_per_l = np.minimum(M2_per_l, (dist / np.abs(q)[None, :]).min(axis=0))
    l0 = int(np.argmax(M2_per_l))
    M2 = float(M2_per_l[l0])
    for m in mgrid:
        q = roots_qlm(spec, m)
        P = np.polyval(P_coefficients(spec, m), u)
        denom = abs(complex(spec.R_D.at_im(m))) * (1.0 + np.abs(u)) ** (n - 1) * np.abs(u - q[l0])
        lower = min(lower, float(np.min(np.abs(P) / denom)))
    if not (M1 > 0 and M2 > 0 and lower > 0):
        raise GeometryError("sector meets a root of P_m", witness=wit)
    return SectorConstants(M1, M2, l0, lower, wit)


def quotient_bound(spec: ProblemSpec, ugrid, mgrid) -> float:
    """Grid sup of |P_{m1}(u) R_D(im) / (P_m(u) R_D(im1))| over u, m, m1."""
    u = np.asarray(ugrid, dtype=complex).ravel()
    m = np.asarray(mgrid, dtype=float)
    P = np.array([np.polyval(P_coefficients(spec, mm), u) for mm in m])  # (M, U)
    rd = spec.R_D.at_im(m)
    a = P / rd[:, None]
    # sup over (m, m1) of |a(m1)| / |a(m)| at each u
    return float(np.max(np.abs(a).max(axis=0) / np.abs(a).min(axis=0)))


def quotient_bound_closed_form(spec: ProblemSpec, M1: float, r2: float) -> float:
    """sup_x (r2 + c x^n) / (c M1^n (1+x)^n) with c = k^dD k'^mD, n = k dD."""
    c = _lead(spec)
    n = spec.k * spec.delta_D
    x = np.concatenate([np.linspace(0, 10, 2001), np.geomspace(10, 1e6, 2000)])
    return float(np.max((r2 + c * x ** n) / (c * M1 ** n * (1 + x) ** n)))


# --------------------------------------------------------------------------
# coverings


def _arc_cover(sectors: Sequence[Sector], samples: int = 7200):
    th = wrap_angle(np.linspace(-math.pi, math.pi, samples, endpoint=False) + math.pi / samples)
    hits = np.array([s.contains_angle(th) for s in sectors])
    return th, hits


def check_good_covering(sectors: Sequence[Sector]) -> tuple:
    """Check consecutive overlaps, no triple overlaps, and full angular cover.

    Returns ``(ok, reason, witness)``.
    """
    n = len(sectors)
    if n < 2:
        return False, "need at least two sectors", None
    radii = {s.radius for s in sectors}
    if len(radii) != 1:
        return False, "sectors must share one radius", None
    for i in range(n):
        a, b = sectors[i], sectors[(i + 1) % n]
        gap = abs(wrap_angle(b.direction - a.direction))
        if gap >= (a.aperture + b.aperture) / 2.0:
            return False, f"sectors {i} and {(i + 1) % n} do not overlap", (i, (i + 1) % n)
    th, hits = _arc_cover(sectors)
    count = hits.sum(axis=0)
    if np.any(count >= 3):
        return False, "three sectors share a direction", float(th[np.argmax(count)])
    if np.any(count == 0):
        return False, "directions left uncovered", float(th[np.argmin(count)])
    # non-consecutive pairs must be disjoint
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if np.any(hits[i] & hits[j]):
                return False, f"non-consecutive sectors {i}, {j} intersect", (i, j)
    return True, "ok", None


def build_good_covering(varsigma: int, epsilon0: float, overlap: float = 0.1,
                        start: float = 0.0, apertures: Sequence[float] | None = None) -> list:
    """``varsigma`` sectors of radius epsilon0 around the origin.

    By default directions are equally spaced with aperture 2 pi/varsigma + overlap;
    ``apertures`` can prescribe unequal openings (listed counterclockwise
    from ``start``), their bisectors are then placed edge to edge.
    """
    if varsigma < 2:
        raise ValueError("need varsigma >= 2")
    if apertures is None:
        step = TWO_PI / varsigma
        secs = [Sector(wrap_angle(start + i * step), step + overlap, epsilon0) for i in range(varsigma)]
    else:
        if len(apertures) != varsigma:
            raise ValueError("one aperture per sector")
        core = np.asarray(apertures, dtype=float) - overlap
        if abs(core.sum() - TWO_PI) > 1e-9:
            raise ValueError("apertures minus overlap must add up to 2 pi")
        secs = []
        edge = start - core[0] / 2.0
        for ap, c in zip(apertures, core):
            secs.append(Sector(wrap_angle(edge + c / 2.0), float(ap), epsilon0))
            edge += c
    ok, reason, wit = check_good_covering(secs)
    if not ok:
        raise GeometryError(reason, wit)
    return secs


# --------------------------------------------------------------------------
# directions and admissible data


def select_direction(sector: Sector, k: int, T: complex, delta1: float) -> float:
    """Direction gamma inside ``sector`` with cos(k (gamma - arg T)) >= delta1,
    the feasible one closest to the bisecting direction."""
    if not (0 < delta1 < 1):
        raise ValueError("need 0 < delta1 < 1")
    if T == 0:
        raise ValueError("T must be nonzero")
    argT = math.atan2(complex(T).imag, complex(T).real)
    half = math.acos(delta1) / k
    lo = argT - half
    hi = argT + half
    # feasible set is [lo, hi] intersected with the open sector
    off_lo = wrap_angle(lo - sector.direction)
    center_off = wrap_angle(argT - sector.direction)
    a = center_off - half
    b = center_off + half
    s_lo = -sector.aperture / 2.0
    s_hi = sector.aperture / 2.0
    left = max(a, s_lo)
    right = min(b, s_hi)
    if left > right or (left == s_lo and right == s_lo) or (left == s_hi and right == s_hi):
        raise GeometryError("no admissible direction for this T", witness=argT)
    g = min(max(0.0, left), right)
    # strictly inside the open sector
    eps = 1e-12
    g = min(max(g, s_lo + eps), s_hi - eps)
    return wrap_angle(sector.direction + g)


@dataclass
class AdmissibleData:
    coverings: list
    U_sectors: list
    S_sectors: list
    T_sector: Sector
    r: float
    delta1: float = 0.5
    delta2: float = 0.25
    theta_kk: float = 0.0
    report: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "coverings": [s.to_dict() for s in self.coverings],
            "U_sectors": [s.to_dict() for s in self.U_sectors],
            "S_sectors": [s.to_dict() for s in self.S_sectors],
            "T_sector": self.T_sector.to_dict(),
            "r": self.r, "delta1": self.delta1, "delta2": self.delta2, "theta_kk": self.theta_kk,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdmissibleData":
        return cls([Sector.from_dict(s) for s in d["coverings"]],
                   [Sector.from_dict(s) for s in d["U_sectors"]],
                   [Sector.from_dict(s) for s in d["S_sectors"]],
                   Sector.from_dict(d["T_sector"]), d["r"], d.get("delta1", 0.5),
                   d.get("delta2", 0.25), d.get("theta_kk", 0.0))


def _root_angles(spec: ProblemSpec, mgrid) -> np.ndarray:
    return np.concatenate([np.angle(roots_qlm(spec, m)) for m in mgrid])


def _verify_clauses(spec: ProblemSpec, data: AdmissibleData, mgrid, n_samples: int = 9) -> list:
    """Independent re-verification; returns a list of (clause, ok, detail)."""
    out = []
    ok, reason, wit = check_good_covering(data.coverings)
    out.append(("good covering", ok, reason))
    n = len(data.coverings)
    if not (len(data.U_sectors) == len(data.S_sectors) == n):
        out.append(("one U and S sector per covering sector", False, "length mismatch"))
        return out
    # 1) U sectors avoid the roots, with positive constants on sampled grids
    for p, U in enumerate(data.U_sectors):
        rad = np.concatenate([[0.0], np.geomspace(1e-3, 50.0, 40)])
        ang = U.direction + np.linspace(-0.45, 0.45, 7) * U.aperture
        ug = (rad[:, None] * np.exp(1j * ang[None, :])).ravel()
        ug = np.concatenate([ug, 0.9 * data.r * np.exp(1j * np.linspace(-math.pi, math.pi, 24))])
        try:
            sc = estimate_sector_constants(spec, U, data.r, mgrid, ug)
            out.append((f"U_{p} root avoidance", True, f"M1={sc.M1:.3g}, M2={sc.M2:.3g}"))
        except GeometryError as exc:
            out.append((f"U_{p} root avoidance", False, str(exc)))
    # 2.1) consecutive S sectors intersect, 2.2) they cover C*
    S = data.S_sectors
    th, hits = _arc_cover(S)
    for p in range(n):
        inter = np.any(hits[p] & hits[(p + 1) % n])
        out.append((f"S_{p} meets S_{p + 1}", bool(inter), ""))
    out.append(("S sectors cover C*", bool(np.all(hits.any(axis=0))), ""))
    for p in range(n):
        bound = math.pi / spec.kprime + data.U_sectors[p].aperture
        out.append((f"S_{p} aperture < pi/k' + ap(U_{p})", S[p].aperture < bound,
                    f"{S[p].aperture:.4f} vs {bound:.4f}"))
    # 3) eps t lands in the product sector of opening theta_kk around d_p
    for p, E in enumerate(data.coverings):
        theta_kk = data.theta_kk
        bound = math.pi / spec.k + S[p].aperture
        out.append((f"theta_kk < pi/k + ap(S_{p})", 0 < theta_kk < bound, f"{theta_kk:.4f} vs {bound:.4f}"))
        prod = Sector(S[p].direction, theta_kk, math.inf)
        e_ang = E.direction + np.linspace(-0.499, 0.499, n_samples) * E.aperture
        t_ang = data.T_sector.direction + np.linspace(-0.499, 0.499, n_samples) * data.T_sector.aperture
        tot = e_ang[:, None] + t_ang[None, :]
        inside = prod.contains_angle(tot)
        good = bool(np.all(inside))
        wit = None if good else float(tot.ravel()[np.argmin(inside.ravel())])
        out.append((f"eps t in product sector for p={p}", good, "" if good else f"arg(eps t)={wit:.4f}"))
    return out


def verify_admissible_data(spec: ProblemSpec, data: AdmissibleData, mgrid=None) -> tuple:
    """Re-check every clause; returns ``(ok, clauses)``."""
    if mgrid is None:
        mgrid = np.linspace(-20, 20, 41)
    clauses = _verify_clauses(spec, data, mgrid)
    return all(c[1] for c in clauses), clauses


def build_admissible_data(spec: ProblemSpec, varsigma: int = 6, *, E_apertures=None,
                          T_opening: float = 0.1, T_radius: float = 1.0, r: float | None = None,
                          margin: float = 0.05, delta1: float = 0.5, delta2: float = 0.25,
                          mgrid=None) -> AdmissibleData:
    """Heuristic admissible set for problems whose roots have m-independent
    arguments (the gaps between consecutive root rays host the U sectors).

    Covering sector p is centred on the gap bisector d_p (T bisected by 0);
    its U sector fills the gap up to ``margin``; S_p has the largest opening
    below pi/k' + ap(U_p); the product opening theta_kk is the largest value
    below pi/k + min ap(S_p).
    """
    if mgrid is None:
        mgrid = np.linspace(-20, 20, 41)
    n = spec.k * spec.delta_D
    per_m = np.array([np.sort(wrap_angle(np.angle(roots_qlm(spec, float(m))))) for m in mgrid])
    base = per_m[0]
    spread = float(np.max(np.abs(wrap_angle(per_m - base[None, :]))))
    if spread > 1e-9:
        raise GeometryError("root arguments move with m; supply sectors explicitly")
    gaps = [(base[i], base[(i + 1) % n] + (TWO_PI if i == n - 1 else 0.0)) for i in range(n)]
    bis = [wrap_angle(0.5 * (a + b)) for a, b in gaps]
    width = TWO_PI / n
    if varsigma > n or n % varsigma != 0 and E_apertures is None:
        raise GeometryError("varsigma must divide the number of root gaps")
    # pick gap bisectors evenly
    order = np.argsort(np.abs(wrap_angle(np.asarray(bis))))
    first = int(order[0])
    stride = n // varsigma
    d = [bis[(first + i * stride) % n] for i in range(varsigma)]
    d = [d[i] for i in np.argsort(wrap_angle(np.asarray(d) - d[0]) % TWO_PI)]
    if E_apertures is None:
        E = build_good_covering(varsigma, spec.epsilon0, overlap=0.1, start=d[0])
        E = [Sector(dp, e.aperture, e.radius) for dp, e in zip(d, E)]
    else:
        E = build_good_covering(varsigma, spec.epsilon0, overlap=0.1, start=d[0], apertures=E_apertures)
    U = [Sector(dp, width - 2 * margin) for dp in d]
    min_root = min(np.min(np.abs(roots_qlm(spec, m))) for m in mgrid)
    r = 0.5 * min_root if r is None else r
    S = []
    for p, dp in enumerate(d):
        ap = math.pi / spec.kprime + U[p].aperture - margin
        S.append(Sector(E[p].direction, ap))
    T = Sector(0.0, T_opening, T_radius)
    # the product opening must contain every eps t, eps in E_p, t in T
    need = max(e.aperture for e in E) + T_opening + margin
    bound = math.pi / spec.k + min(s.aperture for s in S)
    if need >= bound:
        raise GeometryError("eps t cannot be kept inside the product sector",
                            witness={"need": need, "bound": bound})
    data = AdmissibleData(E, U, S, T, r, delta1, delta2, theta_kk=need)
    ok, clauses = verify_admissible_data(spec, data, mgrid)
    data.report = {"ok": ok, "clauses": [(c, bool(o), d_) for c, o, d_ in clauses]}
    if not ok:
        first_bad = next(c for c in clauses if not c[1])
        raise GeometryError(f"admissibility clause failed: {first_bad[0]}", witness=first_bad)
    return data
