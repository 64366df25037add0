"""Run configuration and the staged pipeline: validate, solve, verify.

Every stage is deterministic given the configuration and seed.  Ray
solutions are cached under a key derived from the data they depend on, so a
rerun reproduces the same bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss

from .asymptotics import (ConditioningError, DataQualityError, asymptotic_coefficients,
                          cross_sector_agreement, equivalence_suite, flatness_fit, gevrey_fit, kappa_of,
                          thinning_stability)
from .banach import FreqGrid, NormParams, RadialGrid, SampledSymbol, norm_weighted
from .fixedpoint import formal_borel_coefficients, solve_fixed_point
from .geometry import (AdmissibleData, GeometryError, Sector, build_admissible_data, roots_qlm,
                       verify_admissible_data, wrap_angle)
from .laplace import ArcDifference, SectorSolution, fourier_inverse, pde_residual, t_operator_fd
from .opalgebra import structure_checks
from .problem import ProblemSpec, worked_example_problem

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "StageError",
    "GridConfig",
    "LadderConfig",
    "ResidualConfig",
    "CoefficientConfig",
    "GevreyConfig",
    "Tolerances",
    "OutputConfig",
    "RunConfig",
    "default_config",
    "load_config",
    "parse_config",
    "validate",
    "solve",
    "verify",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEG = math.pi / 180.0


class ConfigError(ValueError):
    """Configuration that cannot be parsed; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class StageError(RuntimeError):
    """Failure inside a pipeline stage; ``stage`` records where."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


# --------------------------------------------------------------------------
# configuration sections


@dataclass
class GridConfig:
    """Radial panels (lengths in units of |u|) and the frequency grid."""

    r_max: float = 70.0
    h_fine: float = 0.2
    fine_until: float = 1.6
    growth: float = 1.2
    h_max: float = 3.0
    nodes_per_panel: int = 20
    freq_step: float = 0.2
    freq_decay: float = 1.0

    def radial(self) -> RadialGrid:
        return RadialGrid.graded(self.r_max, self.h_fine, self.fine_until, self.growth, self.h_max,
                                 self.nodes_per_panel)

    def freq(self) -> FreqGrid:
        return FreqGrid.for_decay(self.freq_decay, self.freq_step)


@dataclass
class LadderConfig:
    """Flatness ladder: |eps| from eps_hi_fraction*eps0 down to eps_lo_fraction*eps0
    along the bisector of E_p and E_q, with the u-rays at bisector -/+ ray_offset_deg.

    The arc panels are given as fractions of the ray offset (angles) and of the
    arc radius (radii).  t samples are fractions of the time sector's radius and
    opening; z samples are absolute.
    """

    points: int = 12
    eps_hi_fraction: float = 0.5
    eps_lo_fraction: float = 0.01
    ray_offset_deg: float = 10.0
    r0: float = 0.95
    r0_check: float = 0.92
    resolve_rtol: float = 0.05
    arc_theta_fractions: tuple = (-1.0, -0.6, -0.3, -0.15, -0.06, 0.0, 0.06, 0.15, 0.3, 0.6, 1.0)
    arc_nodes: int = 12
    arc_radial_fractions: tuple = (0.0, 0.316, 0.526, 0.684, 0.789, 0.863, 0.916, 0.947, 0.968,
                                   0.984, 0.995, 1.0)
    arc_radial_nodes: int = 16
    t_radius_fractions: tuple = (0.4, 0.6, 0.8, 0.98)
    t_angle_fractions: tuple = (-0.45, 0.0, 0.45)
    z_real: tuple = (-2.0, -1.2, -0.4, 0.4, 1.2, 2.0)
    z_imag: tuple = (-0.25, 0.25)

    def eps_abs(self, epsilon0: float) -> np.ndarray:
        return np.geomspace(self.eps_hi_fraction * epsilon0, self.eps_lo_fraction * epsilon0, self.points)


@dataclass
class ResidualConfig:
    """Equation residual samples: every (arg eps, |eps|, point) combination.

    ``eps_offsets_deg`` are offsets from the sector bisector; ``points`` are
    (|t|, arg t in radians, Re z, Im z).  The t-operators are compared with
    their finite-difference versions at steps fd_steps*|t| (the error ratio of
    consecutive steps must fall in ``fd_ratio_band``, 4 for second order); the
    fully finite-difference residual uses fd_residual_step*|t|.
    """

    eps_offsets_deg: tuple = (-10.0, 0.0, 10.0)
    eps_abs: tuple = (0.3, 0.65, 1.0)
    points: tuple = ((0.5, 0.0, 0.0, 0.0), (0.8, 0.03, 0.5, 0.2), (0.95, -0.03, -1.0, 0.4))
    fd_steps: tuple = (0.06, 0.03)
    fd_residual_step: float = 0.015
    fd_ratio_band: tuple = (3.0, 5.0)


@dataclass
class CoefficientConfig:
    """Least-squares fits of u ~ sum h_m eps^m along each sector bisector."""

    eps_lo: float = 0.005
    eps_hi: float = 0.05
    points: int = 24
    n_max: int = 8
    m_max: int = 4
    t: float = 0.9
    z: tuple = (0.3, 0.0)


@dataclass
class GevreyConfig:
    """Remainders of u against its formal series along the first sector bisector.

    ``n_min = 0`` starts the fit at k*delta_D + 1, the first order at which the
    leading operator enters the coefficient recursion.
    """

    eps_lo: float = 0.01
    eps_hi: float = 1.2
    points: int = 40
    n_min: int = 0
    n_max: int = 69
    t: float = 0.98
    z: tuple = (0.3, 0.0)
    noise_rel: float = 1e-15
    resolve_factor: float = 1e3


@dataclass
class Tolerances:
    fp_tol: float = 1e-8
    max_iter: int = 60
    pointwise_tol: float = 1e-15
    max_polish: int = 1000
    contraction_max: float = 0.55
    residual_factor: float = 2.0
    refine_factor: float = 5.0
    pde_rel: float = 1e-4
    kappa_rel: float = 0.15
    gevrey_rel: float = 0.20
    cross_factor: float = 2.0
    min_decades: float = 1.5
    planted_noise: float = 1e-3


@dataclass
class OutputConfig:
    directory: str = "run"
    formats: tuple = ("json", "csv")


_SECTIONS = {
    "grids": GridConfig,
    "ladder": LadderConfig,
    "residual": ResidualConfig,
    "coefficients": CoefficientConfig,
    "gevrey": GevreyConfig,
    "tolerances": Tolerances,
    "outputs": OutputConfig,
}


@dataclass
class RunConfig:
    """Everything a run depends on.  ``admissible`` is ``"auto"`` or a full
    admissible-data record; ``pair`` names the two adjacent sectors analysed."""

    problem: ProblemSpec = field(default_factory=worked_example_problem)
    admissible: object = "auto"
    pair: tuple = (0, 1)
    varsigma: int = 6
    grids: GridConfig = field(default_factory=GridConfig)
    ladder: LadderConfig = field(default_factory=LadderConfig)
    residual: ResidualConfig = field(default_factory=ResidualConfig)
    coefficients: CoefficientConfig = field(default_factory=CoefficientConfig)
    gevrey: GevreyConfig = field(default_factory=GevreyConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    threads: int = 1
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = {"schema_version": self.schema_version, "problem": self.problem.to_dict()}
        out["admissible"] = self.admissible if isinstance(self.admissible, str) else \
            AdmissibleData.to_dict(self.admissible)
        out["pair"] = list(self.pair)
        out["varsigma"] = self.varsigma
        for name in _SECTIONS:
            out[name] = _jsonable(dataclasses.asdict(getattr(self, name)))
        out["seed"] = self.seed
        out["threads"] = self.threads
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        """Hash of every field that can change a result (threads excluded)."""
        d = self.to_dict()
        d.pop("threads")
        d["outputs"] = None
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("top level must be an object")
        known = {"schema_version", "problem", "admissible", "pair", "varsigma", "seed", "threads", *_SECTIONS}
        for key in d:
            if key not in known:
                raise ConfigError("unknown field", key)
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {version} (expected {SCHEMA_VERSION})",
                              "schema_version")
        if "problem" not in d:
            raise ConfigError("missing required section", "problem")
        problem = _problem_from_dict(d["problem"])
        adm = d.get("admissible", "auto")
        if isinstance(adm, str):
            if adm != "auto":
                raise ConfigError("must be 'auto' or an admissible-data object", "admissible")
        else:
            try:
                adm = AdmissibleData.from_dict(adm)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"malformed admissible data ({exc})", "admissible") from exc
        kw = {}
        for name, sec in _SECTIONS.items():
            kw[name] = _section_from_dict(sec, d.get(name, {}), name)
        pair = d.get("pair", [0, 1])
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2 and all(isinstance(p, int) for p in pair)):
            raise ConfigError("must be two sector indices", "pair")
        return cls(problem=problem, admissible=adm, pair=tuple(pair),
                   varsigma=_as_int(d.get("varsigma", 6), "varsigma"),
                   seed=_as_int(d.get("seed", 0), "seed"), threads=_as_int(d.get("threads", 1), "threads"),
                   schema_version=version, **kw)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _as_int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {v!r}", path)
    return v


def _tupled(x):
    return tuple(_tupled(v) for v in x) if isinstance(x, list) else x


def _section_from_dict(cls, d, path):
    if not isinstance(d, dict):
        raise ConfigError("expected an object", path)
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key in d:
        if key not in names:
            raise ConfigError("unknown field", f"{path}.{key}")
    kw = {}
    for key, val in d.items():
        default = names[key].default
        if default is dataclasses.MISSING:
            default = names[key].default_factory()
        if isinstance(default, bool):
            ok = isinstance(val, bool)
        elif isinstance(default, int):
            ok = isinstance(val, int) and not isinstance(val, bool)
        elif isinstance(default, float):
            ok = isinstance(val, (int, float)) and not isinstance(val, bool)
            val = float(val) if ok else val
        elif isinstance(default, tuple):
            ok = isinstance(val, list)
            val = _tupled(val) if ok else val
        else:
            ok = isinstance(val, type(default))
        if not ok:
            raise ConfigError(f"expected {type(default).__name__}, got {val!r}", f"{path}.{key}")
        kw[key] = val
    return cls(**kw)


def _problem_from_dict(d) -> ProblemSpec:
    if not isinstance(d, dict):
        raise ConfigError("expected an object", "problem")
    names = {f.name: f for f in dataclasses.fields(ProblemSpec)}
    for key in d:
        if key not in names:
            raise ConfigError("unknown field", f"problem.{key}")
    for name, f in names.items():
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING and name not in d:
            raise ConfigError("missing required field", f"problem.{name}")
    try:
        return ProblemSpec.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "problem") from exc


def parse_config(text: str) -> RunConfig:
    """Parse JSON text; syntax errors report line and column."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return RunConfig.from_dict(d)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def default_config() -> RunConfig:
    """The k = 3, k' = 2 worked configuration with the default numerics."""
    return RunConfig()


# --------------------------------------------------------------------------
# geometry of a run


@dataclass
class RunGeometry:
    data: AdmissibleData
    p: int
    q: int
    d_p: float
    d_q: float
    gamma: float
    ray_lo: float
    ray_hi: float

    def to_dict(self) -> dict:
        deg = lambda a: round(a / DEG, 10)
        return {"p": self.p, "q": self.q, "d_p_deg": deg(self.d_p), "d_q_deg": deg(self.d_q),
                "ladder_direction_deg": deg(self.gamma), "ray_lo_deg": deg(self.ray_lo),
                "ray_hi_deg": deg(self.ray_hi)}


def admissible_data(cfg: RunConfig) -> AdmissibleData:
    if isinstance(cfg.admissible, AdmissibleData):
        return cfg.admissible
    return build_admissible_data(cfg.problem, cfg.varsigma)


def run_geometry(cfg: RunConfig, data: AdmissibleData | None = None) -> RunGeometry:
    data = admissible_data(cfg) if data is None else data
    p, q = cfg.pair
    n = len(data.coverings)
    if not (0 <= p < n and q == (p + 1) % n):
        raise GeometryError(f"pair {cfg.pair} is not two consecutive sectors of {n}")
    d_p = data.coverings[p].direction
    d_q = d_p + wrap_angle(data.coverings[q].direction - d_p)
    gamma = 0.5 * (d_p + d_q)
    off = cfg.ladder.ray_offset_deg * DEG
    return RunGeometry(data, p, q, d_p, d_q, gamma, gamma - off, gamma + off)


# --------------------------------------------------------------------------
# validation


def _check(stage, name, ok, detail=""):
    return {"stage": stage, "name": name, "ok": bool(ok), "detail": str(detail)}


def validate(cfg: RunConfig) -> dict:
    """Every structural and geometric condition with pass/fail and witnesses."""
    spec = cfg.problem
    checks = [_check("structure", n, o, d) for n, o, d in structure_checks(spec)]
    report = {"config_hash": cfg.digest(), "checks": checks}
    try:
        kap = kappa_of(spec.k, spec.kprime)
        report["kappa"] = str(kap)
        k1inv = Fraction(1, spec.k1) - Fraction(1, spec.kprime)
        checks.append(_check("exponents", "1/kappa = 1/k + 1/k'", 1 / kap == Fraction(1, spec.k) +
                             Fraction(1, spec.kprime), f"kappa={kap}"))
        checks.append(_check("exponents", "1/kappa1 = 1/k1 - 1/k'", 1 / spec.kappa1 == k1inv,
                             f"kappa1={spec.kappa1}"))
        k2 = spec.kappa2
        if k2 is not None:
            checks.append(_check("exponents", "1/kappa2 = 1/kappa1 - 1/k",
                                 1 / k2 == 1 / spec.kappa1 - Fraction(1, spec.k), f"kappa2={k2}"))
        report["kappa1"] = str(spec.kappa1)
        report["kappa2"] = None if k2 is None else str(k2)
    except (ValueError, ZeroDivisionError) as exc:
        checks.append(_check("exponents", "growth orders defined", False, exc))
    if not all(c["ok"] for c in checks):
        report["ok"] = False
        return report
    try:
        data = admissible_data(cfg)
        ok, clauses = verify_admissible_data(spec, data)
        checks.extend(_check("admissible", n, o, d) for n, o, d in clauses)
        geo = run_geometry(cfg, data)
        report["geometry"] = geo.to_dict()
        report["admissible"] = data.to_dict()
    except GeometryError as exc:
        checks.append(_check("admissible", "admissible data", False, f"{exc} (witness {exc.witness})"))
        report["ok"] = False
        return report
    kp, d1 = spec.kprime, data.delta1
    U, E = data.U_sectors, data.coverings
    lad = cfg.ladder
    checks.append(_check("rays", "ladder ray in U_p", U[geo.p].contains_angle(geo.ray_lo), ""))
    checks.append(_check("rays", "ladder ray in U_q", U[geo.q].contains_angle(geo.ray_hi), ""))
    checks.append(_check("rays", "ladder direction in E_p and E_q",
                         E[geo.p].contains_angle(geo.gamma) and E[geo.q].contains_angle(geo.gamma), ""))
    checks.append(_check("rays", "ladder rays damped", math.cos(kp * lad.ray_offset_deg * DEG) >= d1,
                         f"cos={math.cos(kp * lad.ray_offset_deg * DEG):.3f} vs delta1={d1}"))
    for name, d in (("p", geo.d_p), ("q", geo.d_q)):
        for off in cfg.residual.eps_offsets_deg:
            a = d + off * DEG
            checks.append(_check("residual", f"arg eps = d_{name}{off:+g} deg in E_{name}",
                                 E[geo.p if name == "p" else geo.q].contains_angle(a), ""))
            checks.append(_check("residual", f"ray d_{name} damped for offset {off:+g} deg",
                                 math.cos(kp * off * DEG) >= d1, f"{math.cos(kp * off * DEG):.3f}"))
    T = data.T_sector
    for tp in cfg.residual.points:
        t = tp[0] * complex(math.cos(tp[1]), math.sin(tp[1]))
        checks.append(_check("residual", f"t={tp[0]}e^{{i{tp[1]}}} in time sector", T.contains(t), ""))
        checks.append(_check("residual", f"Im z={tp[3]} inside the strip", abs(tp[3]) < spec.beta, ""))
    for zi in lad.z_imag:
        checks.append(_check("ladder", f"Im z={zi} inside the strip", abs(zi) < spec.beta, ""))
    rmin = min(float(np.min(np.abs(roots_qlm(spec, m)))) for m in np.linspace(-20, 20, 41))
    checks.append(_check("ladder", "arc radius below the nearest root", lad.r0 < rmin,
                         f"r0={lad.r0}, min |root|={rmin:.4g}"))
    checks.append(_check("ladder", "check radius below arc radius", 0 < lad.r0_check < lad.r0, ""))
    checks.append(_check("ladder", "ladder inside the covering radius",
                         lad.eps_hi_fraction < 1.0 and lad.eps_lo_fraction > 0, ""))
    report["ok"] = all(c["ok"] for c in checks)
    return report


# --------------------------------------------------------------------------
# ray solves with a content-keyed cache


def _ray_key(spec: ProblemSpec, grid: RadialGrid, freq: FreqGrid, directions, tol: Tolerances) -> str:
    blob = json.dumps({"spec": spec.to_dict(), "grid": grid.to_dict(), "freq": [freq.h, freq.J],
                       "dirs": [float(d) for d in np.atleast_1d(directions)],
                       "tol": [tol.fp_tol, tol.max_iter, tol.pointwise_tol, tol.max_polish]},
                      sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def solve_rays(spec, grid, freq, directions, tol: Tolerances, cache_dir: Path | None, config_hash: str):
    """Fixed point on the given rays; returns (symbol, report dict).  Reuses a
    cached symbol when one with the same key exists."""
    key = _ray_key(spec, grid, freq, directions, tol)
    path = None if cache_dir is None else Path(cache_dir) / f"ray_{key}.bin"
    rep_path = None if path is None else path.with_suffix(".json")
    if path is not None and path.exists() and rep_path.exists():
        log.info("cache hit ray_%s", key)
        return SampledSymbol.load(path), json.loads(rep_path.read_text())
    log.info("solving ray_%s (%d rays, %d nodes)", key, len(np.atleast_1d(directions)), grid.size)
    sym, rep = solve_fixed_point(spec, 1.0, tol.fp_tol, tol.max_iter, grid, freq, directions,
                                 pointwise_tol=tol.pointwise_tol, max_polish=tol.max_polish)
    rd = rep.to_dict()
    rd["directions_deg"] = [float(d) / DEG for d in np.atleast_1d(directions)]
    rd["cache_key"] = key
    if path is not None:
        sym.meta.update({"cache_key": key, "config_hash": config_hash})
        path.parent.mkdir(parents=True, exist_ok=True)
        sym.save(path)
        rep_path.write_text(json.dumps(rd, indent=2, sort_keys=True))
    return sym, rd


def _arc_setup(cfg: RunConfig, geo: RunGeometry, r0: float):
    lad = cfg.ladder
    off = lad.ray_offset_deg * DEG
    bp = geo.gamma + off * np.asarray(lad.arc_theta_fractions, dtype=float)
    x, wt = leggauss(lad.arc_nodes)
    th = np.concatenate([0.5 * (a + b) + 0.5 * (b - a) * x for a, b in zip(bp[:-1], bp[1:])])
    aw = np.concatenate([0.5 * (b - a) * wt for a, b in zip(bp[:-1], bp[1:])])
    grid = RadialGrid(tuple(r0 * np.asarray(lad.arc_radial_fractions, dtype=float)), lad.arc_radial_nodes)
    return th, aw, grid


def _ray_jobs(cfg: RunConfig, geo: RunGeometry) -> dict:
    grid, freq = cfg.grids.radial(), cfg.grids.freq()
    jobs = {
        "sector_p": (grid, freq, [geo.d_p]),
        "sector_q": (grid, freq, [geo.d_q]),
        "ladder_lo": (grid, freq, [geo.ray_lo]),
        "ladder_hi": (grid, freq, [geo.ray_hi]),
    }
    for name, r0 in (("arc", cfg.ladder.r0), ("arc_check", cfg.ladder.r0_check)):
        th, _, agrid = _arc_setup(cfg, geo, r0)
        jobs[name] = (agrid, freq, th)
    return jobs


def _run_jobs(cfg, jobs, cache_dir, config_hash):
    spec = cfg.problem

    def one(item):
        name, (grid, freq, dirs) = item
        log.info("ray set %s", name)
        return name, solve_rays(spec, grid, freq, dirs, cfg.tolerances, cache_dir, config_hash)

    with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as ex:
        return dict(ex.map(one, sorted(jobs.items())))


# --------------------------------------------------------------------------
# output helpers


class Workspace:
    def __init__(self, out: Path, config_hash: str):
        self.out = Path(out)
        self.hash = config_hash
        for sub in ("ladders", "solutions", "caches"):
            (self.out / sub).mkdir(parents=True, exist_ok=True)

    @property
    def caches(self) -> Path:
        return self.out / "caches"

    @property
    def run_json(self) -> Path:
        return self.out / "run.json"

    def write_csv(self, rel: str, header: list, rows) -> Path:
        path = self.out / rel
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_hash: {self.hash}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        return path

    def read_run(self) -> dict:
        if not self.run_json.exists():
            return {}
        return json.loads(self.run_json.read_text())

    def write_run(self, d: dict) -> None:
        d = dict(d)
        d["config_hash"] = self.hash
        self.run_json.write_text(json.dumps(_clean(d), indent=2, sort_keys=True))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _clean(x):
    """JSON-safe copy (numpy scalars, tuples, non-finite floats as strings)."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


# --------------------------------------------------------------------------
# solve stage


def _relative(res: complex, scale: float) -> float:
    if scale == 0.0:
        return 0.0 if res == 0 else math.inf
    return abs(res) / scale


def _residual_samples(cfg: RunConfig, spec: ProblemSpec, w: SampledSymbol, d: float) -> list:
    """Representation and finite-difference residuals at every sample of one sector."""
    rc = cfg.residual
    rows = []
    reach = 1.0 + 3.0 * max(max(rc.fd_steps), rc.fd_residual_step)
    tmax = max(p[0] for p in rc.points) * max(rc.eps_abs) * reach
    tmin = min(p[0] for p in rc.points) * min(rc.eps_abs) / reach
    ops = [(spec.delta_D, spec.m_D)] + list(spec.I)
    lo, hi = rc.fd_ratio_band
    for off in rc.eps_offsets_deg:
        arg = d + off * DEG
        sol = SectorSolution(spec, w, 0, arg, tmin, tmax)
        for ea in rc.eps_abs:
            eps = ea * complex(math.cos(arg), math.sin(arg))
            for tp in rc.points:
                t = tp[0] * complex(math.cos(tp[1]), math.sin(tp[1]))
                z = complex(tp[2], tp[3])
                u = complex(sol(t, z, eps))
                res, sc = pde_residual(spec, sol, t, z, eps, method="representation")
                rf, sf = pde_residual(spec, sol, t, z, eps, h_t=rc.fd_residual_step * abs(t), method="fd")
                ratios, errs = [], []
                for l1, l2 in ops:
                    rep = sol.t_operator(t, z, eps, l1, l2)
                    e = [abs(t_operator_fd(spec, sol, t, z, eps, l1, l2, f * abs(t)) - rep) / max(abs(rep), 1e-300)
                         for f in rc.fd_steps]
                    errs.append(float(e[-1]))
                    if rep == 0 and not any(e):
                        continue  # identically zero solution: both routes exact, no order to measure
                    ratios.extend(e[i] / e[i + 1] if e[i + 1] > 0 else math.inf for i in range(len(e) - 1))
                fd_rel = _relative(rf, sf)
                rows.append({"arg_eps_deg": arg / DEG, "eps_abs": ea, "t": t, "z": z, "eps": eps, "u": u,
                             "rep_rel": _relative(res, sc), "scale": sc, "fd_rel": fd_rel,
                             "op_err": max(errs), "op_ratio_min": min(ratios, default=math.nan),
                             "op_ratio_max": max(ratios, default=math.nan),
                             "fd_ok": bool(fd_rel <= cfg.tolerances.pde_rel and
                                           all(lo <= r <= hi for r in ratios))})
    return rows


def _ratio_range(rows) -> list:
    """Smallest and largest t-operator error ratio; nan when no sample has one."""
    lo = [r["op_ratio_min"] for r in rows if not math.isnan(r["op_ratio_min"])]
    hi = [r["op_ratio_max"] for r in rows if not math.isnan(r["op_ratio_max"])]
    return [min(lo), max(hi)] if lo else [math.nan, math.nan]


def _refinement(cfg, spec, w, rep, cache_dir, config_hash, direction):
    """Re-solve on the radially refined and on the frequency-refined grid."""
    tol = cfg.tolerances
    grid, freq = cfg.grids.radial(), cfg.grids.freq()
    norm = NormParams(spec.nu2, spec.beta, spec.mu, spec.k1)
    wr, _ = solve_rays(spec, grid.refined(), freq, [direction], tol, cache_dir, config_hash)
    P = wr.grid.interp_matrix(grid.nodes)
    d_rad = norm_weighted(w.with_values(w.values - (P @ wr.values[0])[None]), norm)
    f2 = FreqGrid(freq.h / 2, 2 * freq.J)
    wf, _ = solve_rays(spec, grid, f2, [direction], tol, cache_dir, config_hash)
    d_freq = norm_weighted(w.with_values(w.values - wf.values[:, :, ::2]), norm)
    worst = max(d_rad, d_freq)
    return {"radial": d_rad, "frequency": d_freq, "worst": worst,
            "bound": tol.refine_factor * tol.fp_tol, "ok": worst <= tol.refine_factor * tol.fp_tol}


def solve(cfg: RunConfig, out, refine: bool = True) -> dict:
    """Fixed points on every ray the run needs, residual tables and samples."""
    report = validate(cfg)
    if not report["ok"]:
        bad = [c["name"] for c in report["checks"] if not c["ok"]]
        raise StageError("validate", "failed checks: " + "; ".join(bad))
    h = cfg.digest()
    ws = Workspace(out, h)
    spec = cfg.problem
    geo = run_geometry(cfg)
    try:
        rays = _run_jobs(cfg, _ray_jobs(cfg, geo), ws.caches, h)
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
        raise StageError("fixed point", f"{type(exc).__name__}: {exc}") from exc
    tol = cfg.tolerances
    contraction = {}
    for name, (sym, rd) in rays.items():
        contraction[name] = {
            "max_ratio": rd["max_ratio"], "residual": rd["residual"], "iterations": rd["iterations"],
            "polish_iterations": rd["polish_iterations"], "converged": rd["converged"],
            "ratio_ok": rd["max_ratio"] <= tol.contraction_max,
            "residual_ok": rd["residual"] <= tol.residual_factor * tol.fp_tol,
        }
    out = {"validate": report, "geometry": geo.to_dict(), "contraction": contraction}
    if refine:
        try:
            out["refinement"] = _refinement(cfg, spec, rays["sector_p"][0], rays["sector_p"][1],
                                            ws.caches, h, geo.d_p)
        except Exception as exc:  # noqa: BLE001
            raise StageError("refinement", f"{type(exc).__name__}: {exc}") from exc
    residuals = {}
    for name, d in (("p", geo.d_p), ("q", geo.d_q)):
        try:
            rows = _residual_samples(cfg, spec, rays[f"sector_{name}"][0], d)
        except Exception as exc:  # noqa: BLE001
            raise StageError("residual", f"sector {name}: {type(exc).__name__}: {exc}") from exc
        idx = geo.p if name == "p" else geo.q
        ws.write_csv(f"solutions/sector_{idx}.csv",
                     ["arg_eps_deg", "eps_abs", "t_re", "t_im", "z_re", "z_im", "u_re", "u_im",
                      "residual_rel", "fd_residual_rel", "t_op_fd_err", "t_op_ratio_min", "t_op_ratio_max"],
                     [[r["arg_eps_deg"], r["eps_abs"], r["t"].real, r["t"].imag, r["z"].real, r["z"].imag,
                       r["u"].real, r["u"].imag, r["rep_rel"], r["fd_rel"], r["op_err"], r["op_ratio_min"],
                       r["op_ratio_max"]] for r in rows])
        residuals[str(idx)] = {
            "samples": len(rows),
            "max_rep_rel": max(r["rep_rel"] for r in rows),
            "max_fd_rel": max(r["fd_rel"] for r in rows),
            "t_op_ratio_range": _ratio_range(rows),
            "rep_ok": all(r["rep_rel"] <= tol.pde_rel for r in rows),
            "fd_ok": all(r["fd_ok"] for r in rows),
        }
    out["residuals"] = residuals
    out["caches"] = {name: rd["cache_key"] for name, (sym, rd) in rays.items()}
    run = {"config": cfg.to_dict(), "solve": out}
    ws.write_run(run)
    return out


# --------------------------------------------------------------------------
# verify stage


def _load_rays(cfg: RunConfig, geo: RunGeometry, ws: Workspace) -> dict:
    jobs = _ray_jobs(cfg, geo)
    rays = {}
    for name, (grid, freq, dirs) in jobs.items():
        key = _ray_key(cfg.problem, grid, freq, dirs, cfg.tolerances)
        path = ws.caches / f"ray_{key}.bin"
        if not path.exists():
            raise StageError("verify", f"missing solve artifact for {name} ({path.name}); run 'solve' first")
        rays[name] = SampledSymbol.load(path)
    return rays


def flatness_ladder(cfg: RunConfig, geo: RunGeometry, rays: dict) -> list:
    """sup over the (t, z) grid of |u_q - u_p| at each ladder point, at both arc radii."""
    spec, lad, data = cfg.problem, cfg.ladder, geo.data
    eps_abs = lad.eps_abs(spec.epsilon0)
    T = data.T_sector
    ts = [T.radius * rf * complex(math.cos(T.direction + af * T.aperture), math.sin(T.direction + af * T.aperture))
          for rf in lad.t_radius_fractions for af in lad.t_angle_fractions]
    zs = [complex(a, b) for a in lad.z_real for b in lad.z_imag]
    T_min = float(eps_abs.min()) * min(abs(t) for t in ts)
    T_max = float(eps_abs.max()) * max(abs(t) for t in ts)
    diffs = {}
    for name, r0 in (("arc", lad.r0), ("arc_check", lad.r0_check)):
        _, aw, _ = _arc_setup(cfg, geo, r0)
        diffs[name] = ArcDifference(spec, rays["ladder_lo"], rays["ladder_hi"], rays[name], aw, r0,
                                    geo.gamma, T_min, T_max, data.delta1)
    direction = complex(math.cos(geo.gamma), math.sin(geo.gamma))

    def point(ea):
        eps = ea * direction
        sup = {}
        for name, D in diffs.items():
            sup[name] = max(abs(complex(D(t, z, eps))) for t in ts for z in zs)
        a, b = sup["arc"], sup["arc_check"]
        rel = abs(a - b) / a if a > 0 else math.inf
        return {"eps_abs": float(ea), "sup_diff": a, "sup_diff_check": b, "rel_disagreement": rel,
                "resolved": bool(rel <= lad.resolve_rtol)}

    with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as ex:
        return list(ex.map(point, eps_abs))


def planted_discrimination(eps_abs, K: float, M: float, kappa_target: float, rel: float,
                           noise: float, seed: int) -> dict:
    """Fit ladders with planted exponents kappa_target and 1 on the same |eps| values."""
    rng = np.random.default_rng(seed)
    out = {}
    for label, kap in (("planted_target", kappa_target), ("planted_order_one", 1.0)):
        d = K * np.exp(-M / np.asarray(eps_abs) ** kap) * np.exp(noise * rng.standard_normal(len(eps_abs)))
        fit = flatness_fit(list(zip(eps_abs, d)), kappa_target)
        out[label] = {"kappa_planted": kap, "kappa_est": fit.exponent_est,
                      "passes_target_band": bool(abs(fit.exponent_est - kappa_target) <= rel * kappa_target)}
    out["separates"] = out["planted_target"]["passes_target_band"] and not out["planted_order_one"]["passes_target_band"]
    return out


def _formal_coefficients(spec, freq, n_max, t, z):
    wn = formal_borel_coefficients(spec, freq, n_max)
    lg = [0.0] + [math.lgamma(n / spec.k) + math.lgamma(n / spec.kprime) for n in range(1, n_max + 1)]
    h = np.zeros(n_max + 1, complex)
    for n in range(1, n_max + 1):
        h[n] = complex(fourier_inverse(wn[n], z, freq=freq)) * math.exp(lg[n]) * complex(t) ** n
    return h


def gevrey_stage(cfg: RunConfig, geo: RunGeometry, rays: dict) -> dict:
    spec, gc = cfg.problem, cfg.gevrey
    w = rays["sector_p"]
    t, z = gc.t, complex(*gc.z)
    sol = SectorSolution(spec, w, 0, geo.d_p, 0.5 * gc.eps_lo * t, gc.eps_hi * t)
    direction = complex(math.cos(geo.d_p), math.sin(geo.d_p))
    eps = np.geomspace(gc.eps_lo, gc.eps_hi, gc.points)
    u = np.array([complex(sol(t, z, e * direction)) for e in eps])
    h = _formal_coefficients(spec, w.freq, gc.n_max + 1, t, z)
    n_min = gc.n_min if gc.n_min > 0 else spec.k * spec.delta_D + 1
    powers = (eps[:, None] * direction) ** np.arange(gc.n_max + 2)[None, :]
    terms = powers * h[None, :]
    partial = np.cumsum(terms, axis=1)
    rem = {}
    rows = []
    for n in range(1, gc.n_max + 1):
        part = partial[:, n - 1]
        R = np.abs(u - part)
        noise = gc.noise_rel * np.maximum(np.abs(u), np.max(np.abs(terms[:, :n]), axis=1))
        ok = R > gc.resolve_factor * noise
        pts = [(float(e), float(r)) for e, r, o in zip(eps, R, ok) if o]
        rows.extend([n, float(e), float(r), bool(o)] for e, r, o in zip(eps, R, ok))
        if n >= n_min and pts:
            rem[n] = pts
    rep = gevrey_fit(rem, noise_floor=0.0)
    sens = {}
    for shift in (3, 6):
        sub = {n: v for n, v in rem.items() if n >= n_min + shift}
        try:
            sens[str(n_min + shift)] = gevrey_fit(sub, noise_floor=0.0).kappa_est
        except ConditioningError as exc:
            sens[str(n_min + shift)] = f"conditioning: {exc}"
    return {"report": rep.to_dict(), "kappa_est": rep.kappa_est, "n_min": n_min, "n_max": gc.n_max,
            "window_sensitivity": sens, "rows": rows}


def coefficient_stage(cfg: RunConfig, geo: RunGeometry, rays: dict) -> dict:
    spec, cc = cfg.problem, cfg.coefficients
    t, z = cc.t, complex(*cc.z)
    exact = _formal_coefficients(spec, rays["sector_p"].freq, cc.n_max, t, z)
    fits = {}
    out = {"exact": exact[: cc.m_max + 1].tolist()}
    for name, d in (("p", geo.d_p), ("q", geo.d_q)):
        sol = SectorSolution(spec, rays[f"sector_{name}"], 0, d, 0.5 * cc.eps_lo * t, cc.eps_hi * t)
        eps = np.geomspace(cc.eps_lo, cc.eps_hi, cc.points) * complex(math.cos(d), math.sin(d))
        u = np.array([complex(sol(t, z, e)) for e in eps])
        fit = asymptotic_coefficients(eps, u, cc.n_max)
        thin_ok, thin_worst = thinning_stability(eps, u, cc.n_max, cc.m_max)
        fits[name] = fit
        zs = np.abs(fit.h[: cc.m_max + 1] - exact[: cc.m_max + 1]) / np.maximum(fit.se[: cc.m_max + 1], 1e-300)
        out[name] = {"arg_eps_deg": d / DEG, "h": fit.h[: cc.m_max + 1].tolist(),
                     "se": fit.se[: cc.m_max + 1].tolist(), "thinning_ok": thin_ok,
                     "thinning_worst_rel": thin_worst, "z_vs_exact": zs.tolist()}
    ok, worst = cross_sector_agreement(fits["p"], fits["q"], cc.m_max, cfg.tolerances.cross_factor)
    out["cross_sector_ok"] = ok
    out["cross_sector_worst_z"] = worst
    return out


def verify(cfg: RunConfig, out) -> dict:
    """Flatness ladder and fits, Gevrey fit, cross-sector coefficients, verdicts."""
    h = cfg.digest()
    ws = Workspace(out, h)
    run = ws.read_run()
    if "solve" not in run or run.get("config_hash") != h:
        raise StageError("verify", "no solve results for this configuration; run 'solve' first")
    geo = run_geometry(cfg)
    rays = _load_rays(cfg, geo, ws)
    tol = cfg.tolerances
    kap = float(kappa_of(cfg.problem.k, cfg.problem.kprime))
    res = {}
    ladder = flatness_ladder(cfg, geo, rays)
    ws.write_csv("ladders/flatness.csv", ["eps_abs", "sup_diff", "sup_diff_check", "rel_disagreement", "resolved"],
                 [[r["eps_abs"], r["sup_diff"], r["sup_diff_check"], r["rel_disagreement"], r["resolved"]]
                  for r in ladder])
    used = [(r["eps_abs"], r["sup_diff"]) for r in ladder if r["resolved"] and r["sup_diff"] > 0]
    try:
        fit = flatness_fit(used, kap, min_decades=tol.min_decades)
        res["flatness"] = {"fit": fit.to_dict(), "kappa_est": fit.exponent_est, "points_used": len(used),
                           "points_total": len(ladder),
                           "decades": math.log10(used[0][0] / used[-1][0]),
                           "ok": abs(fit.exponent_est - kap) <= tol.kappa_rel * kap}
        planted = planted_discrimination([e for e, _ in used], fit.pinned_K or 1.0, fit.pinned_M or 1.0,
                                         kap, tol.kappa_rel, tol.planted_noise, cfg.seed)
    except DataQualityError as exc:
        res["flatness"] = {"error": str(exc), "ok": False, "points_used": len(used), "points_total": len(ladder)}
        planted = {"separates": False, "error": "no fitted ladder"}
    res["planted"] = planted
    try:
        g = gevrey_stage(cfg, geo, rays)
    except (DataQualityError, ConditioningError) as exc:
        raise StageError("gevrey", str(exc)) from exc
    ws.write_csv("ladders/gevrey_remainders.csv", ["n", "eps_abs", "remainder", "resolved"], g.pop("rows"))
    ws.write_csv("ladders/gevrey_envelope.csv", ["n", "log_envelope"],
                 list(zip(g["report"]["n_values"], g["report"]["envelope"])))
    kf = res["flatness"].get("kappa_est")
    g["ok"] = kf is not None and math.isfinite(g["kappa_est"]) and abs(g["kappa_est"] - kf) <= tol.gevrey_rel * kf
    res["gevrey"] = g
    try:
        c = coefficient_stage(cfg, geo, rays)
    except (DataQualityError, ConditioningError) as exc:
        raise StageError("coefficients", str(exc)) from exc
    ws.write_csv("ladders/coefficients.csv", ["m", "exact_re", "exact_im", "h_p_re", "h_p_im", "se_p",
                                              "h_q_re", "h_q_im", "se_q"],
                 [[m, complex(c["exact"][m]).real, complex(c["exact"][m]).imag,
                   complex(c["p"]["h"][m]).real, complex(c["p"]["h"][m]).imag, c["p"]["se"][m],
                   complex(c["q"]["h"][m]).real, complex(c["q"]["h"][m]).imag, c["q"]["se"][m]]
                  for m in range(len(c["exact"]))])
    res["coefficients"] = c
    res["equivalence"] = equivalence_suite()
    run["verify"] = res
    run["verdicts"] = verdicts(cfg, run["solve"], res)
    ws.write_run(run)
    return run


def verdicts(cfg: RunConfig, solve_out: dict, ver: dict) -> list:
    """Pipeline-backed acceptance verdicts: (criterion, ok, detail)."""
    tol = cfg.tolerances
    con = solve_out["contraction"]
    main = {k: v for k, v in con.items() if k.startswith("sector") or k.startswith("ladder")}
    worst_ratio = max(v["max_ratio"] for v in main.values())
    worst_res = max(v["residual"] for v in main.values())
    ref = solve_out.get("refinement", {})
    ok4 = (worst_ratio <= tol.contraction_max and worst_res <= tol.residual_factor * tol.fp_tol
           and bool(ref.get("ok", False)))
    out = [("fixed point", ok4, f"max ratio {worst_ratio:.3f} <= {tol.contraction_max}; residual {worst_res:.2e}"
                                f" <= {tol.residual_factor * tol.fp_tol:.0e}; refinement {ref.get('worst', math.nan):.2e}"
                                f" <= {tol.refine_factor * tol.fp_tol:.0e}")]
    r = solve_out["residuals"]
    ok5 = all(v["rep_ok"] and v["fd_ok"] for v in r.values())
    out.append(("equation residual", ok5, "; ".join(
        f"sector {k}: {v['samples']} samples, max rel {v['max_rep_rel']:.1e} (fd {v['max_fd_rel']:.1e}), "
        f"t-operator fd error ratios {float(v['t_op_ratio_range'][0]):.2f}..{float(v['t_op_ratio_range'][1]):.2f}"
        for k, v in r.items())))
    f = ver["flatness"]
    kap = float(kappa_of(cfg.problem.k, cfg.problem.kprime))
    ok6 = bool(f.get("ok")) and f.get("decades", 0) >= tol.min_decades and bool(ver["planted"].get("separates"))
    out.append(("flatness exponent", ok6,
                f"kappa_est {f.get('kappa_est', float('nan')):.4f} vs {kap:.4f} (band {tol.kappa_rel:.0%}), "
                f"{f.get('points_used')}/{f.get('points_total')} points over {f.get('decades', 0):.2f} decades, "
                f"planted order one separated: {ver['planted'].get('separates')}"))
    g, c = ver["gevrey"], ver["coefficients"]
    eq = ver.get("equivalence", {"ok": False, "cases": []})
    ok7 = bool(c["cross_sector_ok"]) and bool(g["ok"]) and bool(eq["ok"])
    out.append(("gevrey consistency", ok7,
                f"cross-sector worst z {c['cross_sector_worst_z']:.2f} <= {tol.cross_factor}; gevrey kappa "
                f"{g['kappa_est']:.4f} vs flatness {f.get('kappa_est', float('nan')):.4f} (band {tol.gevrey_rel:.0%}); "
                f"planted-order checks {sum(x['ok'] for x in eq['cases'])}/{len(eq['cases'])}"))
    return [{"criterion": n, "ok": bool(o), "detail": d} for n, o, d in out]
