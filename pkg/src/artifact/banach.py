"""Sampled symbols on rays and the weighted sup-norms they are measured in.

Every norm here is a supremum over grid nodes, hence a lower bound for the
true supremum; reports label them as empirical.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "RadialGrid",
    "FreqGrid",
    "SampledSymbol",
    "NormParams",
    "norm_E_beta_mu",
    "norm_weighted",
]


@dataclass(frozen=True)
class RadialGrid:
    """Composite Gauss-Legendre nodes on panels [b_j, b_{j+1}] of [0, R].

    Values at the nodes determine a piecewise polynomial (degree n-1 per
    panel) evaluated by barycentric interpolation, which keeps every operator
    built on top of it linear in the data.
    """

    breakpoints: tuple
    n: int = 16

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        if b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        object.__setattr__(self, "breakpoints", tuple(float(x) for x in b))

    @classmethod
    def graded(cls, r_max: float, h_fine: float, fine_until: float, growth: float = 1.25,
               h_max: float = 2.0, n: int = 16) -> "RadialGrid":
        """Uniform panels of width ``h_fine`` up to ``fine_until``, then widths
        growing geometrically by ``growth`` (capped at ``h_max``) up to ``r_max``."""
        b = [0.0]
        h = h_fine
        while b[-1] < r_max - 1e-12:
            if b[-1] >= fine_until:
                h = min(h * growth, h_max)
            b.append(min(b[-1] + h, r_max) if r_max - (b[-1] + h) > 0.3 * h else r_max)
        return cls(tuple(b), n)

    @cached_property
    def _ref(self):
        x, w = leggauss(self.n)
        # barycentric weights for Legendre points
        bw = np.array([1.0 / np.prod(x[i] - np.delete(x, i)) for i in range(self.n)])
        bw /= np.max(np.abs(bw))
        return x, w, bw

    @property
    def r_max(self) -> float:
        return self.breakpoints[-1]

    @property
    def n_panels(self) -> int:
        return len(self.breakpoints) - 1

    @cached_property
    def nodes(self) -> np.ndarray:
        x, _, _ = self._ref
        b = np.asarray(self.breakpoints)
        lo, hi = b[:-1, None], b[1:, None]
        return (0.5 * (lo + hi) + 0.5 * (hi - lo) * x[None, :]).ravel()

    @cached_property
    def weights(self) -> np.ndarray:
        _, w, _ = self._ref
        b = np.asarray(self.breakpoints)
        return (0.5 * (b[1:] - b[:-1])[:, None] * w[None, :]).ravel()

    @property
    def size(self) -> int:
        return self.n * self.n_panels

    def panel_width_at(self, r):
        b = np.asarray(self.breakpoints)
        j = np.clip(np.searchsorted(b, r, side="right") - 1, 0, self.n_panels - 1)
        return b[j + 1] - b[j]

    def interp_matrix(self, rho) -> np.ndarray:
        """Dense (len(rho), size) matrix of interpolation weights."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if np.any(rho < 0) or np.any(rho > self.r_max * (1 + 1e-12)):
            raise ValueError(f"radius outside the grid range [0, {self.r_max}]")
        x, _, bw = self._ref
        b = np.asarray(self.breakpoints)
        j = np.clip(np.searchsorted(b, rho, side="right") - 1, 0, self.n_panels - 1)
        lo, hi = b[j], b[j + 1]
        t = (2.0 * rho - lo - hi) / (hi - lo)
        diff = t[:, None] - x[None, :]
        exact = np.isclose(diff, 0.0, atol=1e-15)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = bw[None, :] / diff
            c = c / c.sum(axis=1, keepdims=True)
        rows = np.where(exact.any(axis=1))[0]
        c[rows] = exact[rows].astype(float)
        out = np.zeros((rho.size, self.size))
        cols = j[:, None] * self.n + np.arange(self.n)[None, :]
        np.put_along_axis(out, cols, c, axis=1)
        return out

    def refined(self) -> "RadialGrid":
        """Every panel split in two (halves the node spacing)."""
        b = np.asarray(self.breakpoints)
        mids = 0.5 * (b[1:] + b[:-1])
        nb = np.empty(2 * b.size - 1)
        nb[0::2] = b
        nb[1::2] = mids
        return RadialGrid(tuple(nb), self.n)

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "n": self.n}


@dataclass(frozen=True)
class FreqGrid:
    """Uniform frequency grid m_j = j h, |j| <= J, with trapezoid weights."""

    h: float
    J: int

    @classmethod
    def for_decay(cls, beta: float, h: float, floor: float = 1e-12) -> "FreqGrid":
        m_max = math.log(1.0 / floor) / beta
        return cls(h, int(math.ceil(m_max / h)))

    @cached_property
    def m(self) -> np.ndarray:
        return self.h * np.arange(-self.J, self.J + 1)

    @property
    def size(self) -> int:
        return 2 * self.J + 1

    @property
    def m_max(self) -> float:
        return self.h * self.J


@dataclass
class SampledSymbol:
    """Values h(r e^{i theta}, m) on rays x radial nodes x frequencies."""

    directions: np.ndarray
    grid: RadialGrid
    freq: FreqGrid
    values: np.ndarray
    domain_tag: str = "disc+sector"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.directions = np.atleast_1d(np.asarray(self.directions, dtype=float))
        self.values = np.asarray(self.values, dtype=complex)
        shape = (self.directions.size, self.grid.size, self.freq.size)
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} != {shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("symbol values must be finite")

    @classmethod
    def zeros(cls, directions, grid: RadialGrid, freq: FreqGrid, **kw) -> "SampledSymbol":
        d = np.atleast_1d(np.asarray(directions, dtype=float))
        return cls(d, grid, freq, np.zeros((d.size, grid.size, freq.size), complex), **kw)

    def points(self, i: int) -> np.ndarray:
        return self.grid.nodes * np.exp(1j * self.directions[i])

    def with_values(self, values) -> "SampledSymbol":
        return SampledSymbol(self.directions, self.grid, self.freq, values, self.domain_tag, dict(self.meta))

    def __sub__(self, other: "SampledSymbol") -> "SampledSymbol":
        return self.with_values(self.values - other.values)

    def __add__(self, other: "SampledSymbol") -> "SampledSymbol":
        return self.with_values(self.values + other.values)

    def __mul__(self, c) -> "SampledSymbol":
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def evaluate(self, i: int, rho) -> np.ndarray:
        """Interpolated values at radii ``rho`` on ray ``i``, shape (len(rho), M)."""
        return self.grid.interp_matrix(rho) @ self.values[i]

    # serialization -------------------------------------------------------
    def save(self, path) -> None:
        header = {
            "directions": self.directions.tolist(),
            "grid": self.grid.to_dict(),
            "freq": {"h": self.freq.h, "J": self.freq.J},
            "domain_tag": self.domain_tag,
            "meta": self.meta,
        }
        with open(path, "wb") as fh:
            np.savez(fh, values=self.values, header=np.array(json.dumps(header)))

    @classmethod
    def load(cls, path) -> "SampledSymbol":
        with open(path, "rb") as fh:
            data = np.load(io.BytesIO(fh.read()), allow_pickle=False)
            header = json.loads(str(data["header"]))
            values = data["values"]
        grid = RadialGrid(tuple(header["grid"]["breakpoints"]), header["grid"]["n"])
        freq = FreqGrid(header["freq"]["h"], header["freq"]["J"])
        return cls(np.asarray(header["directions"]), grid, freq, values, header["domain_tag"], header["meta"])


@dataclass(frozen=True)
class NormParams:
    """Weights of the norm sup (1+|m|)^mu e^{beta|m| - nu |u|^order} |h| / |u|."""

    nu: float
    beta: float
    mu: float
    growth_order: float

    def __post_init__(self):
        if self.nu <= 0 or self.beta <= 0 or self.growth_order <= 0:
            raise ValueError("nu, beta and growth_order must be > 0")


def _freq_weight(m, beta, mu):
    m = np.abs(np.asarray(m, dtype=float))
    return (1.0 + m) ** mu * np.exp(beta * m)


def norm_E_beta_mu(f, m, beta: float, mu: float) -> float:
    """Grid supremum of (1+|m|)^mu e^{beta|m|} |f(m)|."""
    f = np.asarray(f)
    if f.size == 0:
        raise ValueError("empty grid")
    return float(np.max(_freq_weight(m, beta, mu) * np.abs(f)))


def norm_weighted(sym: SampledSymbol, p: NormParams) -> float:
    """Grid supremum of (1+|m|)^mu e^{beta|m| - nu r^order} |h| / r (r > 0 nodes only)."""
    r = sym.grid.nodes
    keep = r > 0
    rw = np.exp(-p.nu * r[keep] ** p.growth_order) / r[keep]
    mw = _freq_weight(sym.freq.m, p.beta, p.mu)
    vals = np.abs(sym.values[:, keep, :]) * rw[None, :, None] * mw[None, None, :]
    return float(np.max(vals)) if vals.size else 0.0
