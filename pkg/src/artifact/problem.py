"""Problem description shared by every stage of the pipeline."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = ["Polynomial", "ProblemSpec", "worked_example_problem"]


@dataclass(frozen=True)
class Polynomial:
    """Complex polynomial sum c_j X^j, coefficients in increasing degree."""

    coeffs: tuple

    def __post_init__(self):
        c = [complex(x) for x in self.coeffs]
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        if not c:
            c = [0j]
        object.__setattr__(self, "coeffs", tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1 if any(self.coeffs) else -1

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        acc = np.zeros_like(x)
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc if acc.ndim else complex(acc)

    def at_im(self, m):
        """Symbol value at X = i m (Fourier side of d/dz)."""
        return self(1j * np.asarray(m, dtype=float))

    def to_list(self) -> list:
        return [[c.real, c.imag] for c in self.coeffs]

    @classmethod
    def from_list(cls, data: Sequence) -> "Polynomial":
        out = []
        for c in data:
            if isinstance(c, (list, tuple)):
                out.append(complex(c[0], c[1]))
            else:
                out.append(complex(c))
        return cls(tuple(out))


@dataclass(frozen=True)
class ProblemSpec:
    """All structural data of the singularly perturbed equation.

    ``I`` lists the pairs (l1, l2) of the lower order terms; ``Delta``,
    ``R_l`` and ``c_l`` are aligned with it.  ``c_l`` holds the scalar size of
    each coefficient profile (see :mod:`artifact.fixedpoint`).
    """

    k: int
    kprime: int
    delta_D: int
    m_D: int
    k1: int
    I: tuple = ()
    Delta: tuple = ()
    Q: Polynomial = Polynomial((1.0,))
    R_D: Polynomial = Polynomial((1.0,))
    R_l: tuple = ()
    c_l: tuple = ()
    beta: float = 1.0
    mu: float = 3.0
    epsilon0: float = 1.0
    K0: float = 1.0
    T0: float = 1.0
    profile_kind: str = "smooth"
    forcing_rate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "I", tuple(tuple(int(v) for v in l) for l in self.I))
        object.__setattr__(self, "Delta", tuple(int(d) for d in self.Delta))
        object.__setattr__(self, "R_l", tuple(self.R_l))
        object.__setattr__(self, "c_l", tuple(float(c) for c in self.c_l))
        n = len(self.I)
        if not (len(self.Delta) == len(self.R_l) == len(self.c_l) == n):
            raise ValueError("I, Delta, R_l and c_l must have equal length")
        if self.forcing_rate is not None and self.forcing_rate < self.T0:
            raise ValueError("forcing_rate must be >= T0 so that |psi_n| <= K0 T0^-n")

    @property
    def forcing_T(self) -> float:
        """Radius T_f of the forcing modes psi_n = K0 T_f^-n (defaults to T0)."""
        return self.T0 if self.forcing_rate is None else float(self.forcing_rate)

    # derived growth orders ------------------------------------------------
    @property
    def kappa1(self) -> Fraction:
        inv = Fraction(1, self.k1) - Fraction(1, self.kprime)
        if inv <= 0:
            raise ValueError("need k1 < k'")
        return 1 / inv

    @property
    def kappa2(self) -> Fraction | None:
        """1/kappa2 = 1/kappa1 - 1/k, or None when kappa1 = k (convergent case)."""
        inv = 1 / self.kappa1 - Fraction(1, self.k)
        return None if inv <= 0 else 1 / inv

    @property
    def kappa(self) -> Fraction:
        return Fraction(self.k * self.kprime, self.k + self.kprime)

    @property
    def nu2(self) -> float:
        return (1.0 / self.T0) ** self.k1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["Q"] = self.Q.to_list()
        d["R_D"] = self.R_D.to_list()
        d["R_l"] = [p.to_list() for p in self.R_l]
        d["I"] = [list(l) for l in self.I]
        d["Delta"] = list(self.Delta)
        d["c_l"] = list(self.c_l)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        d = dict(d)
        d["Q"] = Polynomial.from_list(d["Q"])
        d["R_D"] = Polynomial.from_list(d["R_D"])
        d["R_l"] = tuple(Polynomial.from_list(p) for p in d.get("R_l", []))
        d["I"] = tuple(tuple(l) for l in d.get("I", []))
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def worked_example_problem(r: float = 72.0, c: float = 0.05, K0: float = 1.0, T0: float = 0.25,
                     beta: float = 1.0, mu: float = 3.0, epsilon0: float = 2.4,
                     forcing_rate: float | None = 1.0) -> ProblemSpec:
    """The k = 3, k' = 2 worked configuration (kappa = 6/5).

    Q = r (X^2 - 1) and R_D = 1 - X^2, so Q(im)/R_D(im) = -r for every m and
    the six roots of P_m(u) sit on the rays pi/6 + l pi/3 at modulus
    (r/72)^(1/6).  R_(1,1) = X, R_(1,0) = 1.  The forcing modes decay like
    ``forcing_rate^-n`` while the norm uses the smaller radius ``T0``.
    """
    return ProblemSpec(
        k=3, kprime=2, delta_D=2, m_D=3, k1=1,
        I=((1, 1), (1, 0)), Delta=(3, 3),
        Q=Polynomial((-r, 0.0, r)),
        R_D=Polynomial((1.0, 0.0, -1.0)),
        R_l=(Polynomial((0.0, 1.0)), Polynomial((1.0,))),
        c_l=(c, c),
        beta=beta, mu=mu, epsilon0=epsilon0, K0=K0, T0=T0, forcing_rate=forcing_rate,
    )
