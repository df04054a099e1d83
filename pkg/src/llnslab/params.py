"""Model parameters, coupling schedule and Fourier cutoff conventions.

The regularised dynamics is controlled by a dimension d, a coupling
strength lambda, a cutoff scale N and a chaos truncation degree n.  The
attenuated coupling is ``lambda/sqrt(log N)`` in d=2 and
``lambda*N**(1-d/2)`` in d>=3.  The convective term is regularised by a
product of three sharp Fourier cutoffs; the cutoff ball is Euclidean in
d=2 and, by default, a sup-norm box in d>=3 (with half-integer N so no
lattice point sits on the boundary).

The limiting constants of the d=3 expansion are exact for the Euclidean
ball cutoff; the constant-computing routines therefore accept an explicit
``mollifier_norm`` override (see `llnslab.diffusivity`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EUCLID = "euclid"
SUP = "sup"


def default_norm(d: int) -> str:
    return EUCLID if d == 2 else SUP


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the truncated dynamics and its Fock-space generator.

    d               spatial dimension, 2 or 3
    lam             bare coupling strength, >= 0
    N               cutoff scale; integer >= 2 for d=2, half-integer for d>=3
    n               chaos truncation degree, >= 2
    mollifier_norm  'euclid' or 'sup'; the norm used in the cutoff indicator
    """

    d: int
    lam: float
    N: float
    n: int = 2
    mollifier_norm: str = field(default="")

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension d={self.d} not supported (need 2 or 3)")
        if self.lam < 0:
            raise ValueError("coupling lam must be >= 0")
        if self.n < 2:
            raise ValueError("chaos truncation degree n must be >= 2")
        if self.d == 2:
            if self.N != int(self.N) or self.N < 2:
                raise ValueError("d=2 requires integer N >= 2")
        else:
            if (2 * self.N) != int(2 * self.N) or self.N == int(self.N) or self.N <= 0:
                raise ValueError("d>=3 requires half-integer N (e.g. 2.5, 8.5)")
        if not self.mollifier_norm:
            object.__setattr__(self, "mollifier_norm", default_norm(self.d))
        if self.mollifier_norm not in (EUCLID, SUP):
            raise ValueError(f"unknown mollifier norm {self.mollifier_norm!r}")

    @property
    def lambda_N(self) -> float:
        """Attenuated coupling at scale N."""
        return self.lam * coupling_attenuation(self.d, self.N)

    @property
    def box_radius(self) -> int:
        """Largest integer coordinate a cutoff-respecting mode can have."""
        return int(math.floor(self.N))

    def in_cutoff(self, k) -> np.ndarray:
        """Indicator of ||k|| <= N for the configured norm; k is (..., d)."""
        k = np.asarray(k)
        if self.mollifier_norm == SUP:
            return np.max(np.abs(k), axis=-1) <= self.N
        return np.sum(k * k, axis=-1) <= self.N * self.N

    def mollifier(self, k1, k2) -> np.ndarray:
        """Triple cutoff indicator on (k1, k2, k1+k2)."""
        k1 = np.asarray(k1)
        k2 = np.asarray(k2)
        return self.in_cutoff(k1) & self.in_cutoff(k2) & self.in_cutoff(k1 + k2)

    def with_(self, **kw) -> "ModelParams":
        data = {
            "d": self.d, "lam": self.lam, "N": self.N, "n": self.n,
            "mollifier_norm": self.mollifier_norm,
        }
        data.update(kw)
        return ModelParams(**data)


def coupling_attenuation(d: int, N: float) -> float:
    """lambda_N / lambda: 1/sqrt(log N) in d=2, N**(1-d/2) in d>=3."""
    if d == 2:
        if N < 2:
            raise ValueError("d=2 attenuation needs N >= 2")
        return 1.0 / math.sqrt(math.log(N))
    return float(N) ** (1.0 - d / 2.0)


@dataclass(frozen=True)
class CouplingSchedule:
    """The map N -> lambda_N for fixed d and lambda."""

    d: int
    lam: float

    def __call__(self, N: float) -> float:
        return self.lam * coupling_attenuation(self.d, N)


def lattice_box(d: int, radius: int, include_zero: bool = False) -> np.ndarray:
    """All integer vectors with sup-norm <= radius, shape (count, d)."""
    r = np.arange(-radius, radius + 1)
    pts = np.stack(np.meshgrid(*([r] * d), indexing="ij"), axis=-1).reshape(-1, d)
    if not include_zero:
        pts = pts[np.any(pts != 0, axis=1)]
    return pts
