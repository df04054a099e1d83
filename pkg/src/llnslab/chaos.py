"""Sparse symmetric tensor coefficients on the divergence-free Fourier modes.

A degree-n element is a symmetric function of n legs, each leg a pair
(wavevector k in Z^d minus 0, component index l in 0..d-1).  We store one
complex amplitude per canonical (sorted) leg tuple; the value at any
ordering of the legs is the stored one.  The scalar product carries the
n! weight of the chaos decomposition,

    <f, g> = n! * sum over all ordered leg tuples of conj(f) * g,

evaluated from canonical storage with multiplicity bookkeeping.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from .basis import frame

# one leg: (k, l) with k a tuple of ints; sorting legs lexicographically
# on (k, l) yields the canonical ordering
Leg = Tuple[Tuple[int, ...], int]
LegTuple = Tuple[Leg, ...]


def canonical(legs: Iterable[Leg]) -> LegTuple:
    return tuple(sorted(legs))


def multiplicity(legs: LegTuple) -> int:
    """Number of distinct orderings of the leg multiset."""
    m = math.factorial(len(legs))
    for c in Counter(legs).values():
        m //= math.factorial(c)
    return m


class ChaosKernel:
    """Degree-n symmetric coefficient table over (k, l) leg tuples."""

    __slots__ = ("d", "n", "data", "momentum")

    def __init__(self, d: int, n: int,
                 data: Optional[Dict[LegTuple, complex]] = None,
                 momentum: Optional[Tuple[int, ...]] = None):
        self.d = d
        self.n = n
        self.data: Dict[LegTuple, complex] = data if data is not None else {}
        self.momentum = momentum

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls, d: int, n: int, momentum=None) -> "ChaosKernel":
        return cls(d, n, {}, momentum)

    @classmethod
    def sigma(cls, k, alpha: int, d: Optional[int] = None,
              convention: str = "canonical") -> "ChaosKernel":
        """Degree-1 basis element: coefficient a_{k,alpha}^l at leg (k, l)."""
        k = tuple(int(c) for c in k)
        d = d or len(k)
        if not 0 <= alpha < d - 1:
            raise ValueError(f"frame index {alpha} out of range for d={d}")
        a = frame(k, convention)[alpha]
        data = {((k, l),): complex(a[l]) for l in range(d) if a[l] != 0.0}
        return cls(d, 1, data, momentum=k)

    @classmethod
    def from_entries(cls, d: int, n: int,
                     entries: Iterable[Tuple[Iterable[Leg], complex]],
                     momentum=None) -> "ChaosKernel":
        """Build from (leg tuple, value) pairs of an already-symmetric
        function; values assigned to the same orbit accumulate."""
        data: Dict[LegTuple, complex] = {}
        for legs, v in entries:
            key = canonical(legs)
            data[key] = data.get(key, 0j) + complex(v)
        return cls(d, n, data, momentum)

    # -- elementwise algebra ----------------------------------------------
    def copy(self) -> "ChaosKernel":
        return ChaosKernel(self.d, self.n, dict(self.data), self.momentum)

    def __add__(self, other: "ChaosKernel") -> "ChaosKernel":
        self._compat(other)
        data = dict(self.data)
        for key, v in other.data.items():
            data[key] = data.get(key, 0j) + v
        mom = self.momentum if self.momentum == other.momentum else None
        return ChaosKernel(self.d, self.n, data, mom)

    def __sub__(self, other: "ChaosKernel") -> "ChaosKernel":
        return self + (other * (-1.0))

    def __mul__(self, scalar) -> "ChaosKernel":
        return ChaosKernel(self.d, self.n,
                           {k: v * scalar for k, v in self.data.items()},
                           self.momentum)

    __rmul__ = __mul__

    def map_coeff(self, fn) -> "ChaosKernel":
        """New kernel with values fn(legs, value); fn must not move support."""
        return ChaosKernel(self.d, self.n,
                           {k: fn(k, v) for k, v in self.data.items()},
                           self.momentum)

    def prune(self, floor: float) -> "ChaosKernel":
        """Drop entries with |value| <= floor * max|value|."""
        if not self.data:
            return self
        cut = floor * max(abs(v) for v in self.data.values())
        return ChaosKernel(self.d, self.n,
                           {k: v for k, v in self.data.items() if abs(v) > cut},
                           self.momentum)

    def _compat(self, other: "ChaosKernel"):
        if self.d != other.d:
            raise ValueError("dimension mismatch")
        if self.n != other.n:
            raise ValueError("degree mismatch")

    def value(self, legs: Iterable[Leg]) -> complex:
        """Value of the symmetric function at any ordering of `legs`."""
        return self.data.get(canonical(legs), 0j)

    def __len__(self) -> int:
        return len(self.data)

    # -- scalar product ----------------------------------------------------
    def inner(self, other: "ChaosKernel") -> complex:
        """n!-weighted scalar product; kernels of unequal degree pair to 0."""
        if self.d != other.d:
            raise ValueError("dimension mismatch")
        if self.n != other.n:
            return 0j
        small, big = (self, other) if len(self.data) <= len(other.data) else (other, self)
        acc = 0j
        for key, v in small.data.items():
            w = big.data.get(key)
            if w is None:
                continue
            sv, bv = (v, w) if small is self else (w, v)
            acc += multiplicity(key) * np.conj(sv) * bv
        return math.factorial(self.n) * acc

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self).real, 0.0))

    # -- invariants --------------------------------------------------------
    def total_momentum(self, legs: LegTuple) -> Tuple[int, ...]:
        return tuple(int(s) for s in np.sum([leg[0] for leg in legs], axis=0))

    def check_momentum(self) -> bool:
        if self.momentum is None:
            return True
        return all(self.total_momentum(legs) == tuple(self.momentum)
                   for legs in self.data)

    def divergence_defect(self) -> float:
        """Largest per-leg divergence residual, relative to the kernel scale.

        For every stored tuple and slot j the contraction
        sum_l k_j^l f(..., (k_j, l), ...) must vanish."""
        if not self.data:
            return 0.0
        scale = max(abs(v) for v in self.data.values())
        worst = 0.0
        seen = set()
        for legs in self.data:
            for j in range(self.n):
                others = legs[:j] + legs[j + 1:]
                kj = legs[j][0]
                sig = (others, kj)
                if sig in seen:
                    continue
                seen.add(sig)
                s = 0j
                for l in range(self.d):
                    s += kj[l] * self.value(others + ((kj, l),))
                kn = math.sqrt(sum(c * c for c in kj))
                worst = max(worst, abs(s) / (kn * scale))
        return worst

    # -- symmetric products --------------------------------------------
    def sym_product(self, other: "ChaosKernel") -> "ChaosKernel":
        """Symmetrised tensor product of two symmetric kernels.

        Value at a canonical tuple C of degree m+p is the average of
        f(C_S) g(C_{S^c}) over the binom(m+p, m) position subsets S,
        collapsed over identical legs."""
        if self.d != other.d:
            raise ValueError("dimension mismatch")
        m, p = self.n, other.n
        out: Dict[LegTuple, complex] = {}
        total = math.comb(m + p, m)
        for lf, vf in self.data.items():
            for lg, vg in other.data.items():
                key = canonical(lf + lg)
                if key in out:
                    continue
                out[key] = _sym_value(self, other, key, total)
        mom = None
        if self.momentum is not None and other.momentum is not None:
            mom = tuple(int(a + b) for a, b in zip(self.momentum, other.momentum))
        return ChaosKernel(self.d, m + p, {k: v for k, v in out.items() if v != 0},
                           mom)

    # -- snapshot ------------------------------------------------------
    def to_csv(self, path, meta: Optional[dict] = None):
        """One record per canonical tuple; JSON header line with metadata.

        Values round-trip exactly through repr (shortest decimal)."""
        head = {"d": self.d, "n": self.n,
                "K": list(self.momentum) if self.momentum is not None else None}
        if meta:
            head.update(meta)
        with open(path, "w") as fh:
            fh.write(json.dumps(head, sort_keys=True) + "\n")
            fh.write("degree,d,tuple,re,im\n")
            for legs in sorted(self.data):
                v = self.data[legs]
                spec = "|".join(f"{l}:" + " ".join(str(c) for c in k)
                                for (k, l) in legs)
                fh.write(f"{self.n},{self.d},{spec},{v.real!r},{v.imag!r}\n")

    @classmethod
    def from_csv(cls, path) -> Tuple["ChaosKernel", dict]:
        with open(path) as fh:
            head = json.loads(fh.readline())
            fh.readline()  # column names
            data: Dict[LegTuple, complex] = {}
            for line in fh:
                deg, d, spec, re, im = line.rstrip("\n").split(",")
                legs = []
                for leg in spec.split("|"):
                    l, ks = leg.split(":")
                    legs.append((tuple(int(c) for c in ks.split()), int(l)))
                data[tuple(legs)] = complex(float(re), float(im))
        mom = tuple(head["K"]) if head.get("K") is not None else None
        kern = cls(head["d"], head["n"], data, mom)
        return kern, head


def _sym_value(f: ChaosKernel, g: ChaosKernel, key: LegTuple, total: int) -> complex:
    m = f.n
    acc = 0j
    counts = Counter(key)
    uniq = sorted(counts)
    for sub in _sub_multisets(uniq, counts, m):
        ways = 1
        subc = Counter(sub)
        rest = []
        for leg in uniq:
            ways *= math.comb(counts[leg], subc.get(leg, 0))
            rest.extend([leg] * (counts[leg] - subc.get(leg, 0)))
        vf = f.data.get(tuple(sub))
        if not vf:
            continue
        vg = g.data.get(tuple(rest))
        if not vg:
            continue
        acc += ways * vf * vg
    return acc / total


def _sub_multisets(uniq, counts, m):
    """Distinct size-m sub-multisets (as sorted tuples) of the multiset."""
    def rec(i, remaining):
        if remaining == 0:
            yield []
            return
        if i == len(uniq):
            return
        leg = uniq[i]
        top = min(counts[leg], remaining)
        for take in range(top, -1, -1):
            for tail in rec(i + 1, remaining - take):
                yield [leg] * take + tail
    for combo in rec(0, m):
        yield sorted(combo)


def sym_pair(f: ChaosKernel, g: ChaosKernel) -> ChaosKernel:
    """Symmetrised pair [f (x) g]_sym of two degree-1 kernels."""
    if f.n != 1 or g.n != 1:
        raise ValueError("sym_pair takes degree-1 kernels")
    return f.sym_product(g)


def sigma_kernel(k, alpha: int, d: Optional[int] = None,
                 convention: str = "canonical") -> ChaosKernel:
    """Alias of ChaosKernel.sigma."""
    return ChaosKernel.sigma(k, alpha, d, convention)
