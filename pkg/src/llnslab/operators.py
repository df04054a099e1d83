"""Generator pieces acting on chaos kernels.

The generator of the truncated dynamics splits as L = L0 + A+ + A-,
where L0 is the Fourier Laplacian (diagonal), A+ raises the chaos degree
by one (it splits one leg into two across the cutoff indicator, applying
the divergence-free projection to both new legs) and A- lowers it (it
contracts two legs into one through a lattice convolution).  A- is minus
the adjoint of A+ in the n!-weighted scalar product, and both commute
with the momentum multipliers.

Everything here works on the sparse canonical representation and is kept
deliberately close to the defining formulas; `llnslab.fiber3` provides a
vectorised equivalent for the large d=3 runs.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Dict, Iterable, List, Tuple

import numpy as np

from .basis import leray_matrix
from .chaos import ChaosKernel, Leg, LegTuple, canonical
from .params import ModelParams, lattice_box

TWO_PI = 2.0 * math.pi


@lru_cache(maxsize=100_000)
def _leray(k: Tuple[int, ...]) -> np.ndarray:
    return leray_matrix(k)


@lru_cache(maxsize=32)
def _split_points(d: int, N: float, norm: str) -> np.ndarray:
    """Nonzero lattice points inside the cutoff, for leg splitting."""
    pts = lattice_box(d, int(math.floor(N)))
    if norm == "sup":
        keep = np.max(np.abs(pts), axis=1) <= N
    else:
        keep = np.sum(pts * pts, axis=1) <= N * N
    return pts[keep]


def l0_weight(legs: LegTuple) -> float:
    """Eigenvalue of -L0 on the tuple: (2 pi)^2 sum |k_i|^2."""
    return TWO_PI ** 2 * float(sum(c * c for k, _ in legs for c in k))


def apply_L0_power(f: ChaosKernel, s: float) -> ChaosKernel:
    """Multiply by ((2 pi)^2 sum |k_i|^2)**s; s=1 is -L0."""
    if s == 0:
        return f
    return f.map_coeff(lambda legs, v: v * l0_weight(legs) ** s)


def apply_momentum(f: ChaosKernel, axis: int) -> ChaosKernel:
    """Multiply by the total momentum component sum_j k_j[axis]."""
    return f.map_coeff(
        lambda legs, v: v * sum(k[axis] for k, _ in legs))


def apply_number(f: ChaosKernel) -> ChaosKernel:
    return f * float(f.n)


def apply_Aplus(f: ChaosKernel, p: ModelParams) -> ChaosKernel:
    """Degree-raising part: split one leg across the triple cutoff.

    Output value at an ordered tuple (k_1..k_{n+1}, l_1..l_{n+1}):

        lamN * 2 pi i / (n+1) * sum over ordered slot pairs (i, j) of
        R^N(k_i, k_j) [P(k_i)(k_i+k_j)]_{l_i}
        [P(k_j) f((., k_i+k_j), rest)]_{l_j}

    evaluated verbatim at canonical representatives."""
    n = f.n
    out = ChaosKernel.zero(f.d, n + 1, f.momentum)
    if n == 0 or not f.data or p.lam == 0:
        return out
    d = f.d
    pts = _split_points(d, p.N, p.mollifier_norm)

    # distinct (merged leg wavevector, remaining legs) in the support
    groups = set()
    for legs in f.data:
        for s_ in range(n):
            groups.add((legs[s_][0], legs[:s_] + legs[s_ + 1:]))

    candidates = set()
    for m, rest in groups:
        mv = np.asarray(m)
        if not p.in_cutoff(mv):
            continue
        qs = mv[None, :] - pts
        ok = p.in_cutoff(qs) & np.any(qs != 0, axis=1)
        for pvec, qvec in zip(pts[ok], qs[ok]):
            kp, kq = tuple(int(c) for c in pvec), tuple(int(c) for c in qvec)
            for li in range(d):
                for lj in range(d):
                    candidates.add(canonical(((kp, li), (kq, lj)) + rest))

    pref = p.lambda_N * TWO_PI * 1j / (n + 1)
    for legs in candidates:
        acc = 0j
        for i in range(n + 1):
            ki, li = legs[i]
            Pi = _leray(ki)
            for j in range(n + 1):
                if j == i:
                    continue
                kj, lj = legs[j]
                m = tuple(a + b for a, b in zip(ki, kj))
                if not (p.mollifier(ki, kj) and any(m)):
                    continue
                rest = tuple(leg for t, leg in enumerate(legs) if t not in (i, j))
                Pj = _leray(kj)
                vec = 0j
                for c in range(d):
                    if Pj[lj, c] != 0.0:
                        fv = f.value(((m, c),) + rest)
                        if fv:
                            vec += Pj[lj, c] * fv
                if vec:
                    acc += (Pi[li] @ np.asarray(m, dtype=float)) * vec
        if acc:
            out.data[legs] = pref * acc
    return out


def apply_Aminus(f: ChaosKernel, p: ModelParams) -> ChaosKernel:
    """Degree-lowering part: contract two legs into their sum.

    Output value at (k_1..k_{n-1}, l_1..l_{n-1}):

        lamN * 2 pi i * n * sum_j sum_{p+q=k_j} R^N(p, q)
        sum_{i,t} k_j[i] P(k_j)[l_j, t] f((t, p), (i, q), rest)

    with the lattice convolution restricted to the support of f."""
    n = f.n
    out = ChaosKernel.zero(f.d, n - 1 if n >= 1 else 0, f.momentum)
    if n < 2 or not f.data or p.lam == 0:
        return out
    d = f.d

    # emission map: (rest, p+q) -> {(p, t, q, i): f value}
    emis: Dict[Tuple[LegTuple, Tuple[int, ...]], Dict[Tuple, complex]] = {}
    for legs, v in f.data.items():
        for s1 in range(n):
            for s2 in range(n):
                if s1 == s2:
                    continue
                (kp, t), (kq, i) = legs[s1], legs[s2]
                kj = tuple(a + b for a, b in zip(kp, kq))
                if not any(kj):
                    continue
                rest = tuple(leg for u, leg in enumerate(legs) if u not in (s1, s2))
                emis.setdefault((rest, kj), {})[(kp, t, kq, i)] = v

    candidates = set()
    for (rest, kj) in emis:
        for lj in range(d):
            candidates.add(canonical(rest + ((kj, lj),)))

    pref = p.lambda_N * TWO_PI * 1j * n
    for legs in candidates:
        acc = 0j
        for j in range(n - 1):
            kj, lj = legs[j]
            rest = legs[:j] + legs[j + 1:]
            group = emis.get((rest, kj))
            if not group:
                continue
            Pj = _leray(kj)
            for (kp, t, kq, i), v in group.items():
                if Pj[lj, t] == 0.0 or kj[i] == 0:
                    continue
                if p.mollifier(kp, kq):
                    acc += kj[i] * Pj[lj, t] * v
        if acc:
            out.data[legs] = pref * acc
    return out


def apply_A(f: ChaosKernel, p: ModelParams):
    """Both halves: (A+ f, A- f)."""
    return apply_Aplus(f, p), apply_Aminus(f, p)


def apply_T(sign: int, f: ChaosKernel, p: ModelParams) -> ChaosKernel:
    """(-L0)^{-1/2} A_sign (-L0)^{-1/2}."""
    g = apply_L0_power(f, -0.5)
    g = apply_Aplus(g, p) if sign > 0 else apply_Aminus(g, p)
    return apply_L0_power(g, -0.5)
