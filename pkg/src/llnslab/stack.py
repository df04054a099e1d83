"""Degree-graded kernel stacks and the truncated resolvent solve.

The truncated generator acts on the direct sum of chaos degrees 2..n.
Solving  (-L0 - A_{2,n}) v = rhs  uses the preconditioned fixed point

    v  <-  (-L0)^{-1} (rhs + A_{2,n} v),

accelerated with bounded-depth Anderson mixing.  Because A is
skew-Hermitian, the preconditioned map is a contraction whenever the
weighted operator norm of A is below one, which holds for every desk
scale coupling used here; the solver still guards against divergence and
reports the reached residual when the iteration budget runs out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .chaos import ChaosKernel
from .operators import apply_Aminus, apply_Aplus, apply_L0_power
from .params import ModelParams


class ResolventError(RuntimeError):
    """Iteration budget exhausted or divergence; carries the residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} "
                         f"after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass
class KernelStack:
    """A finite direct sum of chaos kernels, indexed by degree."""

    d: int
    kernels: Dict[int, ChaosKernel] = field(default_factory=dict)

    def degrees(self):
        return sorted(self.kernels)

    def get(self, n: int) -> ChaosKernel:
        return self.kernels.get(n, ChaosKernel.zero(self.d, n))

    def __add__(self, other: "KernelStack") -> "KernelStack":
        out = KernelStack(self.d, dict(self.kernels))
        for n, k in other.kernels.items():
            out.kernels[n] = out.kernels[n] + k if n in out.kernels else k
        return out

    def __sub__(self, other: "KernelStack") -> "KernelStack":
        return self + other.scale(-1.0)

    def scale(self, a) -> "KernelStack":
        return KernelStack(self.d, {n: k * a for n, k in self.kernels.items()})

    def inner(self, other: "KernelStack") -> complex:
        acc = 0j
        for n, k in self.kernels.items():
            if n in other.kernels:
                acc += k.inner(other.kernels[n])
        return acc

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self).real, 0.0))

    def map(self, fn) -> "KernelStack":
        return KernelStack(self.d, {n: fn(k) for n, k in self.kernels.items()})


def apply_A_projected(v: KernelStack, p: ModelParams,
                      dmin: int, dmax: int) -> KernelStack:
    """P_{dmin,dmax} (A+ + A-) P_{dmin,dmax} v."""
    out = KernelStack(v.d)
    for n, k in v.kernels.items():
        if not dmin <= n <= dmax or not k.data:
            continue
        if n + 1 <= dmax:
            up = apply_Aplus(k, p)
            if up.data:
                out.kernels[n + 1] = out.kernels[n + 1] + up \
                    if n + 1 in out.kernels else up
        if n - 1 >= dmin:
            dn = apply_Aminus(k, p)
            if dn.data:
                out.kernels[n - 1] = out.kernels[n - 1] + dn \
                    if n - 1 in out.kernels else dn
    return out


def resolvent_solve(rhs, p: ModelParams,
                    degrees: Optional[Tuple[int, int]] = None,
                    tol: float = 1e-8, maxiter: int = 10_000,
                    anderson_depth: int = 4,
                    inner_ops=None) -> Tuple[KernelStack, dict]:
    """Solve (-L0 - A_{dmin,dmax}) v = rhs on the graded stack.

    `rhs` may be a ChaosKernel or a KernelStack supported on the degree
    window (default window: 2..p.n).  Returns (solution, info); raises
    ResolventError if the target relative residual is not reached.

    `inner_ops` swaps in an alternative vector implementation (used by
    the dense d=3 fiber engine); it must provide the same four callables
    returned by `_dict_ops`.
    """
    dmin, dmax = degrees if degrees is not None else (2, p.n)
    if isinstance(rhs, ChaosKernel):
        rhs = KernelStack(rhs.d, {rhs.n: rhs})
    bad = [n for n in rhs.degrees() if not dmin <= n <= dmax]
    if bad:
        raise ValueError(f"rhs has support at degrees {bad} outside "
                         f"[{dmin}, {dmax}]")
    ops = inner_ops if inner_ops is not None else _dict_ops(p, dmin, dmax)
    return _anderson_fixed_point(rhs, ops, tol, maxiter, anderson_depth)


def _dict_ops(p: ModelParams, dmin: int, dmax: int):
    def precondition(v):                      # (-L0)^{-1}
        return v.map(lambda k: apply_L0_power(k, -1.0))

    def apply_off_diagonal(v):                # A_{dmin,dmax}
        return apply_A_projected(v, p, dmin, dmax)

    def combine(coeffs, vecs):
        acc = vecs[0].scale(coeffs[0])
        for c, w in zip(coeffs[1:], vecs[1:]):
            acc = acc + w.scale(c)
        return acc

    def dot(a, b):
        return a.inner(b)

    def l0(v):                                # -L0
        return v.map(lambda k: apply_L0_power(k, 1.0))

    return precondition, apply_off_diagonal, combine, dot, l0


def _anderson_fixed_point(rhs, ops, tol, maxiter, depth):
    precondition, apply_off, combine, dot, l0 = ops

    def gmap(v):
        return precondition(combine([1.0, 1.0], [rhs, apply_off(v)]))

    def nrm(v):
        return math.sqrt(max(dot(v, v).real, 0.0))

    rhs_norm = nrm(rhs)
    if rhs_norm == 0.0:
        return rhs, {"iterations": 0, "residual": 0.0}

    x = precondition(rhs)
    hist_g, hist_r = [], []
    best = math.inf
    rel = math.inf
    for it in range(1, maxiter + 1):
        gx = gmap(x)
        r = combine([1.0, -1.0], [gx, x])
        # the true residual (-L0 - A)x - rhs equals -(-L0) r exactly
        rel = nrm(l0(r)) / rhs_norm
        if rel <= tol:
            return x, {"iterations": it, "residual": rel}
        if rel > 1e3 * max(1.0, best):
            raise ResolventError("resolvent iteration diverged", rel, it)
        best = min(best, rel)

        hist_g.append(gx)
        hist_r.append(r)
        if len(hist_r) > depth + 1:
            hist_g.pop(0)
            hist_r.pop(0)
        m = len(hist_r) - 1
        if m == 0:
            x = gx
            continue
        # Anderson type-II: minimise || r_k + sum_i gamma_i (r_{i} - r_k) ||
        diffs = [combine([1.0, -1.0], [hist_r[i], hist_r[-1]]) for i in range(m)]
        G = np.empty((m, m), dtype=complex)
        b = np.empty(m, dtype=complex)
        for a in range(m):
            for c in range(m):
                G[a, c] = dot(diffs[a], diffs[c])
            b[a] = -dot(diffs[a], hist_r[-1])
        try:
            gamma = np.linalg.lstsq(G, b, rcond=1e-12)[0]
        except np.linalg.LinAlgError:
            gamma = np.zeros(m, dtype=complex)
        coeffs = [*gamma, 1.0 - np.sum(gamma)]
        x = combine(coeffs, hist_g)
    raise ResolventError("resolvent iteration did not converge", rel, maxiter)


def true_residual(v: KernelStack, rhs: KernelStack, p: ModelParams,
                  degrees: Optional[Tuple[int, int]] = None) -> float:
    """|| (-L0 - A) v - rhs || / || rhs ||, computed directly."""
    dmin, dmax = degrees if degrees is not None else (2, p.n)
    lhs = v.map(lambda k: apply_L0_power(k, 1.0)) - apply_A_projected(v, p, dmin, dmax)
    return (lhs - rhs).norm() / rhs.norm()
