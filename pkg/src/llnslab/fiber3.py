"""Vectorised d=3 engine for kernels on a fixed total-momentum fiber.

The sparse dictionary implementation in `operators` is the readable
reference; it cannot hold the degree-3 fiber of a cutoff 8.5 run (tens of
millions of tuples).  This module stores fiber kernels densely in frame
coordinates, one complex amplitude per (wavevector tuple, frame
multi-index):

  degree 1   (2,)            at the fiber momentum K
  degree 2   (B, 2, 2)       first leg runs over the cutoff box,
                             second leg is K - k1
  degree 3   (P, 2, 2, 2)    P feasible ordered (k1, k2) pairs,
                             third leg is K - k1 - k2

Storage is redundant under leg permutations, which keeps every operator
application a pure gather/contract/scatter pipeline.  Because frame
vectors are orthogonal to their wavevector, the divergence-free
projections collapse onto frame dot products and each generator half
becomes a handful of einsums per ordered slot choice.

Arrays are processed in chunks; one degree-3 vector at cutoff 8.5 weighs
about 1.3 GB and the resolvent loop keeps two alive plus chunk temps.
"""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from .basis import frame_table
from .chaos import ChaosKernel
from .params import ModelParams, lattice_box
from .stack import ResolventError

TWO_PI = 2.0 * math.pi
CHUNK = 1_500_000


class Fiber3:
    """Geometry, frames and index maps of one momentum fiber (d=3)."""

    def __init__(self, p: ModelParams, K, max_degree: int = 3,
                 convention: str = "canonical"):
        if p.d != 3:
            raise ValueError("Fiber3 is the d=3 engine")
        if not 2 <= max_degree <= 3:
            raise ValueError("fiber engine supports degrees up to 3")
        self.p = p
        self.K = np.asarray(K, dtype=np.int64)
        self.max_degree = max_degree
        M = p.box_radius
        self.M = M
        self.S = 2 * M + 1
        self.pts = lattice_box(3, M, include_zero=True).astype(np.int64)
        self.B = len(self.pts)
        self.valid = np.asarray(p.in_cutoff(self.pts)) & np.any(self.pts != 0, axis=1)
        self.frames = np.zeros((self.B, 2, 3))
        self.frames[self.valid] = frame_table(self.pts[self.valid], convention)
        self.n2 = np.sum(self.pts.astype(float) ** 2, axis=1)

        self.iK = self._lin_or_neg(self.K[None, :])[0]
        self.K_ok = bool(self.iK >= 0 and self.valid[self.iK]
                         and p.in_cutoff(self.K))

        # degree-2 leg partner and validity
        self.k2 = self.K[None, :] - self.pts
        self.i2 = self._lin_or_neg(self.k2)
        self.valid2 = self.valid & self._valid_at(self.i2) & self.K_ok
        self.w2 = TWO_PI ** 2 * (self.n2 + np.sum(self.k2.astype(float) ** 2, axis=1))

        if max_degree >= 3:
            self._build_pairs()

    # -- index helpers -----------------------------------------------------
    def lin(self, V: np.ndarray) -> np.ndarray:
        return ((V[..., 0] + self.M) * self.S + (V[..., 1] + self.M)) * self.S \
            + (V[..., 2] + self.M)

    def _lin_or_neg(self, V: np.ndarray) -> np.ndarray:
        inside = np.all(np.abs(V) <= self.M, axis=-1)
        out = np.where(inside, self.lin(np.clip(V, -self.M, self.M)), -1)
        return out.astype(np.int64)

    def _valid_at(self, idx: np.ndarray) -> np.ndarray:
        ok = idx >= 0
        res = np.zeros(idx.shape, dtype=bool)
        res[ok] = self.valid[idx[ok]]
        return res

    def _build_pairs(self):
        """Feasible ordered (k1, k2): all three legs nonzero, inside cutoff."""
        i1_parts, i2_parts = [], []
        cand = np.flatnonzero(self.valid)
        step = max(1, CHUNK // self.B)
        for lo in range(0, len(cand), step):
            block = cand[lo:lo + step]
            p3 = (self.K[None, None, :] - self.pts[block][:, None, :]
                  - self.pts[None, :, :])
            ok = self.valid[None, :] & self._valid_at(self._lin_or_neg(p3))
            bi, pj = np.nonzero(ok)
            i1_parts.append(block[bi].astype(np.int32))
            i2_parts.append(pj.astype(np.int32))
        self.pair_i1 = np.concatenate(i1_parts)
        self.pair_i2 = np.concatenate(i2_parts)
        self.P = len(self.pair_i1)
        p1 = self.pts[self.pair_i1]
        p2 = self.pts[self.pair_i2]
        p3 = self.K[None, :] - p1 - p2
        self.pair_i3 = self.lin(p3).astype(np.int64)
        self.w3 = TWO_PI ** 2 * (np.sum(p1.astype(float) ** 2, 1)
                                 + np.sum(p2.astype(float) ** 2, 1)
                                 + np.sum(p3.astype(float) ** 2, 1))

    def estimated_bytes(self) -> int:
        per_vec = self.B * 4 * 16
        if self.max_degree >= 3:
            per_vec += self.P * 8 * 16
        return per_vec

    # -- vectors -------------------------------------------------------------
    def zero(self) -> "FiberVec":
        return FiberVec(self)

    def sigma(self, alpha: int) -> "FiberVec":
        """sigma_{K,alpha} as a fiber vector."""
        v = self.zero()
        v.c1 = np.zeros(2, dtype=complex)
        v.c1[alpha] = 1.0
        return v

    # -- conversions to/from the sparse representation -------------------------
    def kernel_to_deg2(self, k: ChaosKernel) -> np.ndarray:
        F = np.zeros((self.B, 2, 2), dtype=complex)
        A = self.frames
        for i in np.flatnonzero(self.valid2):
            k1 = tuple(int(c) for c in self.pts[i])
            k2 = tuple(int(c) for c in self.k2[i])
            comp = np.array([[k.value(((k1, l1), (k2, l2)))
                              for l2 in range(3)] for l1 in range(3)])
            F[i] = A[i] @ comp @ A[self.i2[i]].T
        return F

    def deg2_to_kernel(self, F: np.ndarray) -> ChaosKernel:
        out = ChaosKernel.zero(3, 2, tuple(int(c) for c in self.K))
        for i in np.flatnonzero(self.valid2):
            if not np.any(F[i]):
                continue
            comp = self.frames[i].T @ F[i] @ self.frames[self.i2[i]]
            k1 = tuple(int(c) for c in self.pts[i])
            k2 = tuple(int(c) for c in self.k2[i])
            for l1 in range(3):
                for l2 in range(3):
                    if comp[l1, l2] != 0:
                        out.data[tuple(sorted(((k1, l1), (k2, l2))))] = \
                            complex(comp[l1, l2])
        return out

    def deg3_to_kernel(self, F: np.ndarray) -> ChaosKernel:
        out = ChaosKernel.zero(3, 3, tuple(int(c) for c in self.K))
        p3 = self.K[None, :] - self.pts[self.pair_i1] - self.pts[self.pair_i2]
        for e in range(self.P):
            if not np.any(F[e]):
                continue
            i1, i2 = self.pair_i1[e], self.pair_i2[e]
            comp = np.einsum('ba,dc,fe,bdf->ace', self.frames[i1],
                             self.frames[i2], self.frames[self.pair_i3[e]], F[e])
            legs = (tuple(int(c) for c in self.pts[i1]),
                    tuple(int(c) for c in self.pts[i2]),
                    tuple(int(c) for c in p3[e]))
            for l1 in range(3):
                for l2 in range(3):
                    for l3 in range(3):
                        val = comp[l1, l2, l3]
                        if val != 0:
                            key = tuple(sorted(((legs[0], l1), (legs[1], l2),
                                                (legs[2], l3))))
                            out.data.setdefault(key, complex(val))
        return out


class FiberVec:
    """Degrees 1..3 of one fiber element; blocks allocated lazily."""

    __slots__ = ("fib", "c1", "c2", "c3")

    def __init__(self, fib: Fiber3, c1=None, c2=None, c3=None):
        self.fib = fib
        self.c1: Optional[np.ndarray] = c1
        self.c2: Optional[np.ndarray] = c2
        self.c3: Optional[np.ndarray] = c3

    def _blocks(self):
        return (("c1", self.c1), ("c2", self.c2), ("c3", self.c3))

    def copy(self) -> "FiberVec":
        return FiberVec(self.fib,
                        None if self.c1 is None else self.c1.copy(),
                        None if self.c2 is None else self.c2.copy(),
                        None if self.c3 is None else self.c3.copy())

    def add_block(self, name: str, arr: np.ndarray):
        mine = getattr(self, name)
        if mine is None:
            setattr(self, name, arr)
        else:
            mine += arr

    def scale_(self, a) -> "FiberVec":
        for _, b in self._blocks():
            if b is not None:
                b *= a
        return self

    def add_scaled_(self, other: "FiberVec", a=1.0) -> "FiberVec":
        for name, b in other._blocks():
            if b is not None:
                self.add_block(name, a * b if a != 1.0 else b.copy())
        return self

    def dot(self, other: "FiberVec") -> complex:
        acc = 0j
        if self.c1 is not None and other.c1 is not None:
            acc += np.vdot(self.c1, other.c1)
        if self.c2 is not None and other.c2 is not None:
            acc += 2.0 * np.vdot(self.c2, other.c2)
        if self.c3 is not None and other.c3 is not None:
            acc += 6.0 * np.vdot(self.c3, other.c3)
        return complex(acc)

    def norm(self) -> float:
        return math.sqrt(max(self.dot(self).real, 0.0))

    def l0_power_(self, s: float) -> "FiberVec":
        fib = self.fib
        if self.c1 is not None:
            self.c1 = self.c1 * (TWO_PI ** 2 * float(fib.K @ fib.K)) ** s
        if self.c2 is not None:
            self.c2 *= (fib.w2 ** s)[:, None, None]
        if self.c3 is not None:
            for lo in range(0, fib.P, CHUNK):
                hi = min(fib.P, lo + CHUNK)
                self.c3[lo:hi] *= (fib.w3[lo:hi] ** s)[:, None, None, None]
        return self


def weighted_diff_norm(a: FiberVec, b: FiberVec, power: float) -> float:
    """|| (-L0)^power (a - b) ||, streamed without materialising a - b."""
    fib = a.fib
    acc = 0.0

    def block(x, y):
        if x is None and y is None:
            return None
        if x is None:
            return -y
        if y is None:
            return x
        return x - y

    d1 = block(a.c1, b.c1)
    if d1 is not None:
        w = (TWO_PI ** 2 * float(fib.K @ fib.K)) ** power
        acc += float(np.sum(np.abs(d1) ** 2)) * w * w
    d2 = block(a.c2, b.c2)
    if d2 is not None:
        w2 = fib.w2 ** power
        acc += 2.0 * float(np.sum(np.abs(d2) ** 2 * (w2 * w2)[:, None, None]))
    if a.c3 is not None or b.c3 is not None:
        for lo in range(0, fib.P, CHUNK):
            hi = min(fib.P, lo + CHUNK)
            x = a.c3[lo:hi] if a.c3 is not None else 0.0
            y = b.c3[lo:hi] if b.c3 is not None else 0.0
            w3 = fib.w3[lo:hi] ** power
            acc += 6.0 * float(np.sum(np.abs(x - y) ** 2
                                      * (w3 * w3)[:, None, None, None]))
    return math.sqrt(acc)


# ---------------------------------------------------------------------------
# generator halves in frame coordinates
# ---------------------------------------------------------------------------

def aplus_1to2(fib: Fiber3, c1: np.ndarray, lamN: float) -> np.ndarray:
    out = np.zeros((fib.B, 2, 2), dtype=complex)
    if not fib.K_ok:
        return out
    sel = np.flatnonzero(fib.valid2)
    k1 = fib.pts[sel].astype(float)
    k2 = fib.k2[sel].astype(float)
    A1 = fib.frames[sel]
    A2 = fib.frames[fib.i2[sel]]
    AK = fib.frames[fib.iK]
    dot1 = np.einsum('maj,mj->ma', A1, k2)            # a_{k1,.} . k2
    dot2 = np.einsum('maj,mj->ma', A2, k1)
    g1 = np.einsum('maj,bj,b->ma', A1, AK, np.asarray(c1))
    g2 = np.einsum('maj,bj,b->ma', A2, AK, np.asarray(c1))
    out[sel] = (lamN * TWO_PI * 0.5j) * (np.einsum('ma,mb->mab', dot1, g2)
                                         + np.einsum('mb,ma->mab', dot2, g1))
    return out


def aminus_2to1(fib: Fiber3, c2: np.ndarray, lamN: float) -> np.ndarray:
    out = np.zeros(2, dtype=complex)
    if not fib.K_ok:
        return out
    sel = np.flatnonzero(fib.valid2)
    AK = fib.frames[fib.iK]
    A1 = fib.frames[sel]
    A2 = fib.frames[fib.i2[sel]]
    Kf = fib.K.astype(float)
    M = np.einsum('gj,maj->mga', AK, A1)              # a_{K,g} . a_{p,b1}
    w = np.einsum('j,mbj->mb', Kf, A2)                # K . a_{q,b2}
    return lamN * TWO_PI * 2j * np.einsum('mga,mb,mab->g', M, w, c2[sel])


def aplus_2to3(fib: Fiber3, c2: np.ndarray, lamN: float) -> np.ndarray:
    out = np.empty((fib.P, 2, 2, 2), dtype=complex)
    pref = lamN * TWO_PI * 1j / 3.0
    for lo in range(0, fib.P, CHUNK):
        hi = min(fib.P, lo + CHUNK)
        legs = (fib.pair_i1[lo:hi].astype(np.int64),
                fib.pair_i2[lo:hi].astype(np.int64),
                fib.pair_i3[lo:hi])
        pvec = [fib.pts[ix].astype(float) for ix in legs]
        Afr = [fib.frames[ix] for ix in legs]
        # merged-leg box index per unordered slot pair: k_a + k_b = K - k_c
        smap = {(0, 1): fib.i2[legs[2]], (0, 2): fib.i2[legs[1]],
                (1, 2): fib.i2[legs[0]]}
        acc = np.zeros((hi - lo, 2, 2, 2), dtype=complex)
        for (i, j) in ((0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)):
            r = 3 - i - j
            sidx = smap[(min(i, j), max(i, j))]
            ok = fib._valid_at(sidx)                   # cutoff on the merged leg
            if not np.any(ok):
                continue
            sgood = np.where(ok, sidx, 0)
            dots = np.einsum('maj,mj->ma', Afr[i], pvec[j])
            Ms = np.einsum('maj,mbj->mab', Afr[j], fib.frames[sgood])
            contr = np.einsum('mab,mbr->mar', Ms, c2[sgood])
            term = np.einsum('mi,mjr->mijr', dots, contr)
            term[~ok] = 0.0
            perm = np.argsort((i, j, r))
            acc += np.transpose(term, (0,) + tuple(1 + q for q in perm))
        out[lo:hi] = pref * acc
    return out


def aminus_3to2(fib: Fiber3, c3: np.ndarray, lamN: float) -> np.ndarray:
    conv = np.zeros((fib.B, 2, 2), dtype=complex)
    for lo in range(0, fib.P, CHUNK):
        hi = min(fib.P, lo + CHUNK)
        i1 = fib.pair_i1[lo:hi].astype(np.int64)
        i2 = fib.pair_i2[lo:hi].astype(np.int64)
        sidx = fib.i2[fib.pair_i3[lo:hi]]              # lin(k1 + k2)
        ok = fib._valid_at(sidx)
        if not np.any(ok):
            continue
        sgood = np.where(ok, sidx, 0)
        svec = fib.pts[sgood].astype(float)
        M1 = np.einsum('mgj,maj->mga', fib.frames[sgood], fib.frames[i1])
        w = np.einsum('mj,mbj->mb', svec, fib.frames[i2])
        term = np.einsum('mga,mb,mabr->mgr', M1, w, c3[lo:hi])
        idx = sgood[ok]
        for g in range(2):
            for r in range(2):
                vals = term[ok, g, r]
                conv[:, g, r].real += np.bincount(idx, weights=vals.real,
                                                  minlength=fib.B)
                conv[:, g, r].imag += np.bincount(idx, weights=vals.imag,
                                                  minlength=fib.B)
    out = np.zeros((fib.B, 2, 2), dtype=complex)
    sel = np.flatnonzero(fib.valid2)
    out[sel] = conv[sel] + np.transpose(conv[fib.i2[sel]], (0, 2, 1))
    out *= lamN * TWO_PI * 3j
    return out


def apply_A_fiber(v: FiberVec, dmin: int, dmax: int,
                  lam_scale: float = 1.0) -> FiberVec:
    """Projected off-diagonal part A_{dmin,dmax} of the generator."""
    fib = v.fib
    lamN = fib.p.lambda_N * lam_scale
    out = fib.zero()
    if lamN == 0.0:
        return out
    if v.c1 is not None and dmin <= 1 and 2 <= dmax:
        out.add_block("c2", aplus_1to2(fib, v.c1, lamN))
    if v.c2 is not None and 2 >= dmin:
        if 3 <= dmax:
            out.add_block("c3", aplus_2to3(fib, v.c2, lamN))
        if 1 >= dmin:
            out.add_block("c1", aminus_2to1(fib, v.c2, lamN))
    if v.c3 is not None and 3 <= dmax and 2 >= dmin:
        out.add_block("c2", aminus_3to2(fib, v.c3, lamN))
    return out


def apply_T_fiber(v: FiberVec, sign: int, dmax: int = 3,
                  lam_scale: float = 1.0) -> FiberVec:
    """(-L0)^{-1/2} A_sign (-L0)^{-1/2} on the fiber."""
    fib = v.fib
    lamN = fib.p.lambda_N * lam_scale
    w = v.copy().l0_power_(-0.5)
    out = fib.zero()
    if lamN != 0.0:
        if sign > 0:
            if w.c1 is not None and 2 <= dmax:
                out.add_block("c2", aplus_1to2(fib, w.c1, lamN))
            if w.c2 is not None and 3 <= dmax:
                out.add_block("c3", aplus_2to3(fib, w.c2, lamN))
        else:
            if w.c2 is not None:
                out.add_block("c1", aminus_2to1(fib, w.c2, lamN))
            if w.c3 is not None:
                out.add_block("c2", aminus_3to2(fib, w.c3, lamN))
    return out.l0_power_(-0.5)


def resolvent_solve_fiber(fib: Fiber3, rhs: FiberVec, dmin: int = 2,
                          dmax: int = 3, tol: float = 1e-8,
                          maxiter: int = 10_000) -> Tuple[FiberVec, dict]:
    """Preconditioned fixed point v <- (-L0)^{-1}(rhs + A v) on the fiber.

    Plain iteration: at the couplings used here the preconditioned map is
    a strong contraction and the lean memory profile matters more than
    acceleration.  The reported residual is || (-L0 - A) v - rhs || /
    || rhs ||, measured exactly through the identity
    (-L0)(g(v) - v) = -((-L0 - A) v - rhs)."""
    rhs_norm = rhs.norm()
    if rhs_norm == 0.0:
        return fib.zero(), {"iterations": 0, "residual": 0.0}
    x = rhs.copy().l0_power_(-1.0)
    best = math.inf
    rel = math.inf
    for it in range(1, maxiter + 1):
        gx = apply_A_fiber(x, dmin, dmax)
        gx.add_scaled_(rhs).l0_power_(-1.0)
        rel = weighted_diff_norm(gx, x, 1.0) / rhs_norm
        if rel <= tol:
            return x, {"iterations": it, "residual": rel}
        if rel > 1e3 * max(1.0, best):
            raise ResolventError("fiber resolvent diverged", rel, it)
        best = min(best, rel)
        x = gx
    raise ResolventError("fiber resolvent did not converge", rel, maxiter)
