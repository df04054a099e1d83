"""Divergence-free Fourier frame and the Leray projection.

Every nonzero integer mode k carries an orthonormal frame
{a_{k,1}, ..., a_{k,d-1}} of the plane orthogonal to k, chosen so that
appending k/|k| gives a right-handed basis (positive determinant).  The
frame depends only on the ray through k and is even: the same vectors are
attached to k and -k.  Expanding a divergence-free field in these frames
turns incompressibility into a structural property instead of a
constraint.
"""

from __future__ import annotations

import math
from typing import Dict, Iterable, Tuple

import numpy as np

Vec = Tuple[int, ...]


class DivergenceError(ValueError):
    """Raised when a field claimed divergence-free fails the tolerance."""

    def __init__(self, k, residual, tol):
        self.k = tuple(int(c) for c in k)
        self.residual = float(residual)
        super().__init__(
            f"field is not divergence-free at k={self.k}: "
            f"relative residual {residual:.3e} exceeds {tol:.0e}"
        )


def is_positive(k) -> bool:
    """Membership in the positive half-lattice: first nonzero entry > 0."""
    for c in k:
        if c != 0:
            return c > 0
    raise ValueError("zero wavevector has no sign class")


def positive_representative(k: np.ndarray) -> np.ndarray:
    """k or -k, whichever lies in the positive half-lattice."""
    for c in k:
        if c != 0:
            return k if c > 0 else -k
    raise ValueError("zero wavevector")


def _primitive(k: np.ndarray) -> np.ndarray:
    g = int(math.gcd(*[abs(int(c)) for c in k]))
    return (k // g).astype(np.int64)


def leray_matrix(k) -> np.ndarray:
    """Fourier symbol of the projection onto divergence-free fields,
    I - k k^T / |k|^2."""
    k = np.asarray(k, dtype=float)
    n2 = float(k @ k)
    if n2 == 0.0:
        raise ValueError("Leray symbol undefined at k = 0")
    return np.eye(len(k)) - np.outer(k, k) / n2


def frame(k, convention: str = "canonical") -> np.ndarray:
    """Orthonormal frame of k-perp, shape (d-1, d).

    Deterministic, even in k, constant along rays.  In d=2 the single
    frame vector is the clockwise rotation of the unit ray (so that
    det[a, k/|k|] = +1); in d=3 the first vector is the normalised
    rejection of a canonical axis well transversal to k, and the second
    completes the right-handed triple via the cross product.  The 'alt'
    convention picks a different transversal axis; any compliant frame is
    admissible and results must not depend on the choice.
    """
    k = np.asarray(k, dtype=np.int64)
    d = len(k)
    if not np.any(k != 0):
        raise ValueError("zero wavevector has no frame")
    k = _primitive(positive_representative(k))
    kh = k.astype(float)
    kh /= np.linalg.norm(kh)
    if d == 2:
        return np.array([[kh[1], -kh[0]]])
    if d == 3:
        return np.vstack(_frame3(kh, convention))
    raise ValueError(f"frames implemented for d in (2, 3), got d={d}")


def _frame3(kh: np.ndarray, convention: str):
    if convention == "canonical":
        axes = (0, 1)
    elif convention == "alt":
        axes = (2, 0)
    else:
        raise ValueError(f"unknown frame convention {convention!r}")
    ax = axes[0] if abs(kh[axes[0]]) < 0.9 else axes[1]
    e = np.zeros(3)
    e[ax] = 1.0
    a1 = e - (e @ kh) * kh
    a1 /= np.linalg.norm(a1)
    a2 = np.cross(kh, a1)
    return a1, a2


def frame_directions(dirs: np.ndarray, convention: str = "canonical") -> np.ndarray:
    """Vectorised d=3 frame for real direction vectors, shape (m, 2, 3).

    Same sign/axis rules as `frame`, applied row-wise; used by the
    continuum integrals where the frame argument is not a lattice point.
    """
    x = np.asarray(dirs, dtype=float)
    s = np.where(x[:, 0] != 0, np.sign(x[:, 0]),
                 np.where(x[:, 1] != 0, np.sign(x[:, 1]), np.sign(x[:, 2])))
    xh = x * s[:, None]
    xh /= np.linalg.norm(xh, axis=1, keepdims=True)
    if convention == "canonical":
        axes = (0, 1)
    elif convention == "alt":
        axes = (2, 0)
    else:
        raise ValueError(f"unknown frame convention {convention!r}")
    e = np.zeros_like(xh)
    first = np.abs(xh[:, axes[0]]) < 0.9
    e[first, axes[0]] = 1.0
    e[~first, axes[1]] = 1.0
    a1 = e - np.sum(e * xh, axis=1, keepdims=True) * xh
    a1 /= np.linalg.norm(a1, axis=1, keepdims=True)
    a2 = np.cross(xh, a1)
    return np.stack([a1, a2], axis=1)


def decompose(field: Dict[Vec, np.ndarray], tol: float = 1e-10,
              convention: str = "canonical") -> Dict[Tuple[Vec, int], complex]:
    """Frame coefficients u_{k,alpha} = sum_l a_{k,alpha}^l uhat(l,k).

    `field` maps nonzero integer modes to complex component vectors.
    Rejects fields whose divergence k . uhat(k) exceeds `tol` relative to
    |k||uhat(k)|, reporting the offending mode.
    """
    coeffs: Dict[Tuple[Vec, int], complex] = {}
    for k, u in field.items():
        u = np.asarray(u, dtype=complex)
        kf = np.asarray(k, dtype=float)
        scale = np.linalg.norm(kf) * np.linalg.norm(u)
        if scale > 0:
            residual = abs(kf @ u) / scale
            if residual > tol:
                raise DivergenceError(k, residual, tol)
        a = frame(k, convention)
        for alpha in range(a.shape[0]):
            coeffs[(tuple(int(c) for c in k), alpha)] = complex(a[alpha] @ u)
    return coeffs


def recompose(coeffs: Dict[Tuple[Vec, int], complex],
              convention: str = "canonical") -> Dict[Vec, np.ndarray]:
    """Component table uhat(k) = sum_alpha u_{k,alpha} a_{k,alpha}.

    The output is divergence-free exactly, by construction."""
    field: Dict[Vec, np.ndarray] = {}
    for (k, alpha), c in coeffs.items():
        a = frame(k, convention)
        vec = field.setdefault(k, np.zeros(a.shape[1], dtype=complex))
        vec += c * a[alpha]
    return field


def frame_table(points: np.ndarray, convention: str = "canonical") -> np.ndarray:
    """Frames for an array of integer modes, shape (m, d-1, d).

    Row i equals frame(points[i]) exactly, so tables built here agree
    bit-for-bit with scalar frame lookups elsewhere."""
    pts = np.asarray(points)
    out = np.empty((len(pts), pts.shape[1] - 1, pts.shape[1]))
    for i, k in enumerate(pts):
        out[i] = frame(k, convention)
    return out
