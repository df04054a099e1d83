"""Effective-diffusivity constants by three independent routes.

Closed forms (the d=2 profile and the fixed-point constants), limit
integrals (adaptive quadrature and importance-sampled Monte Carlo of the
d=3 expansion coefficients), and finite-cutoff operator sums (lattice
sums, iterated raising operators, truncated resolvents).  Routes never
share code with the operator algebra they check.

Conventions.  Expansion coefficients are reported lambda-free: the
operators are divided by lambda, so the first and second coefficients
multiply lambda^2 and lambda^4.  The d=3 limit constants are exact for
the Euclidean-ball cutoff and the integral routes default to it; the
operator algebra keeps the sup-norm box default of `ModelParams`.  The
second coefficient carries a reference value F2_REPORTED that this
laboratory does not reproduce under either cutoff convention; see the
README for the numbers and the margin analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .basis import frame, frame_directions, leray_matrix
from .chaos import ChaosKernel
from .operators import apply_T
from .params import ModelParams, coupling_attenuation, lattice_box
from .replacement import G
from . import fiber3 as fb

TWO_PI = 2.0 * math.pi
FOUR_PI2 = TWO_PI ** 2

#: first d=3 expansion coefficient, closed form
F1_CLOSED = 7.0 / (30.0 * math.pi)

#: reference value for the magnitude of the second d=3 coefficient;
#: both cutoff conventions give a materially different number here
#: (see README), so acceptance against this value is expected to fail
F2_REPORTED = 8.588 / (2.0 * (2.0 * math.pi) ** 4)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def d2_effective_D(lam: float) -> float:
    """Weak-coupling effective diffusivity in d=2: sqrt(lam^2/(8 pi)+1)-1."""
    if lam < 0:
        raise ValueError("coupling must be >= 0")
    return math.sqrt(lam * lam / (8.0 * math.pi) + 1.0) - 1.0


def D_rep(c: float, lam: float) -> float:
    """Positive root of x(1+x) = c lam^2, the naive one-step replacement."""
    if c < 0 or lam < 0:
        raise ValueError("need c >= 0 and lam >= 0")
    return 0.5 * (math.sqrt(1.0 + 4.0 * c * lam * lam) - 1.0)


def nu_eff(lam: float) -> float:
    """Conjectured effective viscosity sqrt(1 + lam^2/pi)."""
    return math.sqrt(1.0 + lam * lam / math.pi)


def f1_closed() -> float:
    return F1_CLOSED


# ---------------------------------------------------------------------------
# first coefficient: quadrature and lattice routes
# ---------------------------------------------------------------------------

def f1_quadrature(epsabs: float = 1e-10, epsrel: float = 1e-10) -> Tuple[float, float]:
    """Spherical-coordinates integral for the first d=3 coefficient.

    (1 / (2 (2 pi)^2)) * int_0^{2pi} int_0^pi int_0^1
        sin^3(t1) (1 + cos(2 t1) cos^2(t2)) dr dt1 dt2

    Returns (value, quadrature error estimate)."""
    val, err = integrate.tplquad(
        lambda r, t1, t2: math.sin(t1) ** 3
        * (1.0 + math.cos(2.0 * t1) * math.cos(t2) ** 2),
        0.0, 2.0 * math.pi,          # t2
        0.0, math.pi,                # t1
        0.0, 1.0,                    # r
        epsabs=epsabs, epsrel=epsrel)
    scale = 1.0 / (2.0 * FOUR_PI2)
    return val * scale, err * scale


def f1_lattice(N: float, k=(0, 0, 1), alpha: int = 0, norm: str = "euclid",
               convention: str = "canonical") -> float:
    """Finite-cutoff lattice sum for the first coefficient, lambda-free.

    Direct evaluation of

      (lamN/lam)^2 / ((2 pi)^2 |k|^2) * sum_p R^N(p, k-p)
        [ |P(p)k|^2 |P(k-p)a|^2 + (k . P(p)a)(k . P(k-p)a) ]
        / (|p|^2 + |k-p|^2)

    with a = a_{k,alpha}; no operator code is involved."""
    k = np.asarray(k, dtype=np.int64)
    d = len(k)
    a = frame(k, convention)[alpha]
    kf = k.astype(float)
    M = int(math.floor(N))
    P = lattice_box(d, M).astype(float)
    Q = kf[None, :] - P
    if norm == "sup":
        ok = (np.max(np.abs(P), 1) <= N) & (np.max(np.abs(Q), 1) <= N) \
            & (np.max(np.abs(kf)) <= N)
    else:
        ok = (np.sum(P * P, 1) <= N * N) & (np.sum(Q * Q, 1) <= N * N) \
            & (kf @ kf <= N * N)
    ok &= np.any(Q != 0, axis=1)
    P, Q = P[ok], Q[ok]

    def leray_dot(X, v):
        return v[None, :] - (X @ v / np.sum(X * X, 1))[:, None] * X

    Pk = leray_dot(P, kf)
    Pa = leray_dot(P, a)
    Qk_a = leray_dot(Q, a)
    num = (np.sum(Pk * Pk, 1) * np.sum(Qk_a * Qk_a, 1)
           + (Pa @ kf) * (Qk_a @ kf))
    den = np.sum(P * P, 1) + np.sum(Q * Q, 1)
    att2 = coupling_attenuation(d, N) ** 2
    return float(att2 * np.sum(num / den) / (FOUR_PI2 * float(kf @ kf)))


def richardson2(v1: float, N1: float, v2: float, N2: float) -> float:
    """Two-point extrapolation assuming an O(1/N) discretisation error."""
    return (v2 * N2 - v1 * N1) / (N2 - N1)


def richardson3(vals: Sequence[float], Ns: Sequence[float]) -> float:
    """Three-point extrapolation assuming a/N + b/N^2 error structure."""
    (v1, v2, v3), (n1, n2, n3) = vals, Ns
    A = np.array([[1.0, 1 / n1, 1 / n1 ** 2],
                  [1.0, 1 / n2, 1 / n2 ** 2],
                  [1.0, 1 / n3, 1 / n3 ** 2]])
    return float(np.linalg.solve(A, np.array([v1, v2, v3]))[0])


# ---------------------------------------------------------------------------
# second coefficient: importance-sampled Monte Carlo of the limit integral
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MCResult:
    value: float
    stderr: float
    accepted: int
    proposals: int
    batches: int
    norm: str
    seed: int

    def __str__(self):
        return (f"{self.value:.7f} +- {self.stderr:.7f} "
                f"({self.accepted} accepted / {self.proposals} proposals)")


def _chain_coefficient(k, ak1, x1, x2, x3, a1, a2, a3):
    """Coefficient of the two-step raising chain at (x1, x2, x3)."""
    s = x1 + x2
    den = np.sum(s * s, axis=1) + np.sum(x3 * x3, axis=1)
    proj = a1 - (np.sum(s * a1, axis=1) / np.sum(s * s, axis=1))[:, None] * s
    pref = np.sum(x1 * a2, axis=1) / den
    return pref * (np.sum(k * proj, axis=1) * np.sum(a3 * ak1, axis=1)
                   + np.sum(ak1 * proj, axis=1) * np.sum(a3 * k, axis=1))


def _f2_integrand(x1: np.ndarray, x2: np.ndarray, k: np.ndarray,
                  ak1: np.ndarray) -> np.ndarray:
    """Permutation and frame-index sums of the squared chain coefficient,
    divided by the quadratic denominator."""
    perms = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
    x3 = -(x1 + x2)
    xs = (x1, x2, x3)
    frames = [frame_directions(x) for x in xs]
    m = len(x1)

    def c_all(pm):
        out = np.empty((2, 2, 2, m))
        for i1 in range(2):
            for i2 in range(2):
                for i3 in range(2):
                    out[i1, i2, i3] = _chain_coefficient(
                        k, ak1, xs[pm[0]], xs[pm[1]], xs[pm[2]],
                        frames[pm[0]][:, i1], frames[pm[1]][:, i2],
                        frames[pm[2]][:, i3])
        return out

    cid = c_all(perms[0])
    val = np.zeros(m)
    for pm in perms:
        cp = c_all(pm)
        for al in np.ndindex(2, 2, 2):
            val += cid[al] * cp[al[pm[0]], al[pm[1]], al[pm[2]]]
    den = (np.sum(x1 * x1, 1) + np.sum(x2 * x2, 1)
           + np.sum((x1 + x2) ** 2, 1))
    return val / den


def f2_monte_carlo(samples: int = 10_000_000, seed: int = 20240,
                   norm: str = "euclid", batch: int = 250_000) -> MCResult:
    """Monte Carlo for the magnitude of the second d=3 coefficient.

    Estimates  1/((2 pi)^4 |k|^2) * int over {x1, x2, x1+x2 inside the
    cutoff ball} of the permutation/frame sums of the chain coefficients
    over the quadratic denominator, with x3 = -(x1+x2).

    The integrand behaves like |x|^{-4} near the origin, so uniform
    sampling has infinite variance; proposals are drawn radially with
    density proportional to r (a |x|^{-4} importance factor in six
    dimensions), which makes the weighted second moment finite.  The
    stated `samples` counts proposals accepted by the cutoff
    constraints; the standard error comes from batch means.
    """
    if norm not in ("euclid", "sup"):
        raise ValueError(f"unknown norm {norm!r}")
    rng = np.random.default_rng(seed)
    k = np.array([0.0, 0.0, 1.0])
    ak1 = frame((0, 0, 1))[0]
    R = math.sqrt(2.0) if norm == "euclid" else math.sqrt(6.0)
    area5 = math.pi ** 3                     # surface of the unit 5-sphere
    batch_sums: List[float] = []
    batch_props: List[int] = []
    accepted = proposals = 0
    while accepted < samples:
        g = rng.standard_normal((batch, 6))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = R * np.sqrt(rng.uniform(0.0, 1.0, batch))
        x = g * r[:, None]
        x1, x2 = x[:, :3], x[:, 3:]
        if norm == "euclid":
            ok = (np.sum(x1 * x1, 1) <= 1.0) & (np.sum(x2 * x2, 1) <= 1.0) \
                & (np.sum((x1 + x2) ** 2, 1) <= 1.0)
        else:
            ok = (np.max(np.abs(x1), 1) <= 1.0) & (np.max(np.abs(x2), 1) <= 1.0) \
                & (np.max(np.abs(x1 + x2), 1) <= 1.0)
        proposals += batch
        n_ok = int(np.count_nonzero(ok))
        accepted += n_ok
        if n_ok == 0:
            batch_sums.append(0.0)
            batch_props.append(batch)
            continue
        h = _f2_integrand(x1[ok], x2[ok], k, ak1)
        w = 0.5 * area5 * R * R * r[ok] ** 4   # reciprocal proposal density
        batch_sums.append(float(np.sum(h * w)))
        batch_props.append(batch)
    pref = 1.0 / ((2.0 * math.pi) ** 4 * float(k @ k))
    means = pref * np.array(batch_sums) / np.array(batch_props)
    value = float(np.mean(means))
    stderr = float(np.std(means, ddof=1) / math.sqrt(len(means))) \
        if len(means) > 1 else math.inf
    return MCResult(value, stderr, accepted, proposals, len(means), norm, seed)


def integration_region_volume(norm: str, samples: int = 2_000_000,
                              seed: int = 7) -> float:
    """Monte Carlo volume of the constraint region (sampler self-check)."""
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(-1, 1, (samples, 3))
    x2 = rng.uniform(-1, 1, (samples, 3))
    if norm == "euclid":
        ok = (np.sum(x1 * x1, 1) <= 1) & (np.sum(x2 * x2, 1) <= 1) \
            & (np.sum((x1 + x2) ** 2, 1) <= 1)
    else:
        ok = np.max(np.abs(x1 + x2), axis=1) <= 1
    return float(np.mean(ok) * 64.0)


# ---------------------------------------------------------------------------
# operator routes: iterated raising chains and the truncated resolvent
# ---------------------------------------------------------------------------

class BudgetError(MemoryError):
    """Requested lattice computation exceeds the memory budget."""

    def __init__(self, needed: int, budget: int):
        super().__init__(f"estimated working set {needed/1e9:.1f} GB exceeds "
                         f"budget {budget/1e9:.1f} GB")
        self.needed = needed
        self.budget = budget


def _stripped(p: ModelParams) -> ModelParams:
    """Same cutoff data with the bare coupling divided out."""
    return p.with_(lam=1.0)


def fl_lattice(l: int, p: ModelParams, k=None, engine: str = "auto",
               budget_bytes: int = 6_000_000_000,
               convention: str = "canonical") -> float:
    """Finite-(N, n) expansion coefficient of order l, lambda-free.

    (-1)^(l-1) || (P T P)^(l-1) T+ sigma_{k,1} ||^2 with the operators
    divided by lambda and P the projection onto degrees 2..n."""
    if l < 1:
        raise ValueError("order l must be >= 1")
    if p.n < l + 1:
        raise ValueError(f"truncation n={p.n} too small for order l={l}")
    if k is None:
        k = (0,) * (p.d - 1) + (1,)
    ps = _stripped(p)
    sign = -1.0 if l % 2 == 0 else 1.0
    max_deg = min(l + 1, p.n)
    use_fiber = engine == "fiber" or (engine == "auto" and p.d == 3
                                      and max_deg <= 3)
    if use_fiber:
        fib = fb.Fiber3(ps, k, max_degree=max(2, max_deg), convention=convention)
        if fib.estimated_bytes() * 3 > budget_bytes:
            raise BudgetError(fib.estimated_bytes() * 3, budget_bytes)
        w = fb.apply_T_fiber(fib.sigma(0), +1, dmax=p.n if p.n < 3 else 3)
        for _ in range(l - 1):
            up = fb.apply_T_fiber(w, +1, dmax=min(p.n, 3))
            dn = fb.apply_T_fiber(w, -1)
            dn.c1 = None                      # projection onto degrees >= 2
            w = up.add_scaled_(dn)
        return sign * w.dot(w).real
    # sparse route; rough budget estimate from ball size
    ball = int(np.count_nonzero(ps.in_cutoff(lattice_box(p.d, ps.box_radius))))
    est = (ball ** (max_deg - 1)) * (p.d ** max_deg) * 64
    if est > budget_bytes:
        raise BudgetError(est, budget_bytes)
    sig = ChaosKernel.sigma(k, 0, convention=convention)
    w = apply_T(+1, sig, ps)
    from .stack import KernelStack
    stack = KernelStack(p.d, {2: w})
    for _ in range(l - 1):
        nxt = KernelStack(p.d)
        for deg, kern in stack.kernels.items():
            if deg + 1 <= p.n:
                nxt.kernels[deg + 1] = nxt.get(deg + 1) + apply_T(+1, kern, ps) \
                    if deg + 1 in nxt.kernels else apply_T(+1, kern, ps)
            if deg - 1 >= 2:
                dn = apply_T(-1, kern, ps)
                nxt.kernels[deg - 1] = nxt.get(deg - 1) + dn \
                    if deg - 1 in nxt.kernels else dn
        stack = nxt
    return sign * (stack.inner(stack).real)


def D_truncated(p: ModelParams, k=None, tol: float = 1e-8,
                maxiter: int = 10_000, engine: str = "auto",
                budget_bytes: int = 6_000_000_000,
                convention: str = "canonical", alpha: int = 0) -> float:
    """Truncated-resolvent diffusivity at finite (N, n).

    <A+ sigma_{k,a}, (-L0 - A_{2,n})^{-1} A+ sigma_{k,a}> / ((2 pi)^2 |k|^2),
    a positive real number.  Individual frame indices feel the finite-
    cutoff anisotropy; `D_truncated_frame_mean` is the exactly frame-free
    variant."""
    if k is None:
        k = (0,) * (p.d - 1) + (1,)
    k = tuple(int(c) for c in k)
    k2 = sum(c * c for c in k)
    use_fiber = engine == "fiber" or (engine == "auto" and p.d == 3 and p.n <= 3)
    if use_fiber:
        fib = fb.Fiber3(p, k, max_degree=min(p.n, 3), convention=convention)
        if fib.estimated_bytes() * 3 > budget_bytes:
            raise BudgetError(fib.estimated_bytes() * 3, budget_bytes)
        rhs = fib.zero()
        sig = fib.sigma(alpha)
        rhs.c2 = fb.aplus_1to2(fib, sig.c1, p.lambda_N)
        v, info = fb.resolvent_solve_fiber(fib, rhs, 2, min(p.n, 3),
                                           tol=tol, maxiter=maxiter)
        return rhs.dot(v).real / (FOUR_PI2 * k2)
    from .operators import apply_Aplus
    from .stack import resolvent_solve
    sig = ChaosKernel.sigma(k, alpha, convention=convention)
    rhs = apply_Aplus(sig, p)
    v, info = resolvent_solve(rhs, p, tol=tol, maxiter=maxiter)
    return rhs.inner(v.get(2)).real / (FOUR_PI2 * k2)


def D_truncated_frame_mean(p: ModelParams, k=None, **kw) -> float:
    """Transverse-plane average of the resolvent quadratic form.

    The trace over an orthonormal frame of the plane perpendicular to k
    does not depend on which frame is chosen, at any cutoff."""
    return sum(D_truncated(p, k, alpha=a, **kw)
               for a in range(p.d - 1)) / (p.d - 1)


# ---------------------------------------------------------------------------
# path sums (decoupling structure)
# ---------------------------------------------------------------------------

def walk_paths(a: int, n: int) -> List[Tuple[int, ...]]:
    """Excursions 1 -> 1 of length a with heights in 1..n, touching 1 only
    at the endpoints."""
    if a % 2:
        return []
    out: List[Tuple[int, ...]] = []

    def rec(path):
        h = path[-1]
        step = len(path) - 1
        if step == a:
            if h == 1:
                out.append(tuple(path))
            return
        for dh in (+1, -1):
            nh = h + dh
            lo = 1 if step + 1 == a else 2
            if lo <= nh <= n and abs(nh - 1) <= a - step - 1:
                rec(path + [nh])

    rec([1])
    return out


def path_sum(a: int, p: ModelParams, mode: Tuple, mode_out: Tuple,
             engine: str = "auto", lam_scale: float = 1.0,
             convention: str = "canonical") -> complex:
    """Sum over excursions of the composed half-generator chains.

    mode = (j, t), mode_out = (j', t'): returns
    sum over paths of <sigma_{j',t'}, T^{s_a} ... T^{s_1} sigma_{j,t}>
    in the weighted pairing (equal to the momentum-reflected bilinear
    pairing used in the decoupling statement).  Vanishes unless j' = j
    because every chain preserves the momentum fiber."""
    j, t = np.asarray(mode[0], dtype=int), int(mode[1])
    jp, tp = np.asarray(mode_out[0], dtype=int), int(mode_out[1])
    paths = walk_paths(a, p.n)
    if not paths:
        return 0j
    max_h = max(max(path) for path in paths)
    use_fiber = engine == "fiber" or (engine == "auto" and p.d == 3
                                      and max_h <= 3)
    if not np.array_equal(j, jp):
        return 0j
    acc = 0j
    if use_fiber:
        fib = fb.Fiber3(p, tuple(j), max_degree=max(2, min(max_h, 3)),
                        convention=convention)
        for path in paths:
            v = fib.sigma(t)
            for s in range(1, len(path)):
                sign = +1 if path[s] > path[s - 1] else -1
                v = fb.apply_T_fiber(v, sign, dmax=min(p.n, 3),
                                     lam_scale=lam_scale)
            if v.c1 is not None:
                acc += v.c1[tp]
        return complex(acc)
    sig_out = ChaosKernel.sigma(tuple(jp), tp, convention=convention)
    pl = p if lam_scale == 1.0 else p.with_(lam=p.lam * lam_scale)
    for path in paths:
        v = ChaosKernel.sigma(tuple(j), t, convention=convention)
        for s in range(1, len(path)):
            sign = +1 if path[s] > path[s - 1] else -1
            v = apply_T(sign, v, pl)
        acc += sig_out.inner(v)
    return complex(acc)


# ---------------------------------------------------------------------------
# inequality checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorollaryReport:
    lam_grid: Tuple[float, ...]
    first_order_ok: bool
    first_order_rows: Tuple[Tuple[float, float, float], ...]
    f2_value: float
    f2_stderr: float
    f1_squared: float
    margin: float
    second_order_ok: bool

    @property
    def passed(self) -> bool:
        return self.first_order_ok and self.second_order_ok


def corollary_check(lams: Optional[Sequence[float]] = None,
                    f2: Optional[MCResult] = None,
                    mc_samples: int = 2_000_000,
                    seed: int = 20240) -> CorollaryReport:
    """First-order comparison against the conjectured viscosity and the
    second-order gap that separates the diffusivity from the naive
    replacement fixed point.

    (i)  7 lam^2 / (30 pi) < sqrt(1 + lam^2/pi) - 1 on the grid;
    (ii) the computed second coefficient differs from f1^2 by a margin
         far exceeding the Monte Carlo error."""
    if lams is None:
        lams = np.linspace(0.1, 4.0, 40)
    rows = []
    ok1 = True
    for lam in lams:
        lhs = F1_CLOSED * lam * lam
        rhs = nu_eff(lam) - 1.0
        rows.append((float(lam), lhs, rhs))
        ok1 &= lhs < rhs
    if f2 is None:
        f2 = f2_monte_carlo(samples=mc_samples, seed=seed)
    f1sq = F1_CLOSED ** 2
    margin = abs(f2.value - f1sq)
    ok2 = margin > 10.0 * f2.stderr
    return CorollaryReport(tuple(float(x) for x in lams), ok1, tuple(rows),
                           f2.value, f2.stderr, f1sq, margin, ok2)
