"""Spectral Galerkin simulation of the truncated, rescaled dynamics.

State lives in frame coordinates u_{k,alpha} on the positive half of the
cutoff lattice; the negative modes follow from reality, incompressibility
is structural, and the zero mode never exists.  Time stepping is
exponential Euler: the Ornstein-Uhlenbeck part (heat semigroup plus
conservative noise) is integrated exactly, so at zero coupling the white
noise invariant measure is preserved without discretisation bias, and
the convective term enters explicitly,

    u' = exp(-gamma dt) (u - dt * lambda_N * B(u)) + eta,
    E|eta|^2 = 1 - exp(-2 gamma dt),      gamma = (2 pi |k|)^2.

Noise is counter-based: every step draws from a fresh Philox stream
keyed by (seed, stream tag, step index), so trajectories are bitwise
reproducible regardless of how the ensemble is partitioned (the single
declared partition evaluates all members in one array).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple


import numpy as np
from scipy import fft as sfft

from .basis import frame_table
from .params import ModelParams, default_norm, lattice_box

TWO_PI = 2.0 * math.pi


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Run configuration; `estimator_modes` are (k, alpha) pairs whose
    time-integrated convective pairing and trajectory are recorded."""

    d: int
    lam: float
    N: float
    T: float
    dt: Optional[float] = None
    ensemble: int = 16
    seed: int = 0
    record_stride: int = 1
    estimator_modes: Tuple[Tuple[Tuple[int, ...], int], ...] = ()
    track_all_modes: bool = False
    mollifier_norm: str = ""
    conv: str = "auto"            # 'auto' | 'fft' | 'direct'
    threads: int = 1              # declared partition; part of the
                                  # determinism contract, always 1 here

    def params(self) -> ModelParams:
        # n is irrelevant for the simulator; the smallest legal value
        return ModelParams(self.d, self.lam, self.N, 2,
                           self.mollifier_norm or default_norm(self.d))

    @property
    def step_size(self) -> float:
        return self.dt if self.dt is not None else 0.1 / (TWO_PI * self.N) ** 2


REQUIRED_CONFIG_FIELDS = ("d", "lam", "N", "T")


def config_from_dict(doc: dict) -> SimConfig:
    """Validate a JSON-style document; missing fields are named."""
    for name in REQUIRED_CONFIG_FIELDS:
        if name not in doc:
            raise KeyError(f"config field '{name}' is required")
    known = {f for f in SimConfig.__dataclass_fields__}
    unknown = set(doc) - known
    if unknown:
        raise KeyError(f"unknown config fields: {sorted(unknown)}")
    doc = dict(doc)
    if "estimator_modes" in doc:
        doc["estimator_modes"] = tuple(
            (tuple(int(c) for c in k), int(a)) for k, a in doc["estimator_modes"])
    return SimConfig(**doc)


# ---------------------------------------------------------------------------
# mode bookkeeping
# ---------------------------------------------------------------------------

class ModeSet:
    """Positive-half cutoff modes, frames and FFT scatter indices."""

    def __init__(self, cfg: SimConfig):
        p = cfg.params()
        self.p = p
        d = p.d
        pts = lattice_box(d, p.box_radius)
        pts = pts[np.asarray(p.in_cutoff(pts))]
        pos = []
        for k in pts:
            for c in k:
                if c != 0:
                    if c > 0:
                        pos.append(k)
                    break
        self.kpos = np.array(sorted(tuple(k) for k in pos), dtype=np.int64)
        self.nmodes = len(self.kpos)
        self.frames = frame_table(self.kpos)                  # (m, d-1, d)
        self.gamma = (TWO_PI ** 2) * np.sum(self.kpos.astype(float) ** 2, axis=1)
        self.kfloat = self.kpos.astype(float)

        # padded grid (no aliasing for quadratic products)
        M = p.box_radius
        self.G = sfft.next_fast_len(3 * M + 2)
        self.grid_idx = tuple(np.mod(self.kpos[:, i], self.G) for i in range(d))
        self.grid_idx_neg = tuple(np.mod(-self.kpos[:, i], self.G) for i in range(d))

    def index_of(self, k: Sequence[int]) -> int:
        k = np.asarray(k, dtype=np.int64)
        hit = np.flatnonzero(np.all(self.kpos == k[None, :], axis=1))
        if len(hit) != 1:
            raise KeyError(f"mode {tuple(int(c) for c in k)} not stored "
                           "(only positive-half modes inside the cutoff)")
        return int(hit[0])

    # -- representation changes -------------------------------------------
    def components(self, u: np.ndarray) -> np.ndarray:
        """Frame coefficients (ens, m, d-1) -> component table (ens, m, d)."""
        return np.einsum('emf,mfl->eml', u, self.frames)

    def to_grid(self, u: np.ndarray) -> np.ndarray:
        """Scatter positive modes and their conjugates onto the FFT grid."""
        ens = u.shape[0]
        d = self.p.d
        comp = self.components(u)
        shape = (ens, d) + (self.G,) * d
        grid = np.zeros(shape, dtype=complex)
        for l in range(d):
            grid[(slice(None), l) + self.grid_idx] = comp[:, :, l]
            grid[(slice(None), l) + self.grid_idx_neg] = np.conj(comp[:, :, l])
        return grid


# ---------------------------------------------------------------------------
# convective term
# ---------------------------------------------------------------------------

def nonlinearity(u: np.ndarray, modes: ModeSet, conv: str = "auto",
                 workers: int = 1) -> np.ndarray:
    """Frame coefficients of the projected convective term.

    Strong form at a stored mode k:
      Bhat(k) = 2 pi i * rho(k) P(k) sum_{k1+k2=k} rho(k1) rho(k2)
                 (k . uhat(k1)) uhat(k2),
    returned as B_{k,alpha} = a_{k,alpha} . Bhat(k), shape like u."""
    mode = conv
    if mode == "auto":
        mode = "fft"
    if mode == "fft":
        return _nonlinearity_fft(u, modes, workers)
    if mode == "direct":
        return _nonlinearity_direct(u, modes)
    raise ValueError(f"unknown convolution mode {conv!r}")


def _nonlinearity_fft(u: np.ndarray, modes: ModeSet,
                      workers: int = 1) -> np.ndarray:
    d = modes.p.d
    G = modes.G
    grid = modes.to_grid(u)                       # modes are already mollified
    phys = sfft.ifftn(grid, axes=tuple(range(2, 2 + d)), workers=workers)
    # pairwise products uhat_m * uhat_l, gathered at the stored modes only
    idx = (slice(None),) + modes.grid_idx
    prods: Dict[Tuple[int, int], np.ndarray] = {}
    for m in range(d):
        for l in range(m, d):
            c = sfft.fftn(phys[:, m] * phys[:, l],
                          axes=tuple(range(1, 1 + d)), workers=workers) * (G ** d)
            prods[(m, l)] = c[idx]
    kf = modes.kfloat
    w = np.zeros((u.shape[0], modes.nmodes, d), dtype=complex)
    for l in range(d):
        acc = 0j
        for m in range(d):
            acc = acc + kf[None, :, m] * prods[(min(m, l), max(m, l))]
        w[:, :, l] = acc
    # Leray projection and frame contraction: a_{k,alpha} . P(k) w = a . w
    return TWO_PI * 1j * np.einsum('mfl,eml->emf', modes.frames, w)


def _nonlinearity_direct(u: np.ndarray, modes: ModeSet) -> np.ndarray:
    """Exact mode-pair sum; O(modes^2), for cross-checking the fast path."""
    d = modes.p.d
    comp = modes.components(u)                     # (ens, m, d)
    ens = u.shape[0]
    kall = np.vstack([modes.kpos, -modes.kpos])
    call = np.concatenate([comp, np.conj(comp)], axis=1)   # (ens, 2m, d)
    out = np.zeros((ens, modes.nmodes, d - 1), dtype=complex)
    kf = modes.kfloat
    index = {tuple(int(c) for c in k): i for i, k in enumerate(kall)}
    for i, k in enumerate(modes.kpos):
        acc = np.zeros((ens, d), dtype=complex)
        for i1, k1 in enumerate(kall):
            k2 = k - k1
            j = index.get(tuple(int(c) for c in k2))
            if j is None:
                continue
            acc += (call[:, i1, :] @ kf[i])[:, None] * call[:, j, :]
        out[:, i, :] = TWO_PI * 1j * np.einsum('fl,el->ef', modes.frames[i], acc)
    return out


# ---------------------------------------------------------------------------
# noise streams and stepping
# ---------------------------------------------------------------------------

def _stream(seed: int, tag: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(
        key=np.uint64(seed), counter=[0, 0, np.uint64(tag), np.uint64(index)]))


def sample_invariant_state(cfg: SimConfig, modes: Optional[ModeSet] = None,
                           tag: int = 0) -> np.ndarray:
    """Independent complex Gaussians with E|u_{k,alpha}|^2 = 1."""
    modes = modes or ModeSet(cfg)
    g = _stream(cfg.seed, tag, 0)
    z = g.standard_normal((cfg.ensemble, modes.nmodes, cfg.d - 1, 2))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)


def step(u: np.ndarray, cfg: SimConfig, modes: ModeSet, step_index: int,
         decay: np.ndarray, noise_scale: np.ndarray,
         b: Optional[np.ndarray] = None) -> np.ndarray:
    """One exponential Euler update with the step's own noise stream.

    `b` may carry a precomputed convective term for this state (the
    driver shares it with the running estimator integrals)."""
    lamN = cfg.params().lambda_N
    if cfg.lam != 0.0:
        if b is None:
            b = nonlinearity(u, modes, cfg.conv, cfg.threads)
        drift = u - cfg.step_size * lamN * b
    else:
        drift = u
    g = _stream(cfg.seed, 1, step_index)
    z = g.standard_normal((cfg.ensemble, modes.nmodes, cfg.d - 1, 2))
    eta = (z[..., 0] + 1j * z[..., 1]) * noise_scale[None, :, None]
    return decay[None, :, None] * drift + eta


@dataclass
class Trajectory:
    cfg: SimConfig
    times: np.ndarray                 # (nrec,)
    energies: np.ndarray              # (nrec, m, d-1) ensemble means of |u|^2
    gk: np.ndarray                    # (nrec, ens, n_est) running integrals
    tracked: Optional[np.ndarray]     # (nrec, ens, m, d-1) if track_all_modes
    mode_list: np.ndarray             # (m, d)
    est_modes: Tuple[Tuple[Tuple[int, ...], int], ...]

    def write_csv(self, path):
        """Stream observables as (time, observable id, re, im) records."""
        with open(path, "w") as fh:
            fh.write("time,observable,re,im\n")
            for r, t in enumerate(self.times):
                ts = repr(float(t))
                for i, k in enumerate(self.mode_list):
                    ks = " ".join(str(int(c)) for c in k)
                    for a in range(self.energies.shape[2]):
                        fh.write(f"{ts},energy:{ks}:{a},"
                                 f"{self.energies[r, i, a]!r},0.0\n")
                for e, (k, a) in enumerate(self.est_modes):
                    ks = " ".join(str(int(c)) for c in k)
                    for j in range(self.gk.shape[1]):
                        v = self.gk[r, j, e]
                        fh.write(f"{ts},gk:{ks}:{a}:{j},{v.real!r},{v.imag!r}\n")
        return path


def run(cfg: SimConfig) -> Trajectory:
    """Integrate the ensemble; deterministic for fixed (seed, partition)."""
    modes = ModeSet(cfg)
    p = modes.p
    dt = cfg.step_size
    nsteps = int(round(cfg.T / dt))
    decay = np.exp(-modes.gamma * dt)
    noise_scale = np.sqrt((1.0 - np.exp(-2.0 * modes.gamma * dt)) / 2.0)
    est_idx = [(modes.index_of(k), a) for k, a in cfg.estimator_modes]
    lamN = p.lambda_N

    u = sample_invariant_state(cfg, modes)
    integral = np.zeros((cfg.ensemble, len(est_idx)), dtype=complex)

    times: List[float] = []
    energies: List[np.ndarray] = []
    gk: List[np.ndarray] = []
    tracked: List[np.ndarray] = []

    def record(t):
        times.append(t)
        energies.append(np.mean(np.abs(u) ** 2, axis=0))
        gk.append(integral.copy())
        if cfg.track_all_modes:
            tracked.append(u.copy())

    record(0.0)
    for s in range(nsteps):
        b = None
        if cfg.lam != 0.0:
            b = nonlinearity(u, modes, cfg.conv, cfg.threads)
            for e, (i, a) in enumerate(est_idx):
                integral[:, e] += dt * lamN * b[:, i, a]
        u = step(u, cfg, modes, s, decay, noise_scale, b)
        if not np.all(np.isfinite(u.view(float))):
            raise SimulationError(
                f"state blew up at t={(s + 1) * dt:.6g} "
                f"(max |u| = {np.nanmax(np.abs(u)):.3e})")
        if (s + 1) % cfg.record_stride == 0 or s + 1 == nsteps:
            record((s + 1) * dt)

    return Trajectory(cfg, np.array(times), np.array(energies), np.array(gk),
                      np.array(tracked) if cfg.track_all_modes else None,
                      modes.kpos.copy(), tuple(cfg.estimator_modes))
