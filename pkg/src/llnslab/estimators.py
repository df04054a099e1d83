"""Statistical estimators of the effective diffusivity from trajectories.

Two estimators with different systematics: the time-integrated convective
pairing (variance growth of the accumulated drift observable, normalised
by the heat kernel) and the decay-rate fit of stationary mode
autocorrelations.  Both are biased at finite cutoff and finite horizon;
the bias is documented, not corrected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .simulate import Trajectory

TWO_PI = 2.0 * math.pi


class EstimatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    detail: dict

    def __str__(self):
        return f"{self.value:.6f} +- {self.stderr:.6f}"


def green_kubo(traj: Trajectory, k: Sequence[int], alpha: int) -> Estimate:
    """Diffusivity from the accumulated convective integral.

    D = E|I(T)|^2 / (2 T (2 pi |k|)^2), member averages with the sample
    standard error over the ensemble.  Refuses ensembles smaller than 8:
    no meaningful error bar."""
    cfg = traj.cfg
    if cfg.ensemble < 8:
        raise EstimatorError("need at least 8 ensemble members for an error bar")
    key = (tuple(int(c) for c in k), int(alpha))
    try:
        e = traj.est_modes.index(key)
    except ValueError:
        raise EstimatorError(f"trajectory did not record the integral for {key}")
    T = float(traj.times[-1])
    I = traj.gk[-1, :, e]
    k2 = float(sum(c * c for c in key[0]))
    scale = 2.0 * T * (TWO_PI ** 2) * k2
    vals = np.abs(I) ** 2 / scale
    return Estimate(float(np.mean(vals)),
                    float(np.std(vals, ddof=1) / math.sqrt(len(vals))),
                    {"members": len(vals), "T": T, "mode": key,
                     "systematics": "finite cutoff and horizon, order tau/T"})


def mode_autocorr(traj: Trajectory, k: Sequence[int],
                  max_lag_fraction: float = 0.5,
                  floor: float = 0.15) -> Estimate:
    """Diffusivity from the decay rate of stationary autocorrelations.

    Fits E[u(t+s) conj(u(t))] ~ C exp(-(1+D)(2 pi |k|)^2 s) in log space,
    over both frame indices, using lags while the correlation stays above
    `floor` times its value at lag zero."""
    if traj.tracked is None:
        raise EstimatorError("trajectory was not run with track_all_modes")
    i = _mode_index(traj, k)
    series = traj.tracked[:, :, i, :]                # (nrec, ens, d-1)
    nrec = series.shape[0]
    max_lag = max(2, int(nrec * max_lag_fraction))
    dt_rec = float(traj.times[1] - traj.times[0])
    corr = []
    for lag in range(max_lag):
        c = np.mean(series[lag:] * np.conj(series[:nrec - lag]))
        corr.append(c.real)
    corr = np.array(corr)
    if corr[0] <= 0 or np.all(corr[1:] <= 0):
        raise EstimatorError("non-positive correlation estimates at all lags")
    keep = corr > floor * corr[0]
    lags = np.arange(max_lag)[keep] * dt_rec
    if len(lags) < 3:
        raise EstimatorError("too few usable lags for a rate fit")
    y = np.log(corr[keep])
    A = np.vstack([np.ones_like(lags), -lags]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    rate = coef[1]
    dof = max(len(lags) - 2, 1)
    sigma2 = float(res[0]) / dof if len(res) else 0.0
    cov = sigma2 * np.linalg.inv(A.T @ A)
    rate_err = math.sqrt(max(cov[1, 1], 0.0))
    k2 = float(sum(int(c) ** 2 for c in k))
    g = (TWO_PI ** 2) * k2
    return Estimate(float(rate / g - 1.0), float(rate_err / g),
                    {"lags": len(lags), "rate": float(rate),
                     "dt_rec": dt_rec, "mode": tuple(int(c) for c in k)})


def _mode_index(traj: Trajectory, k: Sequence[int]) -> int:
    k = np.asarray(k, dtype=np.int64)
    hit = np.flatnonzero(np.all(traj.mode_list == k[None, :], axis=1))
    if len(hit) != 1:
        raise EstimatorError(f"mode {tuple(int(c) for c in k)} not tracked")
    return int(hit[0])


# ---------------------------------------------------------------------------
# distributional and stationarity diagnostics
# ---------------------------------------------------------------------------

def ou_marginal_pvalues(traj: Trajectory, spacing: int = 1) -> np.ndarray:
    """Kolmogorov-Smirnov p-values of Re/Im mode marginals against the
    stationary law (centred normal, variance 1/2), one per (mode, frame
    index, part)."""
    from scipy import stats
    if traj.tracked is None:
        raise EstimatorError("trajectory was not run with track_all_modes")
    samples = traj.tracked[::spacing]
    nrec, ens, m, f = samples.shape
    flat = samples.reshape(nrec * ens, m, f)
    sd = math.sqrt(0.5)
    ps = []
    for i in range(m):
        for a in range(f):
            for part in (flat[:, i, a].real, flat[:, i, a].imag):
                ps.append(stats.kstest(part, "norm", args=(0.0, sd)).pvalue)
    return np.array(ps)


def holm_reject(pvalues: np.ndarray, level: float) -> bool:
    """True if any hypothesis is rejected under Holm's correction."""
    ps = np.sort(np.asarray(pvalues))
    mtests = len(ps)
    for i, pv in enumerate(ps):
        if pv < level / (mtests - i):
            return True
    return False


def stationarity_drift(traj: Trajectory) -> Tuple[float, float]:
    """Slope of the total-energy time series against its standard error.

    Under stationarity the expected per-mode energy is constant; the
    series is the ensemble mean, so successive records decorrelate over a
    mode relaxation time.  Returns (slope, stderr) from ordinary least
    squares on records spaced by at least one relaxation time of the
    slowest mode."""
    t = traj.times
    total = np.sum(traj.energies, axis=(1, 2))
    gamma_min = TWO_PI ** 2 * float(np.min(np.sum(traj.mode_list ** 2, axis=1)))
    spacing = max(1, int(math.ceil(1.0 / gamma_min / max(np.diff(t).min(), 1e-12))))
    ts, ys = t[::spacing], total[::spacing]
    if len(ts) < 4:
        raise EstimatorError("too few decorrelated records for a drift test")
    A = np.vstack([np.ones_like(ts), ts]).T
    coef, res, *_ = np.linalg.lstsq(A, ys, rcond=None)
    dof = max(len(ts) - 2, 1)
    sigma2 = float(res[0]) / dof if len(res) else 0.0
    cov = sigma2 * np.linalg.inv(A.T @ A)
    return float(coef[1]), math.sqrt(max(cov[1, 1], 0.0))
