import math

import numpy as np
import pytest

from llnslab.estimators import (EstimatorError, green_kubo, holm_reject,
                                mode_autocorr, ou_marginal_pvalues,
                                stationarity_drift)
from llnslab.simulate import SimConfig, run


def test_green_kubo_zero_coupling_is_zero():
    cfg = SimConfig(d=3, lam=0.0, N=2.5, T=0.2, dt=0.01, ensemble=8, seed=4,
                    estimator_modes=(((0, 0, 1), 0),))
    tr = run(cfg)
    est = green_kubo(tr, (0, 0, 1), 0)
    assert est.value == 0.0 and est.stderr == 0.0


def test_green_kubo_refuses_small_ensemble():
    cfg = SimConfig(d=3, lam=0.1, N=1.5, T=0.05, ensemble=4, seed=4,
                    estimator_modes=(((0, 0, 1), 0),))
    tr = run(cfg)
    with pytest.raises(EstimatorError):
        green_kubo(tr, (0, 0, 1), 0)


def test_green_kubo_unknown_mode():
    cfg = SimConfig(d=3, lam=0.1, N=1.5, T=0.05, ensemble=8, seed=4,
                    estimator_modes=(((0, 0, 1), 0),))
    tr = run(cfg)
    with pytest.raises(EstimatorError):
        green_kubo(tr, (1, 0, 0), 0)


def test_autocorr_zero_coupling():
    cfg = SimConfig(d=3, lam=0.0, N=1.5, T=4.0, dt=0.02, ensemble=128,
                    seed=12, track_all_modes=True, record_stride=1)
    tr = run(cfg)
    est = mode_autocorr(tr, (0, 0, 1))
    assert abs(est.value) <= max(3 * est.stderr, 0.02)


def test_autocorr_requires_tracking():
    cfg = SimConfig(d=3, lam=0.0, N=1.5, T=0.1, dt=0.02, ensemble=8, seed=12)
    tr = run(cfg)
    with pytest.raises(EstimatorError):
        mode_autocorr(tr, (0, 0, 1))


def test_holm_correction():
    assert not holm_reject(np.full(100, 0.5), 0.01)
    ps = np.full(100, 0.6)
    ps[3] = 1e-9
    assert holm_reject(ps, 0.01)


def test_ks_diagnostic_flags_wrong_scale():
    cfg = SimConfig(d=3, lam=0.0, N=1.5, T=4.0, dt=0.1, ensemble=64,
                    seed=6, track_all_modes=True)
    tr = run(cfg)
    ps = ou_marginal_pvalues(tr, spacing=2)
    assert not holm_reject(ps, 0.01)
    # corrupt the scale: the same diagnostic must reject loudly
    tr.tracked = tr.tracked * 1.25
    ps_bad = ou_marginal_pvalues(tr, spacing=2)
    assert holm_reject(ps_bad, 0.01)


@pytest.mark.slow
def test_two_estimator_consistency():
    """Accumulated-integral and autocorrelation-rate estimates agree
    within joint error bars at moderate coupling."""
    cfg = SimConfig(d=3, lam=0.7, N=2.5, T=2.5, dt=5e-4, ensemble=64,
                    seed=31, estimator_modes=(((0, 0, 1), 0),),
                    track_all_modes=True, record_stride=40, threads=2)
    tr = run(cfg)
    gk = green_kubo(tr, (0, 0, 1), 0)
    ac = mode_autocorr(tr, (0, 0, 1))
    joint = math.hypot(gk.stderr, ac.stderr) + 0.01
    assert abs(gk.value - ac.value) <= 3 * joint


@pytest.mark.slow
def test_d2_monotone_coupling_trend():
    """Stronger coupling gives larger measured diffusivity in d=2."""
    vals = []
    for lam in (0.8, 2.4, 4.8):
        cfg = SimConfig(d=2, lam=lam, N=4, T=1.2, dt=1e-3, ensemble=96,
                        seed=55, estimator_modes=(((1, 0), 0),), threads=2)
        tr = run(cfg)
        est = green_kubo(tr, (1, 0), 0)
        vals.append((est.value, est.stderr))
    assert vals[1][0] > vals[0][0]
    assert vals[2][0] > vals[1][0]
