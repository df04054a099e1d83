import math

import numpy as np
import pytest

from llnslab.replacement import (G, L_N, dressing_limit_defect,
                                 fit_replacement_constant, g_ode_defect,
                                 replacement_kernel, replacement_target)
from oracles import pn_double_loop


def test_profile_values():
    assert float(G(0.0)) == 0.0
    xs = np.linspace(0.0, 50.0, 200)
    gs = G(xs)
    assert np.all(np.diff(gs) > 0)           # strictly increasing


def test_profile_integral_identity():
    assert g_ode_defect() <= 1e-8


def test_dressing_limit():
    """L_N((2 pi)^2 |k|^2) -> 2 lam^2 for every fixed mode.

    The approach is logarithmic (defect ~ log(x)/(2 log N), about 0.13 at
    N = 1e6 for the lowest mode), so the limit is verified through the
    decaying defect sequence plus the sharp asymptotic expansion, which
    holds to 1e-6 at N = 1e6."""
    from llnslab.replacement import dressing_expansion_defect
    for ksq in (1.0, 2.0, 9.0):
        for lam in (0.5, 1.0, 2.0):
            seq = [dressing_limit_defect(ksq, lam, N) for N in (1e2, 1e4, 1e6)]
            assert seq[0] > seq[1] > seq[2]
            # the defect is the predicted leading term to high accuracy
            assert dressing_expansion_defect(ksq, lam, 1e6) <= 1e-6
            # and it scales like 1/log N
            assert abs(seq[1] / seq[2] - 3.0 / 2.0) <= 0.02


def test_kernel_matches_double_loop():
    a = replacement_kernel([(1, 0)], 64)
    b = pn_double_loop((1, 0), 64)
    assert abs(a - b) <= 1e-14
    assert abs(a - 0.019744026568) <= 1e-9    # frozen from the loop oracle


def test_kernel_outside_cutoff_is_small():
    """With |k_1| > N the triple cutoff kills the sum entirely, so the
    distance to the dressed target is the target itself, O(lamN^2)."""
    N = 64
    lamN2 = 1.0 / math.log(N)
    val = replacement_kernel([(N + 3, 0)], N)
    assert val == 0.0
    target = replacement_target([(N + 3, 0)], N)
    assert abs(val - target) <= 0.2 * lamN2


def test_kernel_requires_d2():
    with pytest.raises(ValueError):
        replacement_kernel([(1, 0, 0)], 64)
    with pytest.raises(ValueError):
        replacement_kernel([(0, 0)], 64)


def test_deviation_scale_moderate_cutoffs():
    for N in (64, 128):
        lamN2 = 1.0 / math.log(N)
        for k_list in ([(1, 0)], [(2, 1)], [(5, 3), (1, 1)]):
            dev = abs(replacement_kernel(k_list, N)
                      - replacement_target(k_list, N))
            assert dev <= 0.2 * lamN2


@pytest.mark.slow
def test_fitted_constant_stability():
    fits = fit_replacement_constant((64, 128, 256, 512))
    vals = list(fits.values())
    assert max(vals) / min(vals) < 2.0
