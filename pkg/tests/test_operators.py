import math

import numpy as np
import pytest

from llnslab.chaos import ChaosKernel, sym_pair
from llnslab.checks import random_kernel
from llnslab.operators import (apply_Aminus, apply_Aplus, apply_L0_power,
                               apply_momentum, apply_number, apply_T)
from llnslab.params import ModelParams
from oracles import aminus_literal, aplus_literal, fiber_tuples

TWO_PI2 = (2 * math.pi) ** 2


# ---------------------------------------------------------------------------
# diagonal operators
# ---------------------------------------------------------------------------

def test_l0_single_mode():
    s = ChaosKernel.sigma((1, 0, 0), 0)
    out = apply_L0_power(s, 1.0)
    for key, v in out.data.items():
        assert abs(v - TWO_PI2 * s.data[key]) <= 1e-14


def test_l0_two_mode_weight():
    f = sym_pair(ChaosKernel.sigma((1, 0, 0), 0),
                 ChaosKernel.sigma((0, 1, 0), 0))
    out = apply_L0_power(f, 1.0)
    for key, v in out.data.items():
        assert abs(v - 2.0 * TWO_PI2 * f.data[key]) <= 1e-14


def test_l0_exponent_algebra(rng):
    p = ModelParams(3, 1.0, 1.5)
    f = random_kernel(p, 2, rng)
    back = apply_L0_power(apply_L0_power(f, -0.5), 0.5)
    for key, v in f.data.items():
        assert abs(back.data[key] - v) <= 1e-14 * max(1.0, abs(v))


def test_momentum_fiber_scalar():
    s = ChaosKernel.sigma((2, -1, 3), 0)
    for axis, expect in ((0, 2), (1, -1), (2, 3)):
        out = apply_momentum(s, axis)
        for key, v in out.data.items():
            assert v == expect * s.data[key]


def test_momentum_commutes_with_l0(rng):
    p = ModelParams(2, 1.0, 3)
    f = random_kernel(p, 2, rng)
    a = apply_momentum(apply_L0_power(f, 1.0), 0)
    b = apply_L0_power(apply_momentum(f, 0), 1.0)
    for key in set(a.data) | set(b.data):
        assert abs(a.data.get(key, 0j) - b.data.get(key, 0j)) <= 1e-12


def test_number_operator(rng):
    p = ModelParams(3, 1.0, 1.5)
    f = random_kernel(p, 3, rng)
    out = apply_number(f)
    assert all(out.data[k] == 3.0 * v for k, v in f.data.items())


# ---------------------------------------------------------------------------
# raising / lowering: degenerate degrees
# ---------------------------------------------------------------------------

def test_aplus_kills_degree_zero():
    p = ModelParams(3, 1.0, 1.5)
    vac = ChaosKernel(3, 0, {(): 1.0 + 0j})
    assert not apply_Aplus(vac, p).data


def test_aminus_kills_degree_one():
    p = ModelParams(3, 1.0, 1.5)
    assert not apply_Aminus(ChaosKernel.sigma((1, 0, 0), 0), p).data


# ---------------------------------------------------------------------------
# literal-formula oracles
# ---------------------------------------------------------------------------

def test_aplus_matches_literal_formula_d3():
    """Every coefficient on the full degree-2 fiber at cutoff 2.5 equals a
    hand-rolled evaluation of the raising formula."""
    p = ModelParams(3, 1.0, 2.5, n=3)
    sig = ChaosKernel.sigma((1, 0, 0), 0)
    out = apply_Aplus(sig, p)
    lit = aplus_literal(sig, p, fiber_tuples(p, (1, 0, 0), 2))
    keys = set(out.data) | set(lit)
    assert keys
    for key in keys:
        assert abs(out.data.get(key, 0j) - lit.get(key, 0j)) <= 1e-13
    # frozen probe value from the literal evaluation
    probe = (((-1, -2, -2), 1), ((2, 2, 2), 0))
    assert abs(lit[probe] - 0.8830745125152091j) <= 1e-12


def test_aplus_matches_literal_formula_d2():
    p = ModelParams(2, 0.9, 2, n=3)
    sig = ChaosKernel.sigma((1, 1), 0)
    out = apply_Aplus(sig, p)
    lit = aplus_literal(sig, p, fiber_tuples(p, (1, 1), 2))
    for key in set(out.data) | set(lit):
        assert abs(out.data.get(key, 0j) - lit.get(key, 0j)) <= 1e-13


def test_aminus_matches_literal_formula():
    p = ModelParams(3, 1.0, 2.5, n=3)
    g2 = apply_Aplus(ChaosKernel.sigma((1, 0, 0), 0), p)
    down = apply_Aminus(g2, p)
    lit = aminus_literal(g2, p, fiber_tuples(p, (1, 0, 0), 1))
    for key in set(down.data) | set(lit):
        assert abs(down.data.get(key, 0j) - lit.get(key, 0j)) <= 1e-11


def test_fiber_exhaustive_small_instances():
    """Operator outputs match the literal formulas on every tuple of
    fibers below 500 entries, both halves, both dimensions."""
    cases = [(ModelParams(3, 1.0, 1.5, n=3), (0, 0, 1)),
             (ModelParams(2, 1.0, 2, n=3), (1, 0))]
    for p, K in cases:
        sig = ChaosKernel.sigma(K, 0)
        t2 = fiber_tuples(p, K, 2)
        assert len(t2) <= 500
        up = apply_Aplus(sig, p)
        lit = aplus_literal(sig, p, t2)
        for key in set(up.data) | set(lit):
            assert abs(up.data.get(key, 0j) - lit.get(key, 0j)) <= 1e-13
        down = apply_Aminus(up, p)
        lit2 = aminus_literal(up, p, fiber_tuples(p, K, 1))
        for key in set(down.data) | set(lit2):
            assert abs(down.data.get(key, 0j) - lit2.get(key, 0j)) <= 1e-12


# ---------------------------------------------------------------------------
# structural invariants
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("p,K", [(ModelParams(2, 0.8, 3), (1, 0)),
                                 (ModelParams(3, 1.1, 1.5), (0, 1, 1))])
def test_adjointness_random_suite(p, K, rng):
    for n in (1, 2, 3, 4):
        f = random_kernel(p, n, rng, momentum=K)
        g = apply_Aplus(f, p) * (0.6 - 0.8j) \
            + random_kernel(p, n + 1, rng, momentum=K)
        lhs = apply_Aplus(f, p).inner(g)
        rhs = -f.inner(apply_Aminus(g, p))
        assert abs(lhs) > 1e-8          # pairings must be live
        assert abs(lhs - rhs) <= 1e-11 * max(abs(lhs), abs(rhs), 1e-12)


@pytest.mark.parametrize("p", [ModelParams(2, 1.0, 3), ModelParams(3, 1.0, 1.5)])
def test_momentum_commutation(p, rng):
    for n in (1, 2):
        f = random_kernel(p, n, rng)
        scale = max(abs(v) for v in f.data.values())
        for op in (apply_Aplus, apply_Aminus):
            for axis in range(p.d):
                a = op(apply_momentum(f, axis), p)
                b = apply_momentum(op(f, p), axis)
                diff = a - b
                defect = max((abs(v) for v in diff.data.values()), default=0.0)
                assert defect <= 1e-12 * scale


def test_outputs_divergence_free_and_momentum(rng):
    p = ModelParams(3, 1.0, 1.5)
    sig = ChaosKernel.sigma((0, 0, 1), 0)
    up = apply_Aplus(sig, p)
    assert up.divergence_defect() <= 1e-12
    assert up.check_momentum()
    up2 = apply_Aplus(up, p)
    assert up2.divergence_defect() <= 1e-12
    down = apply_Aminus(up2, p)
    assert down.divergence_defect() <= 1e-12


def test_skew_hermitian(rng):
    from llnslab.stack import KernelStack, apply_A_projected
    p = ModelParams(3, 1.0, 1.5, n=4)
    f2 = random_kernel(p, 2, rng, momentum=(0, 1, 1))
    f3 = apply_Aplus(f2, p) * (0.4 + 0.6j) \
        + random_kernel(p, 3, rng, momentum=(0, 1, 1))
    st = KernelStack(3, {2: f2, 3: f3})
    val = st.inner(apply_A_projected(st, p, 2, 4))
    assert abs(val.imag) > 1e-8            # live cross terms
    assert abs(val.real) <= 1e-12 * st.norm() ** 2


def test_t_skew_pairing(rng):
    p = ModelParams(3, 0.9, 1.5)
    f = random_kernel(p, 1, rng, momentum=(0, 0, 1))
    g = apply_T(+1, f, p) * (0.3 + 0.9j) \
        + random_kernel(p, 2, rng, momentum=(0, 0, 1))
    lhs = apply_T(+1, f, p).inner(g)
    rhs = -f.inner(apply_T(-1, g, p))
    assert abs(lhs) > 1e-8
    assert abs(lhs - rhs) <= 1e-11 * max(abs(lhs), 1e-12)


def test_lowering_vanishes_with_cutoff_d2():
    """Weighted norm of the lowering half on a fixed smooth kernel decays
    as the d=2 cutoff doubles (the attenuation shrinks while the finite
    convolution saturates)."""
    f = sym_pair(ChaosKernel.sigma((1, 0), 0), ChaosKernel.sigma((1, 1), 0))
    vals = []
    for N in (4, 8, 16):
        p = ModelParams(2, 1.0, N)
        g = apply_L0_power(apply_Aminus(f, p), -0.5)
        vals.append(g.norm())
    assert vals[0] > 0
    assert vals[1] < vals[0] and vals[2] < vals[1]


def test_sector_bound_with_fitted_constant(rng):
    """One constant serves the whole randomized suite once fitted."""
    ratios = []
    for p in (ModelParams(3, 0.7, 1.5), ModelParams(3, 0.7, 2.5)):
        for n in (1, 2):
            for _ in range(3):
                f = random_kernel(p, n, rng)
                den = p.lam ** 2 * n * apply_L0_power(f, 0.5).norm() ** 2
                for op in (apply_Aplus, apply_Aminus):
                    num = apply_L0_power(op(f, p), -0.5).norm() ** 2
                    ratios.append(num / den)
    C = max(ratios)
    assert C < 10.0                      # desk-scale magnitude sanity
    assert all(r <= C * (1 + 1e-12) for r in ratios)
