import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from llnslab.chaos import ChaosKernel, canonical, multiplicity, sym_pair
from llnslab.params import ModelParams
from oracles import brute_force_inner


def test_sigma_orthonormality():
    s = ChaosKernel.sigma((1, 0, 0), 0)
    assert abs(s.inner(s) - 1.0) <= 1e-14
    s2 = ChaosKernel.sigma((1, 0, 0), 1)
    assert abs(s.inner(s2)) <= 1e-14
    t = ChaosKernel.sigma((0, 1, 0), 0)
    assert abs(s.inner(t)) <= 1e-14


def test_sigma_divergence_free():
    for k in ((1, 0, 0), (1, 2, 3), (2, -1)):
        s = ChaosKernel.sigma(k, 0)
        assert s.divergence_defect() <= 1e-14


def test_sigma_momentum():
    s = ChaosKernel.sigma((2, -1, 3), 1)
    assert s.momentum == (2, -1, 3)
    assert s.check_momentum()


def test_sym_pair_same_mode():
    s = ChaosKernel.sigma((1, 0, 0), 0)
    f = sym_pair(s, s)
    assert abs(f.inner(f) - 2.0) <= 1e-14      # 2! on a pure square


def test_sym_pair_distinct_modes():
    f = sym_pair(ChaosKernel.sigma((1, 0, 0), 0),
                 ChaosKernel.sigma((0, 1, 0), 0))
    assert abs(f.inner(f) - 1.0) <= 1e-14      # symmetrisation halves


def test_sym_pair_commutes():
    a = ChaosKernel.sigma((1, 2), 0)
    b = ChaosKernel.sigma((0, 3), 0)
    ab, ba = sym_pair(a, b), sym_pair(b, a)
    assert set(ab.data) == set(ba.data)
    for key in ab.data:
        assert abs(ab.data[key] - ba.data[key]) <= 1e-15


def test_inner_conjugate_symmetry(rng):
    f = _random_sparse(rng, d=3, n=2)
    g = _random_sparse(rng, d=3, n=2)
    assert abs(f.inner(g) - np.conj(g.inner(f))) <= 1e-12


def test_mixed_degree_pairs_to_zero():
    f = ChaosKernel.sigma((1, 0), 0)
    g = sym_pair(f, f)
    assert f.inner(g) == 0j


def test_multiplicity():
    legs = canonical((((1, 0), 0), ((1, 0), 0)))
    assert multiplicity(legs) == 1
    legs = canonical((((1, 0), 0), ((0, 1), 0)))
    assert multiplicity(legs) == 2
    legs = canonical((((1, 0), 0), ((0, 1), 0), ((0, 1), 0)))
    assert multiplicity(legs) == 3


def _random_sparse(rng, d, n, entries=25, box=3):
    data = {}
    for _ in range(entries):
        legs = []
        for _ in range(n):
            k = tuple(int(c) for c in rng.integers(-box, box + 1, size=d))
            if not any(k):
                k = (1,) + (0,) * (d - 1)
            legs.append((k, int(rng.integers(0, d))))
        data[canonical(legs)] = complex(rng.standard_normal(),
                                        rng.standard_normal())
    return ChaosKernel(d, n, data)


@pytest.mark.parametrize("d,n", [(2, 2), (3, 2), (3, 3)])
def test_inner_matches_brute_force(d, n, rng):
    """Multiplicity bookkeeping against the full permutation expansion."""
    for _ in range(4):
        f = _random_sparse(rng, d, n)
        g = _random_sparse(rng, d, n)
        ref = brute_force_inner(f, g)
        val = f.inner(g)
        assert abs(val - ref) <= 1e-11 * max(1.0, abs(ref))
        assert f.inner(f).real >= 0.0


def test_algebra_ops(rng):
    f = _random_sparse(rng, 2, 2)
    g = _random_sparse(rng, 2, 2)
    h = f + g * 2.0 - f
    for key in set(f.data) | set(g.data):
        expect = 2.0 * g.data.get(key, 0j)
        assert abs(h.data.get(key, 0j) - expect) <= 1e-14


def test_snapshot_roundtrip(tmp_path, rng):
    f = _random_sparse(rng, 3, 2)
    f.momentum = None
    path = tmp_path / "kern.csv"
    f.to_csv(path, meta={"N": 2.5, "lambda": 0.7})
    g, head = ChaosKernel.from_csv(path)
    assert head["N"] == 2.5 and head["lambda"] == 0.7
    assert set(g.data) == set(f.data)
    for key, v in f.data.items():
        assert g.data[key] == v          # exact round trip through repr


@given(st.integers(0, 2 ** 63 - 1))
@settings(max_examples=25, deadline=None)
def test_snapshot_value_exactness(bits):
    """Shortest-decimal serialisation is value-exact for doubles."""
    x = np.uint64(bits).view(np.float64)
    if not np.isfinite(x):
        return
    assert float(repr(float(x))) == float(x)
