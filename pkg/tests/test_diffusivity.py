import math

import numpy as np
import pytest

from llnslab import diffusivity as dv
from llnslab.basis import frame_directions, leray_matrix
from llnslab.params import ModelParams
from llnslab.replacement import G

PI = math.pi


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def test_d2_closed_form_values():
    assert dv.d2_effective_D(0.0) == 0.0
    lam = math.sqrt(24 * PI)
    assert abs(dv.d2_effective_D(lam) - 1.0) <= 1e-12


def test_d2_equals_profile_chain():
    for lam in np.linspace(0.1, 10.0, 34):
        assert abs(dv.d2_effective_D(lam) - float(G(2 * lam * lam))) <= 1e-12


def test_d2_strictly_increasing():
    lams = np.linspace(0.0, 10.0, 101)
    vals = [dv.d2_effective_D(l) for l in lams]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_fixed_point_identity():
    for c in (0.05, 7 / (30 * PI), 1.3):
        for lam in (0.3, 1.0, 4.0):
            x = dv.D_rep(c, lam)
            assert abs(x * (1 + x) - c * lam * lam) <= 1e-14
    assert dv.D_rep(0.77, 0.0) == 0.0


def test_d_rep_value():
    assert abs(dv.D_rep(7 / (30 * PI), 1.0) - 0.069449) <= 5e-7


def test_d2_replacement_chain_equals_closed_form():
    """The d=2 replacement value sqrt(2 c lam^2 + 1) - 1 with
    c = 1/(16 pi) is the closed form itself."""
    c = 1.0 / (16 * PI)
    for lam in (0.2, 1.0, 3.3):
        chain = math.sqrt(2 * c * lam * lam + 1) - 1
        assert abs(chain - dv.d2_effective_D(lam)) <= 1e-14


# ---------------------------------------------------------------------------
# first coefficient
# ---------------------------------------------------------------------------

def test_f1_quadrature_matches_closed_form():
    v, err = dv.f1_quadrature()
    assert abs(v - dv.F1_CLOSED) <= 1e-6
    assert abs(dv.F1_CLOSED - 0.0742722) <= 1e-6   # quoted at 7 digits


def test_f1_lattice_extrapolation():
    a = dv.f1_lattice(24.5)
    b = dv.f1_lattice(48.5)
    extr = dv.richardson2(a, 24.5, b, 48.5)
    assert abs(extr - dv.F1_CLOSED) / dv.F1_CLOSED <= 5e-3


def test_f1_lattice_frame_index_free_on_axis():
    # both frame indices give the same sum at an axis momentum
    assert abs(dv.f1_lattice(8.5, (0, 0, 1), 0)
               - dv.f1_lattice(8.5, (0, 0, 1), 1)) <= 1e-15


# ---------------------------------------------------------------------------
# second coefficient
# ---------------------------------------------------------------------------

def test_sampler_volume_self_check():
    """The importance sampler, fed a constant integrand, reproduces the
    volume of the constraint region measured by plain rejection."""
    ref = dv.integration_region_volume("euclid", samples=600_000, seed=3)
    vol, err = _importance_volume("euclid", samples=600_000, seed=4)
    assert abs(vol - ref) <= 4 * (err + ref / math.sqrt(600_000 / 4))


def _importance_volume(norm, samples, seed):
    rng = np.random.default_rng(seed)
    R = math.sqrt(2.0) if norm == "euclid" else math.sqrt(6.0)
    area5 = PI ** 3
    vals = []
    batch = 150_000
    done = 0
    while done < samples:
        g = rng.standard_normal((batch, 6))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = R * np.sqrt(rng.uniform(0, 1, batch))
        x = g * r[:, None]
        x1, x2 = x[:, :3], x[:, 3:]
        if norm == "euclid":
            ok = (np.sum(x1 ** 2, 1) <= 1) & (np.sum(x2 ** 2, 1) <= 1) \
                & (np.sum((x1 + x2) ** 2, 1) <= 1)
        else:
            ok = (np.max(np.abs(x1), 1) <= 1) & (np.max(np.abs(x2), 1) <= 1) \
                & (np.max(np.abs(x1 + x2), 1) <= 1)
        w = 0.5 * area5 * R * R * r ** 4
        vals.append(np.mean(np.where(ok, w, 0.0)))
        done += batch
    vals = np.array(vals)
    return float(np.mean(vals)), float(np.std(vals) / math.sqrt(len(vals)))


def test_f2_integrand_frame_contraction_identity(rng):
    """Summing the frame indices is the same as contracting each leg with
    its transverse projection; the integrand cannot see the frame choice."""
    m = 200
    x1 = rng.uniform(-1, 1, (m, 3))
    x2 = rng.uniform(-1, 1, (m, 3))
    k = np.array([0.0, 0.0, 1.0])
    ak1 = np.array([1.0, 0.0, 0.0])
    ref = dv._f2_integrand(x1, x2, k, ak1)
    alt = _contracted_integrand(x1, x2, k, ak1)
    assert np.max(np.abs(ref - alt)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


def _contracted_integrand(x1, x2, k, ak1):
    import itertools
    x3 = -(x1 + x2)
    xs = [x1, x2, x3]

    def leray_all(x):
        n = len(x)
        M = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
        M -= x[:, :, None] * x[:, None, :] / np.sum(x * x, 1)[:, None, None]
        return M

    Ms = [leray_all(x) for x in xs]

    def c_tensor(a, b, c):
        s = a + b
        D = np.sum(s * s, 1) + np.sum(c * c, 1)
        Ps = leray_all(s)
        Psk = np.einsum('mij,j->mi', Ps, k)
        Psa = np.einsum('mij,j->mi', Ps, ak1)
        t = (np.einsum('mp,r->mpr', Psk, ak1) + np.einsum('mp,r->mpr', Psa, k))
        return np.einsum('mq,mpr->mpqr', a, t) / D[:, None, None, None]

    perms = list(itertools.permutations(range(3)))
    cs = {pm: c_tensor(xs[pm[0]], xs[pm[1]], xs[pm[2]]) for pm in perms}
    cid = cs[(0, 1, 2)]
    val = np.zeros(len(x1))
    for pm in perms:
        cp = cs[pm]
        inv = [pm.index(j) for j in range(3)]
        cp2 = np.transpose(cp, (0, 1 + inv[0], 1 + inv[1], 1 + inv[2]))
        val += np.einsum('mabc,mxyz,max,mby,mcz->m', cid, cp2,
                         Ms[0], Ms[1], Ms[2], optimize=True)
    den = np.sum(x1 * x1, 1) + np.sum(x2 * x2, 1) + np.sum((x1 + x2) ** 2, 1)
    return val / den


def test_f2_mc_reproducible():
    a = dv.f2_monte_carlo(samples=200_000, seed=99)
    b = dv.f2_monte_carlo(samples=200_000, seed=99)
    assert a.value == b.value and a.stderr == b.stderr


def test_f2_below_f1_squared(f2_mc_quick):
    gap = dv.F1_CLOSED ** 2 - f2_mc_quick.value
    assert gap > 10 * f2_mc_quick.stderr


@pytest.mark.slow
def test_f2_two_route_agreement(f2_mc_quick):
    """Monte Carlo of the limit integral against extrapolated lattice
    operator norms; independent computations of the same constant."""
    ps = [ModelParams(3, 1.0, N, n=3, mollifier_norm="euclid")
          for N in (4.5, 6.5, 8.5)]
    vals = [abs(dv.fl_lattice(2, p)) for p in ps]
    extr = dv.richardson3(vals, [p.N for p in ps])
    assert abs(extr - f2_mc_quick.value) / f2_mc_quick.value <= 0.05


# ---------------------------------------------------------------------------
# operator routes
# ---------------------------------------------------------------------------

def test_fl_order1_equals_direct_lattice_sum():
    for norm in ("euclid", "sup"):
        p = ModelParams(3, 1.0, 4.5, n=2, mollifier_norm=norm)
        via_ops = dv.fl_lattice(1, p)
        direct = dv.f1_lattice(4.5, (0, 0, 1), 0, norm=norm)
        assert abs(via_ops - direct) <= 1e-12 * direct


def test_fl_order2_projection_inert():
    """For n > 2 the middle projection does nothing at order 2."""
    a = dv.fl_lattice(2, ModelParams(3, 1.0, 1.5, n=3, mollifier_norm="euclid"),
                      engine="dict")
    b = dv.fl_lattice(2, ModelParams(3, 1.0, 1.5, n=4, mollifier_norm="euclid"),
                      engine="dict")
    assert abs(a - b) <= 1e-13 * abs(a)
    assert a < 0                              # sign (-1)^(l-1)


def test_fl_factorial_bound(rng):
    """|f_l| <= l! C^l with the constant fitted on the weighted-norm
    suite (which includes the basis mode itself)."""
    from llnslab.checks import check_sector
    fits = check_sector().data["fits"]
    C = max(v for k, v in fits.items() if k.startswith("d3"))
    p = ModelParams(3, 1.0, 2.5, n=3, mollifier_norm="euclid")
    for l in (1, 2):
        val = abs(dv.fl_lattice(l, p))
        assert val <= math.factorial(l) * C ** l * (1 + 1e-9)


def test_fl_memory_budget():
    p = ModelParams(3, 1.0, 8.5, n=4)
    with pytest.raises(dv.BudgetError) as err:
        dv.fl_lattice(3, p, engine="dict", budget_bytes=10_000_000)
    assert err.value.needed > err.value.budget


def test_d_truncated_small_lambda_first_order():
    p = ModelParams(3, 0.05, 2.5, n=3, mollifier_norm="euclid")
    D = dv.D_truncated(p)
    f1N = dv.f1_lattice(2.5, (0, 0, 1), 0, norm="euclid")
    assert abs(D / p.lam ** 2 - f1N) / f1N <= 1e-3


def test_d_truncated_isotropy_same_shell():
    p = ModelParams(3, 0.3, 4.5, n=2)
    vals = [dv.D_truncated(p, k) for k in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
    assert max(vals) - min(vals) <= 1e-2 * vals[0]


def test_d_truncated_frame_independence():
    """The transverse-plane mean of the quadratic form cannot see the
    frame convention; single frame vectors differ only by the finite-
    cutoff decoupling defect."""
    p = ModelParams(3, 0.4, 2.5, n=3)
    a = dv.D_truncated_frame_mean(p, (1, 1, 0), convention="canonical")
    b = dv.D_truncated_frame_mean(p, (1, 1, 0), convention="alt")
    assert abs(a - b) <= 1e-10 * abs(a)
    one = dv.D_truncated(p, (1, 1, 0), convention="canonical")
    alt = dv.D_truncated(p, (1, 1, 0), convention="alt")
    assert abs(one - alt) <= 2e-2 * abs(one)


def test_d_truncated_positive():
    for lam in (0.2, 0.8):
        p = ModelParams(3, lam, 1.5, n=3)
        assert dv.D_truncated(p) > 0.0


# ---------------------------------------------------------------------------
# path sums
# ---------------------------------------------------------------------------

def test_walk_paths():
    assert dv.walk_paths(2, 3) == [(1, 2, 1)]
    assert dv.walk_paths(4, 3) == [(1, 2, 3, 2, 1)]
    assert dv.walk_paths(4, 2) == []
    assert dv.walk_paths(3, 5) == []
    assert len(dv.walk_paths(6, 4)) == 2      # (1,2,3,4,3,2,1), (1,2,3,2,3,2,1)


def test_path_sum_a2_is_minus_norm():
    p = ModelParams(3, 1.0, 2.5, n=2)
    from llnslab.chaos import ChaosKernel
    from llnslab.operators import apply_T
    val = dv.path_sum(2, p, ((0, 0, 1), 0), ((0, 0, 1), 0))
    t = apply_T(+1, ChaosKernel.sigma((0, 0, 1), 0), p)
    assert abs(val + t.inner(t).real) <= 1e-12
    assert abs(val.imag) <= 1e-14


def test_path_sum_momentum_off_diagonal_zero():
    p = ModelParams(3, 1.0, 2.5, n=2)
    assert dv.path_sum(2, p, ((0, 0, 1), 0), ((0, 1, 0), 0)) == 0j


def test_path_sum_engines_agree():
    p = ModelParams(3, 1.0, 2.5, n=3)
    for a in (2, 4):
        for tp in (0, 1):
            x = dv.path_sum(a, p, ((1, 1, 0), 0), ((1, 1, 0), tp), engine="fiber")
            y = dv.path_sum(a, p, ((1, 1, 0), 0), ((1, 1, 0), tp), engine="dict")
            assert abs(x - y) <= 1e-12 * max(1e-3, abs(y))


def test_path_sum_hermitian_symmetry():
    """Summed over excursions, the pairing matrix is symmetric under
    swapping the in and out modes (with reflected momenta)."""
    p = ModelParams(3, 1.0, 2.5, n=2)
    j = (1, 1, 0)
    for t, tp in ((0, 1), (1, 0), (0, 0)):
        a = dv.path_sum(2, p, (j, t), (j, tp))
        jm = tuple(-c for c in j)
        b = dv.path_sum(2, p, (jm, tp), (jm, t))
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_path_sum_d2():
    p = ModelParams(2, 1.0, 3, n=2)
    val = dv.path_sum(2, p, ((1, 0), 0), ((1, 0), 0))
    from llnslab.chaos import ChaosKernel
    from llnslab.operators import apply_T
    t = apply_T(+1, ChaosKernel.sigma((1, 0), 0), p)
    assert abs(val + t.inner(t).real) <= 1e-12


# ---------------------------------------------------------------------------
# inequality report
# ---------------------------------------------------------------------------

def test_corollary_explicit_values(f2_mc_quick):
    rep = dv.corollary_check(f2=f2_mc_quick)
    assert rep.passed
    lhs = 7 * 16 / (30 * PI)
    rhs = math.sqrt(1 + 16 / PI) - 1
    assert abs(lhs - 1.18836) <= 2e-5 and abs(rhs - 1.46840) <= 2e-5
    assert lhs < rhs
    # small-coupling ratio of the leading orders
    ratio = dv.F1_CLOSED / (1.0 / (2 * PI))
    assert abs(ratio - 7.0 / 15.0) <= 1e-12
    assert abs(rep.f1_squared - 0.0055164) <= 2e-7
