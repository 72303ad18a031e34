import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gw_empirics.errors import DomainError
from gw_empirics.gw import (
    AlignMatrix,
    GwOptions,
    clip_operator_norm,
    comparison_bounds,
    estimate_gw,
    gw_objective,
    lipschitz_comparison,
    op_norm,
    oracle_grid,
    polar_factor,
    procrustes_w2,
    s1,
    s2_alternating,
    s2_of_coupling,
)
from gw_empirics.measures import DiscreteMeasure, SeedPath, center, two_point
from gw_empirics.transport import cost_cA, solve_ot


def random_orthogonal(d, rng):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def cloud(n, d, seed, weighted=False):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d)) * rng.uniform(0.3, 1.5, size=d)
    if weighted:
        return DiscreteMeasure(X, rng.dirichlet(np.ones(n)))
    return DiscreteMeasure.uniform(X)


def brute_force_s2(mu, nu):
    n = mu.size
    return min(s2_of_coupling(mu, nu, np.eye(n)[list(p)] / n) for p in itertools.permutations(range(n)))


class TestS1:
    def test_hand_example(self):
        mu = DiscreteMeasure.uniform([[-1.0], [1.0]])
        assert s1(mu, mu) == pytest.approx(12.0)

    def test_requires_centred(self):
        mu = DiscreteMeasure.uniform([[0.0], [1.0]])
        with pytest.raises(DomainError):
            s1(mu, mu)

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
    def test_matches_definition(self, n, m, dx, dy, seed):
        mu = center(cloud(n, dx, seed, weighted=True))
        nu = center(cloud(m, dy, seed + 1, weighted=True))
        plan = np.outer(mu.weights, nu.weights)
        # D at any coupling minus the S2 objective of that coupling is S1
        direct = gw_objective(mu, nu, plan) - s2_of_coupling(mu, nu, plan)
        assert s1(mu, nu) == pytest.approx(direct, rel=1e-10, abs=1e-10)


class TestObjective:
    def test_marginal_check(self):
        mu = DiscreteMeasure.uniform([[0.0], [1.0]])
        with pytest.raises(DomainError):
            gw_objective(mu, mu, np.eye(2))

    def test_two_point_value(self):
        mu, nu = two_point(0.1), two_point(0.0)
        plan = np.array([[0.5, 0.1], [0.0, 0.4]])
        assert gw_objective(mu, nu, plan) == pytest.approx(2.88)


class TestEstimate:
    @pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
    def test_two_point(self, eps):
        r = estimate_gw(two_point(eps), two_point(0.0))
        assert r.d_hat == pytest.approx(32 * eps * (1 - eps), abs=1e-9)

    def test_identical_is_zero(self):
        mu = cloud(30, 3, 5)
        assert abs(estimate_gw(mu, mu).d_hat) <= 1e-9

    def test_exact_symmetry(self):
        mu, nu = cloud(12, 2, 1), cloud(9, 3, 2, weighted=True)
        a, b = estimate_gw(mu, nu), estimate_gw(nu, mu)
        assert a.d_hat == b.d_hat
        np.testing.assert_array_equal(a.coupling.plan, b.coupling.plan.T)

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_isometry_invariance(self, d):
        rng = np.random.default_rng(d)
        mu = cloud(60, d, d)
        nu = mu.transformed(random_orthogonal(d, rng), rng.normal(size=d) * 4)
        assert estimate_gw(mu, nu).d_hat <= 1e-6

    def test_scale_covariance(self):
        mu, nu = cloud(10, 2, 3), cloud(10, 2, 4)
        base = estimate_gw(mu, nu).d_hat
        assert estimate_gw(mu.scaled(2.0), nu.scaled(2.0)).d_hat == pytest.approx(16 * base, rel=1e-6)

    def test_nonnegative_and_upper_bound(self):
        mu, nu = cloud(7, 2, 8), cloud(5, 1, 9, weighted=True)
        r = estimate_gw(mu, nu)
        assert r.d_hat >= -1e-9
        assert r.d_hat <= gw_objective(mu, nu, np.outer(mu.weights, nu.weights)) + 1e-9
        assert r.d_hat == pytest.approx(gw_objective(mu, nu, r.coupling), rel=1e-9, abs=1e-9)

    def test_reproducible(self):
        mu, nu = cloud(20, 2, 1), cloud(20, 3, 2)
        opts = GwOptions(n_random=3, seed=11)
        a = estimate_gw(mu, nu, opts, SeedPath(11, "x"))
        b = estimate_gw(mu, nu, opts, SeedPath(11, "x"))
        assert a.d_hat == b.d_hat


class TestAlternating:
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_permutation_search(self, seed):
        n = 6
        mu, nu = center(cloud(n, 2, seed)), center(cloud(n, 2, seed + 100))
        value = s2_alternating(mu, nu)[0]
        assert value == pytest.approx(brute_force_s2(mu, nu), abs=1e-9)

    def test_trace_monotone(self):
        mu, nu = center(cloud(40, 2, 1)), center(cloud(35, 3, 2, weighted=True))
        value, A, coupling, trace, info = s2_alternating(mu, nu, starts=[np.zeros((2, 3))])
        assert all(b <= a + 1e-9 * (1 + abs(a)) for a, b in zip(trace, trace[1:]))
        assert value <= trace[-1] + 1e-9

    def test_fixed_point(self):
        mu, nu = center(cloud(25, 2, 3)), center(cloud(25, 2, 4))
        value, A, coupling, trace, info = s2_alternating(mu, nu)
        assert op_norm(A.entries) <= A.radius * (1 + 1e-12)
        np.testing.assert_allclose(A.entries, 0.5 * mu.atoms.T @ coupling.plan @ nu.atoms, atol=1e-9)
        sol = solve_ot(mu, nu, cost_cA(mu.atoms, nu.atoms, A.entries))
        assert 32 * np.sum(A.entries**2) + sol.value == pytest.approx(value, abs=1e-8)

    def test_start_shape_checked(self):
        mu = center(cloud(5, 2, 0))
        with pytest.raises(DomainError):
            s2_alternating(mu, mu, starts=[np.zeros((3, 3))])

    def test_subsampled_starts(self):
        mu, nu = center(cloud(300, 2, 1)), center(cloud(300, 2, 2))
        opts = GwOptions(start_subsample=64, n_random=2)
        v_sub = s2_alternating(mu, nu, options=opts)[0]
        v_full = s2_alternating(mu, nu, options=GwOptions(n_random=2))[0]
        assert v_sub == pytest.approx(v_full, rel=0.05)


class TestOracle:
    @pytest.mark.parametrize("seed", range(4))
    def test_agrees_with_alternating(self, seed):
        rng = np.random.default_rng(seed)
        mu = center(DiscreteMeasure(rng.normal(size=(4, 1)), rng.dirichlet(np.ones(4))))
        nu = center(DiscreteMeasure(rng.normal(size=(3, 2)), rng.dirichlet(np.ones(3))))
        o = oracle_grid(mu, nu, 61)
        alt = s2_alternating(mu, nu)[0]
        assert alt >= o.s2 - o.tolerance - 1e-6
        assert abs(alt - o.s2) <= o.tolerance + 1e-6

    def test_permutation_path_matches_solver_path(self):
        mu, nu = center(cloud(4, 1, 1)), center(cloud(4, 2, 2))
        fast = oracle_grid(mu, nu, 41)
        nu_w = DiscreteMeasure(nu.atoms, nu.weights * (1 + 1e-9 * np.arange(4)) / (1 + 1e-9 * 1.5))
        slow = oracle_grid(mu, center(nu_w), 41)
        assert fast.s2 == pytest.approx(slow.s2, abs=1e-5)

    def test_limits(self):
        mu = center(cloud(3, 3, 0))
        with pytest.raises(DomainError):
            oracle_grid(mu, mu)


class TestAlignMatrix:
    def test_radius_enforced(self):
        with pytest.raises(DomainError):
            AlignMatrix(np.eye(2) * 3, 1.0)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 5))
    def test_clip(self, seed, r):
        A = np.random.default_rng(seed).normal(size=(3, 2)) * 4
        B = clip_operator_norm(A, r)
        assert op_norm(B) <= r * (1 + 1e-12)
        if op_norm(A) <= r:
            np.testing.assert_array_equal(A, B)


class TestProcrustes:
    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_recovers_rotation(self, d):
        rng = np.random.default_rng(10 + d)
        mu = center(cloud(40, d, d))
        O = random_orthogonal(d, rng)
        res = procrustes_w2(mu, mu.transformed(O))
        assert res.value <= 1e-8
        assert np.allclose(res.rotation.T @ res.rotation, np.eye(d))

    def test_polar_factor_orthogonal(self):
        P = polar_factor(np.random.default_rng(0).normal(size=(4, 4)))
        np.testing.assert_allclose(P @ P.T, np.eye(4), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            procrustes_w2(cloud(3, 2, 0), cloud(3, 3, 0))


class TestComparison:
    def test_upper_bound_two_point(self):
        rep = comparison_bounds(two_point(0.1), two_point(0.0), certified_d=2.88)
        assert rep.upper_holds
        assert rep.gw == pytest.approx(np.sqrt(2.88))

    @settings(max_examples=20)
    @given(st.integers(0, 2**32 - 1))
    def test_lipschitz_inequality(self, seed):
        rng = np.random.default_rng(seed)
        mu = DiscreteMeasure(rng.uniform(-1, 1, size=(4, 2)), rng.dirichlet(np.ones(4)))
        nu = DiscreteMeasure(rng.uniform(-1, 1, size=(3, 2)), rng.dirichlet(np.ones(3)))
        plan = solve_ot(mu, nu, rng.normal(size=(4, 3))).plan
        lhs, rhs = lipschitz_comparison(mu, nu, plan)
        assert lhs <= rhs + 1e-12


def test_procrustes_unequal_sizes():
    # nu is a rotated copy of mu with every atom split in two
    rng = np.random.default_rng(21)
    mu = center(cloud(5, 2, 21))
    O = random_orthogonal(2, rng)
    Y = np.repeat(mu.atoms @ O.T, 2, axis=0)
    nu = DiscreteMeasure(Y, np.repeat(mu.weights, 2) / 2)
    res = procrustes_w2(mu, nu)
    assert res.value <= 1e-10
    np.testing.assert_allclose(res.rotation, O, atol=1e-8)


def test_procrustes_shuffled_atoms():
    rng = np.random.default_rng(22)
    mu = center(cloud(12, 3, 22))
    nu = DiscreteMeasure.uniform((mu.atoms @ random_orthogonal(3, rng).T)[rng.permutation(12)])
    assert procrustes_w2(mu, nu).value <= 1e-10
