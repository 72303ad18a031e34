import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gw_empirics.errors import ConfigError, ConstructionError, DomainError
from gw_empirics.measures import (
    DiscreteMeasure,
    SamplerSpec,
    SeedPath,
    center,
    chi2_divergence,
    moments,
    packing_construction,
    pareto_fourth_inverse_cdf,
    population,
    sample,
    two_point,
    tv_distance,
)


def weights_strategy(n):
    return st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n).map(lambda w: np.array(w) / sum(w))


@st.composite
def measures(draw, max_n=8, max_d=3):
    n = draw(st.integers(1, max_n))
    d = draw(st.integers(1, max_d))
    atoms = draw(st.lists(st.floats(-5, 5), min_size=n * d, max_size=n * d))
    w = draw(weights_strategy(n))
    return DiscreteMeasure(np.array(atoms).reshape(n, d), w)


class TestDiscreteMeasure:
    def test_rejects_bad_weights(self):
        with pytest.raises(DomainError):
            DiscreteMeasure([[0.0], [1.0]], [0.5, 0.6])
        with pytest.raises(DomainError):
            DiscreteMeasure([[0.0], [1.0]], [1.5, -0.5])
        with pytest.raises(DomainError):
            DiscreteMeasure(np.zeros((0, 2)), [])

    def test_immutable_copy(self):
        atoms = np.array([[0.0], [1.0]])
        m = DiscreteMeasure(atoms, [0.5, 0.5])
        atoms[0, 0] = 7.0
        assert m.atoms[0, 0] == 0.0
        with pytest.raises(ValueError):
            m.atoms[0, 0] = 3.0

    def test_merged_sums_duplicates(self):
        m = DiscreteMeasure.uniform([[1.0], [0.0], [1.0], [1.0]])
        mm = m.merged()
        assert mm.size == 2
        np.testing.assert_allclose(mm.weights, [0.25, 0.75])


class TestSample:
    def test_two_point_zero_is_exact(self):
        m = population(SamplerSpec("two-point", 1, {"eps": 0.0}))
        np.testing.assert_array_equal(m.atoms.ravel(), [-1.0, 1.0])
        np.testing.assert_array_equal(m.weights, [0.5, 0.5])

    def test_pareto_alpha_boundary_rejected(self):
        with pytest.raises(ConfigError) as err:
            pareto_fourth_inverse_cdf(0.5, 1.0)
        assert err.value.field == "params.alpha"
        with pytest.raises(ConfigError) as err:
            SamplerSpec("pareto-fourth", 1, {"alpha": 2.5})
        assert "alpha" in str(err.value)

    def test_invalid_params_name_field(self):
        with pytest.raises(ConfigError) as err:
            SamplerSpec("two-point", 1, {"eps": 0.5})
        assert err.value.field == "params.eps"
        with pytest.raises(ConfigError) as err:
            SamplerSpec("packing-uniform", 3, {"k": 3})
        assert err.value.field == "params.k"
        with pytest.raises(ConfigError) as err:
            SamplerSpec("uniform-ball", 2, {"side": 1.0})
        assert err.value.field == "params"

    def test_pareto_fourth_moment(self):
        # E X^4 = alpha / (alpha - 1) = 3 at alpha = 1.5; heavy tail, so only loosely
        m = sample(SamplerSpec("pareto-fourth", 1, {"alpha": 1.5}), 400_000, SeedPath(3, "pareto"))
        assert abs(moments(m).m4 - 3.0) / 3.0 < 0.15

    def test_pareto_tail_within_dkw_band(self):
        n = 100_000
        alpha = 1.25
        m = sample(SamplerSpec("pareto-fourth", 1, {"alpha": alpha}), n, SeedPath(1, "dkw"))
        x = np.abs(m.atoms.ravel())
        band = math.sqrt(math.log(2 / 1e-3) / (2 * n))
        for t in (1.5, 2.0, 3.0):
            assert abs(np.mean(x >= t) - t ** (-4 * alpha)) <= band

    @pytest.mark.parametrize(
        "spec, m2, m4",
        [
            (SamplerSpec("uniform-ball", 3), 3 / 5, 3 / 7),
            (SamplerSpec("uniform-cube", 2, {"side": 2.0}), 2 / 3, 2 * (1 / 5) + 2 * (1 / 9)),
            (SamplerSpec("gaussian", 4, {"sigma": 0.5}), 4 * 0.25, (16 + 8) * 0.0625),
            (SamplerSpec("two-point", 1, {"eps": 0.2}), 1.0, 1.0),
        ],
    )
    def test_moments_converge(self, spec, m2, m4):
        m = sample(spec, 100_000, SeedPath(11, "moments"))
        s = moments(m)
        assert abs(s.m2 - m2) / m2 < 0.1
        assert abs(s.m4 - m4) / m4 < 0.1

    def test_seed_path_determinism(self):
        spec = SamplerSpec("gaussian", 2)
        a = sample(spec, 10, SeedPath(5, "s", 3))
        b = sample(spec, 10, SeedPath(5, "s", 3))
        c = sample(spec, 10, SeedPath(5, "s", 4))
        np.testing.assert_array_equal(a.atoms, b.atoms)
        assert not np.array_equal(a.atoms, c.atoms)

    def test_spec_round_trip(self):
        spec = SamplerSpec("finite-support", 2, {"atoms": [[0, 1], [1, 0]], "weights": [0.25, 0.75]})
        assert SamplerSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()


class TestMoments:
    def test_point_mass(self):
        s = moments(DiscreteMeasure([[0.0, 0.0]], [1.0]))
        assert s.m2 == 0 and s.m4 == 0 and s.lambda_min == 0

    def test_two_point(self):
        s = moments(two_point(0.0))
        assert s.m2 == 1 and s.m4 == 1
        np.testing.assert_allclose(s.covariance, [[1.0]])

    def test_cross(self):
        m = DiscreteMeasure.uniform([[1, 0], [-1, 0], [0, 1], [0, -1]])
        s = moments(m)
        np.testing.assert_allclose(s.covariance, np.diag([0.5, 0.5]))
        assert s.lambda_min == pytest.approx(0.5)

    @given(measures())
    def test_invariants(self, m):
        s = moments(m)
        assert s.m2**2 <= s.m4 * (1 + 1e-12) + 1e-12
        assert np.linalg.eigvalsh(s.covariance).min() >= -1e-9
        assert abs(s.lambda_min - np.linalg.eigvalsh(s.covariance)[0]) <= 1e-10


class TestCenter:
    def test_examples(self):
        c = center(DiscreteMeasure([[3.0, 4.0]], [1.0]))
        np.testing.assert_array_equal(c.atoms, [[0.0, 0.0]])
        c = center(DiscreteMeasure.uniform([[0.0], [2.0]]))
        np.testing.assert_array_equal(c.atoms.ravel(), [-1.0, 1.0])

    @given(measures())
    def test_idempotent(self, m):
        c = center(m)
        np.testing.assert_array_equal(center(c).atoms, c.atoms)
        assert np.abs(c.mean()).max() < 1e-12 * max(1.0, np.abs(m.atoms).max()) * 10


class TestPacking:
    def test_two_points_on_line(self):
        p = packing_construction(2, 1, SeedPath(0, "pack"))
        a = p.measure.atoms.ravel()
        assert a[0] == pytest.approx(-a[1])
        assert 0 < abs(a[0]) <= 1
        assert p.min_distance == pytest.approx(2 * abs(a[0]))
        assert p.lambda_min == pytest.approx(a[0] ** 2)

    def test_k16_d2(self):
        p = packing_construction(16, 2, SeedPath(0, "pack"))
        assert p.min_distance >= p.gamma * 16 ** -0.5
        assert p.lambda_min >= 0.01

    def test_lambda_min_k_independent(self):
        small = packing_construction(16, 2, SeedPath(0, "pack")).lambda_min
        large = packing_construction(64, 2, SeedPath(0, "pack")).lambda_min
        assert max(small, large) <= 3 * min(small, large)

    @pytest.mark.parametrize("d", [1, 2, 3, 5])
    @pytest.mark.parametrize("k", [8, 16, 32, 64, 128])
    def test_postconditions_grid(self, k, d):
        if k < d + 1:
            pytest.skip("k below d + 1")
        p = packing_construction(k, d, SeedPath(2, f"grid-{k}-{d}"))
        atoms = p.measure.atoms
        assert atoms.shape == (k, d)
        assert np.unique(atoms, axis=0).shape[0] == k
        assert np.linalg.norm(atoms, axis=1).max() <= 1.0
        np.testing.assert_array_equal(p.measure.weights, np.full(k, 1.0 / k))
        assert np.abs(atoms.mean(axis=0)).max() <= 1e-12
        assert p.min_distance >= p.gamma * k ** (-1.0 / d) * (1 - 1e-12)
        assert p.lambda_min > 0

    def test_budget_failure_reports_count(self):
        with pytest.raises(ConstructionError) as err:
            packing_construction(50, 1, SeedPath(0, "pack"), gamma=10.0)
        assert err.value.achieved < 50


class TestDivergences:
    def test_two_point_chi2(self):
        # divides by the weights of the perturbed law, as in the Le Cam computation
        eps = 0.1
        assert chi2_divergence(two_point(eps), two_point(0.0)) == pytest.approx(4 * eps**2)

    def test_identical(self):
        m = two_point(0.3)
        assert tv_distance(m, m) == 0 and chi2_divergence(m, m) == 0

    def test_hand_values(self):
        p = DiscreteMeasure([[0.0], [1.0]], [1.0, 0.0])
        q = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
        assert tv_distance(p, q) == pytest.approx(0.5)
        assert chi2_divergence(p, q) == pytest.approx(1.0)
        assert chi2_divergence(q, p) == math.inf

    def test_mismatched_support(self):
        with pytest.raises(DomainError):
            tv_distance(two_point(0.0), DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5]))

    @given(st.integers(2, 6).flatmap(lambda n: st.tuples(weights_strategy(n), weights_strategy(n), weights_strategy(n))))
    def test_tv_metric(self, ws):
        atoms = np.arange(len(ws[0]), dtype=float)[:, None]
        p, q, r = (DiscreteMeasure(atoms, w) for w in ws)
        assert tv_distance(p, q) == pytest.approx(tv_distance(q, p))
        assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12
