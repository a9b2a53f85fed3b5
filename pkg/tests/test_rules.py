import numpy as np
import pytest
from numpy.testing import assert_allclose

from mhtopt import (
    ClosedFormUnavailableError,
    GaussianModel,
    GroupArgmaxMax,
    IndexTest,
    InputError,
    McConfig,
    MinStatistic,
    SeparateThresholds,
    norm_cdf,
    norm_quantile,
    rejection_probs,
    rule_from_json_dict,
)

from .conftest import phi_oracle

T95 = 1.6448536269514722


def separate(thresholds, scale=None):
    t = np.atleast_1d(np.asarray(thresholds, dtype=float))
    s = np.ones_like(t) if scale is None else np.asarray(scale, dtype=float)
    return SeparateThresholds(t, s)


class TestSeparateThresholds:
    def test_single_test_size(self):
        rule = separate([T95])
        est = rejection_probs(rule, GaussianModel([0.0], [[1.0]]))
        assert est.method == "closed_form"
        assert est.probs[0] == pytest.approx(0.05, abs=1e-6)

    def test_saturation_at_large_theta(self):
        rule = separate([T95, T95])
        est = rejection_probs(rule, GaussianModel([8.0, 8.0], np.eye(2)))
        assert np.all(est.probs >= 1 - 1e-6)

    def test_marginals_exact_under_correlation(self):
        # each component only involves its own marginal distribution
        rule = separate([1.0, 2.0])
        cov = np.array([[1.0, 0.7], [0.7, 1.0]])
        est = rejection_probs(rule, GaussianModel([0.3, -0.2], cov))
        expected = [1 - phi_oracle(1.0 - 0.3), 1 - phi_oracle(2.0 + 0.2)]
        assert_allclose(est.probs, expected, atol=1e-12)

    def test_monotone_in_each_coordinate(self):
        rule = separate([1.0, 1.5])
        grid = np.linspace(-1, 1, 9)
        for j in range(2):
            thetas = np.zeros((9, 2))
            thetas[:, j] = grid
            probs = rule.component_probs(thetas, np.eye(2))[:, j]
            assert np.all(np.diff(probs) > 0)

    def test_mc_agrees_with_closed_form(self, rng):
        # 100 random (theta, t) pairs, diagonal covariance, 4 MC standard errors
        mc = McConfig(20_000, seed=5)
        for trial in range(100):
            j = int(rng.integers(1, 4))
            t = rng.uniform(-1.0, 2.5, size=j)
            theta = rng.uniform(-1.5, 1.5, size=j)
            diag = rng.uniform(0.5, 2.0, size=j)
            rule = separate(t, np.sqrt(diag))
            model = GaussianModel(theta, np.diag(diag))
            exact = rejection_probs(rule, model).probs
            est = rejection_probs(rule, model, mc=mc, method="mc")
            se = np.maximum(est.se, 1e-4)
            assert np.all(np.abs(est.probs - exact) <= 4 * se)

    def test_infinite_thresholds_need_flag(self):
        with pytest.raises(InputError):
            separate([np.inf])
        rule = SeparateThresholds(np.array([np.inf]), np.ones(1), degenerate=True)
        assert rejection_probs(rule, GaussianModel([0.0], [[1.0]])).probs[0] == 0.0

    def test_evaluate_matches_definition(self, rng):
        rule = separate([0.5, 1.0], [1.0, 2.0])
        x = rng.standard_normal((50, 2))
        hits = rule.evaluate(x)
        assert np.array_equal(hits[:, 0], x[:, 0] >= 0.5)
        assert np.array_equal(hits[:, 1], x[:, 1] / 2.0 >= 1.0)


class TestMinStatistic:
    def test_joint_size_is_power_of_component_size(self):
        # per-component 0.3 at the 0.5244 threshold gives joint 0.09 for G=2
        rule = MinStatistic(2, norm_quantile(0.7))
        est = rejection_probs(rule, GaussianModel([0.0, 0.0], np.eye(2)))
        assert_allclose(est.probs, [0.09, 0.09], atol=1e-6)

    def test_all_entries_equal(self):
        rule = MinStatistic(3, 0.2)
        probs = rule.component_probs(np.array([0.5, -0.1, 0.0]), np.eye(3))
        assert probs[0] == probs[1] == probs[2]

    def test_needs_diagonal_covariance(self):
        rule = MinStatistic(2, 0.5)
        cov = np.array([[1.0, 0.5], [0.5, 1.0]])
        model = GaussianModel([0.0, 0.0], cov)
        with pytest.raises(ClosedFormUnavailableError):
            rejection_probs(rule, model)
        est = rejection_probs(rule, model, mc=McConfig(50_000, seed=2))
        assert est.method == "monte_carlo"
        # positively correlated minimum rejects more often than independent
        indep = rule.joint_prob(np.zeros(2), np.eye(2))
        assert est.probs[0] > indep

    def test_count_split(self):
        rule = MinStatistic(3, 0.0)
        theta = np.zeros(3)
        joint = rule.joint_prob(theta, np.eye(3))
        assert rule.count_sf(theta, np.eye(3), 1) == pytest.approx(joint)
        assert rule.count_sf(theta, np.eye(3), 3) == pytest.approx(joint)
        assert rule.count_sf(theta, np.eye(3), 4) == 0.0


class TestGroupArgmaxMax:
    def test_symmetric_closed_form_at_origin(self):
        # P(group j wins) = (1 - Phi(t)^m) / m by symmetry
        rule = GroupArgmaxMax(1.0, [(0,), (1,), (0, 1)], 2)
        probs = rule.component_probs(np.zeros(3), np.eye(3))
        expected = (1 - phi_oracle(1.0) ** 3) / 3
        assert_allclose(probs, expected, atol=1e-12)

    def test_quadrature_matches_monte_carlo(self, rng):
        rule = GroupArgmaxMax(0.8, [(0,), (1,), (0, 1)], 2)
        theta = np.array([0.4, -0.3, 0.1])
        exact = rule.component_probs(theta, np.eye(3))
        est = rejection_probs(
            rule, GaussianModel(theta, np.eye(3)), mc=McConfig(200_000, seed=9),
            method="mc",
        )
        assert np.all(np.abs(est.probs - exact) <= 4 * est.se)

    def test_rejects_general_covariance(self):
        rule = GroupArgmaxMax(1.0, [(0,), (1,)], 2)
        cov = np.array([[1.0, 0.2], [0.2, 1.0]])
        with pytest.raises(ClosedFormUnavailableError):
            rule.component_probs(np.zeros(2), cov)

    def test_at_most_one_group_fires(self, rng):
        rule = GroupArgmaxMax(-1.0, [(0,), (1,), (0, 1)], 2)
        hits = rule.evaluate(rng.standard_normal((1000, 3)))
        assert np.all(hits.sum(axis=1) <= 1)


class TestIndexTest:
    def test_single_outcome_reduces_to_t_test(self):
        rule = IndexTest(np.array([1.0]), T95, 1.0)
        est = rejection_probs(rule, GaussianModel([0.0], [[1.0]]))
        assert est.probs[0] == pytest.approx(0.05, abs=1e-12)

    def test_boundary_similarity(self):
        # theta with w'theta = 0 rejects with probability exactly the size
        rule = IndexTest(np.array([0.5, 0.5]), T95, np.sqrt(0.5))
        est = rejection_probs(rule, GaussianModel([-1.0, 1.0], np.eye(2)))
        assert est.probs[0] == pytest.approx(0.05, abs=1e-12)

    def test_general_covariance_closed_form(self, rng):
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        w = np.array([0.3, 0.7])
        sd = float(np.sqrt(w @ cov @ w))
        rule = IndexTest(w, 1.2, sd)
        theta = np.array([0.4, -0.1])
        exact = rule.component_probs(theta, cov)[0]
        est = rejection_probs(
            rule, GaussianModel(theta, cov), mc=McConfig(200_000, seed=4), method="mc"
        )
        assert abs(est.probs[0] - exact) <= 4 * est.se[0]

    def test_weights_must_sum_to_one(self):
        with pytest.raises(InputError):
            IndexTest(np.array([0.5, 0.6]), 1.0, 1.0)


class TestDispatch:
    def test_dimension_mismatch(self):
        rule = separate([1.0, 1.0])
        with pytest.raises(InputError, match="dimension"):
            rejection_probs(rule, GaussianModel([0.0], [[1.0]]))

    def test_no_mc_config_raises(self):
        rule = MinStatistic(2, 0.5)
        cov = np.array([[1.0, 0.5], [0.5, 1.0]])
        with pytest.raises(ClosedFormUnavailableError, match="Monte Carlo"):
            rejection_probs(rule, GaussianModel([0.0, 0.0], cov))


class TestJsonRoundTrip:
    @pytest.mark.parametrize(
        "rule",
        [
            SeparateThresholds(np.array([1.5, 2.0]), np.array([1.0, 2.0]),
                               meta={"J": 2, "C": 0.1}),
            SeparateThresholds(np.array([np.inf, 1.0]), np.ones(2), degenerate=True),
            MinStatistic(3, 0.52, meta={"per_component_size": 0.3}),
            GroupArgmaxMax(1.8, [(0,), (1,), (0, 1)], 2, kappa=1),
            IndexTest(np.array([0.25, 0.75]), 1.64, 0.9, meta={"C": 0.05}),
        ],
        ids=["separate", "degenerate", "min", "group", "index"],
    )
    def test_round_trip(self, rule):
        doc = rule.to_json_dict()
        import json

        rebuilt = rule_from_json_dict(json.loads(json.dumps(doc)))
        assert type(rebuilt) is type(rule)
        theta = np.linspace(-0.5, 0.5, rule.dim)
        cov = np.eye(rule.dim)
        try:
            assert_allclose(
                rebuilt.component_probs(theta, cov),
                rule.component_probs(theta, cov),
                atol=1e-15,
            )
        except ClosedFormUnavailableError:
            x = np.linspace(-1, 1, 3 * rule.dim).reshape(3, rule.dim)
            assert np.array_equal(rebuilt.evaluate(x), rule.evaluate(x))

    def test_unknown_variant_rejected(self):
        with pytest.raises(InputError, match="variant"):
            rule_from_json_dict({"variant": "nope", "thresholds": [1.0]})
