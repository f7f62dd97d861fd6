"""Donor selection and simplex-constrained weight fitting.

The simplex fit is validated against a brute-force grid search over the
probability simplex, against the unconstrained least-squares bound, and on
fixtures with a known exact optimum.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panelfx.panel import Base, MetricKind
from panelfx.synth import (
    DonorPool,
    _project_simplex,
    fit_instance_weights,
    fit_weights,
    select_donors,
    synthesize,
)

from conftest import make_instance


def sse(y, D, w):
    r = y - D @ w
    return float(r @ r)


def grid_search_simplex(y, D, step=0.01):
    """Exhaustive search over the 0.01-step grid on the simplex (3 donors)."""
    best_w, best = None, np.inf
    n = round(1 / step)
    for i in range(n + 1):
        for j in range(n + 1 - i):
            w = np.array([i, j, n - i - j]) * step
            val = sse(y, D, w)
            if val < best:
                best, best_w = val, w
    return best_w, best


@pytest.fixture
def mixture_fixture():
    """Treated series is exactly 0.5*donor1 + 0.5*donor2; donor3 is noise."""
    rng = np.random.default_rng(5)
    d1 = rng.normal(10, 1, 46)
    d2 = rng.normal(8, 1, 46)
    d3 = rng.normal(9, 1, 46)
    D = np.column_stack([d1, d2, d3])
    y = 0.5 * d1 + 0.5 * d2
    return y, D


class TestSimplexFit:
    def test_recovers_convex_mixture(self, mixture_fixture):
        y, D = mixture_fixture
        fit = fit_weights(y, D, mode="simplex")
        np.testing.assert_allclose(fit.weights, [0.5, 0.5, 0.0], atol=1e-6)
        # and beats/matches the exhaustive grid optimum
        grid_w, grid_val = grid_search_simplex(y, D)
        np.testing.assert_allclose(fit.weights, grid_w, atol=0.005 + 1e-9)
        assert sse(y, D, fit.weights) <= grid_val + 1e-9

    def test_exact_copy_donor_takes_all_weight(self):
        rng = np.random.default_rng(6)
        y = rng.normal(10, 1, 46)
        D = np.column_stack([y, rng.normal(10, 1, 46), rng.normal(10, 1, 46)])
        fit = fit_weights(y, D, mode="simplex")
        assert fit.weights[0] >= 0.999
        assert fit.pre_mse <= 1e-10

    def test_weights_live_on_the_simplex(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            y = rng.normal(size=30)
            D = rng.normal(size=(30, 5))
            w = fit_weights(y, D, mode="simplex").weights
            assert np.all(w >= 0)
            assert abs(w.sum() - 1.0) < 1e-9

    def test_beats_every_vertex(self):
        # the fitted objective can never exceed the best single-donor fit
        rng = np.random.default_rng(8)
        for trial in range(20):
            y = rng.normal(size=25)
            D = rng.normal(size=(25, 4))
            w = fit_weights(y, D, mode="simplex").weights
            vertex_best = min(
                sse(y, D, np.eye(4)[i]) for i in range(4)
            )
            assert sse(y, D, w) <= vertex_best + 1e-12

    def test_unconstrained_bounds_simplex(self):
        # the simplex optimum can never beat unconstrained least squares
        rng = np.random.default_rng(9)
        for trial in range(20):
            y = rng.normal(size=40)
            D = rng.normal(size=(40, 5))
            ws = fit_weights(y, D, mode="simplex").weights
            wu = fit_weights(y, D, mode="unconstrained").weights
            assert sse(y, D, wu) <= sse(y, D, ws) + 1e-9

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        y = rng.normal(size=46)
        D = rng.normal(size=(46, 5))
        w1 = fit_weights(y, D, mode="simplex").weights
        w2 = fit_weights(y, D, mode="simplex").weights
        assert np.array_equal(w1, w2)

    def test_shift_invariance_of_argmin(self):
        # adding a common constant to y and all donors keeps the optimum
        rng = np.random.default_rng(13)
        y = rng.normal(size=30)
        D = rng.normal(size=(30, 3))
        w1 = fit_weights(y, D, mode="simplex").weights
        w2 = fit_weights(y + 5.0, D + 5.0, mode="simplex").weights
        np.testing.assert_allclose(w1, w2, atol=1e-7)

    def test_single_donor(self):
        y = np.arange(10.0)
        fit = fit_weights(y, y[:, None] * 2, mode="simplex")
        np.testing.assert_array_equal(fit.weights, [1.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="lengths differ"):
            fit_weights(np.zeros(5), np.zeros((6, 2)))

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="unknown weight mode"):
            fit_weights(np.zeros(5), np.zeros((5, 2)), mode="ridge")

    def test_unconstrained_rank_deficiency_rejected(self):
        d = np.arange(10.0)
        D = np.column_stack([d, 2 * d])
        with pytest.raises(ValueError, match="simplex"):
            fit_weights(d, D, mode="unconstrained")


@given(
    st.lists(
        st.floats(min_value=-10, max_value=10, allow_nan=False),
        min_size=2,
        max_size=8,
    )
)
@settings(max_examples=200)
def test_simplex_projection_properties(values):
    v = np.array(values)
    w = _project_simplex(v)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) < 1e-9
    # projecting a point already on the simplex is the identity
    np.testing.assert_allclose(_project_simplex(w), w, atol=1e-9)


class TestDonorSelection:
    def _pool(self):
        rng = np.random.default_rng(20)
        base = rng.normal(10, 1, 46)
        pool = []
        for i in range(8):
            # decreasing correlation with the treated series
            mix = base * (1 - i / 10) + rng.normal(10, 1, 46) * (i / 10)
            industry = "news" if i < 6 else "games"
            pool.append(
                make_instance(f"ctrl{i:02d}", np.exp(mix / 5), industry=industry)
            )
        treated = make_instance(
            "treat00", np.exp(base / 5), user_base=Base.EU, website_base=Base.EU
        )
        return treated, pool

    def test_matches_brute_force_ranking(self):
        treated, pool = self._pool()
        pre = np.arange(46)
        dp = select_donors(treated, pool, MetricKind.TOTAL_VISITS, pre, k=3)
        # brute-force oracle: correlate on log scale, sort, restrict to industry
        x = np.log1p(treated.get(MetricKind.TOTAL_VISITS).values[pre])
        scored = []
        for c in pool:
            if c.industry != "news":
                continue
            yv = np.log1p(c.get(MetricKind.TOTAL_VISITS).values[pre])
            scored.append((np.corrcoef(x, yv)[0, 1], c.instance_id))
        expected = [iid for _, iid in sorted(scored, key=lambda t: (-t[0], t[1]))][:3]
        assert list(dp.donor_ids) == expected
        assert dp.industry_matched

    def test_correlations_sorted_descending(self):
        treated, pool = self._pool()
        dp = select_donors(treated, pool, MetricKind.TOTAL_VISITS, np.arange(46), k=5)
        assert list(dp.correlations) == sorted(dp.correlations, reverse=True)

    def test_industry_fallback_when_pool_thin(self):
        treated, pool = self._pool()
        thin = [c for c in pool if c.industry == "games"][:1] + [
            c for c in pool if c.industry == "news"
        ]
        treated_games = make_instance(
            "treat01",
            treated.get(MetricKind.TOTAL_VISITS).values,
            user_base=Base.EU,
            website_base=Base.EU,
            industry="games",
        )
        dp = select_donors(
            treated_games, thin, MetricKind.TOTAL_VISITS, np.arange(46), k=3
        )
        assert not dp.industry_matched
        assert len(dp.donor_ids) == 3

    def test_same_industry_flag_off(self):
        treated, pool = self._pool()
        dp = select_donors(
            treated, pool, MetricKind.TOTAL_VISITS, np.arange(46), k=8,
            same_industry=False,
        )
        assert len(dp.donor_ids) == 8

    def test_empty_pool_rejected(self):
        treated, _ = self._pool()
        with pytest.raises(ValueError, match="empty donor pool"):
            select_donors(treated, [], MetricKind.TOTAL_VISITS, np.arange(46))

    def test_treated_cannot_be_its_own_donor(self):
        with pytest.raises(ValueError, match="own donor"):
            DonorPool("a", ("a", "b"), (1.0, 0.5), True)


class TestSynthesize:
    def test_weighted_sum(self):
        D = np.column_stack([np.arange(10.0), np.ones(10)])
        fit = fit_weights(np.arange(10.0) * 0.5 + 0.5, D, mode="unconstrained")
        np.testing.assert_allclose(
            synthesize(fit, D), D @ fit.weights, rtol=1e-12
        )

    def test_column_mismatch_rejected(self):
        fit = fit_weights(np.arange(10.0), np.ones((10, 2)))
        with pytest.raises(ValueError, match="columns"):
            synthesize(fit, np.ones((10, 3)))

    def test_instance_level_fit_keeps_ids(self):
        rng = np.random.default_rng(30)
        donors = [
            make_instance(f"d{i}", rng.uniform(100, 200, 46)) for i in range(3)
        ]
        treated = make_instance(
            "t0",
            donors[0].get(MetricKind.TOTAL_VISITS).values,
            user_base=Base.EU,
            website_base=Base.EU,
        )
        fit = fit_instance_weights(
            treated, donors, MetricKind.TOTAL_VISITS, np.arange(46)
        )
        assert fit.donor_ids == ("d0", "d1", "d2")
        assert fit.weights[0] >= 0.999
