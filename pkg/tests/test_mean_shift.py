"""
Tests for mode refinement (misre.estimation.mean_shift).

Covers:
  1. Kernel density of projections.
  2. Mean shift climbs (single and batched).
  3. Refinement from the scale neighbourhood.
  4. Inlier classification, both rules.
  5. TLS refit and its fallbacks.
"""

import math

import numpy as np
import pytest

from misre.core.errors import InvalidInputError, RefinementFailureError
from misre.estimation.hypotheses import ScoredHypothesis, distances, select_best
from misre.estimation.mean_shift import (
    classify_inliers,
    default_tolerance,
    kde,
    mean_shift,
    mean_shift_batch,
    refine,
    tls_refit,
)
from misre.geometry import get_model
from misre.geometry.base import Hypothesis


@pytest.fixture
def line():
    return get_model("line2d")


def _noisy_line(n=200, sigma=0.0, outliers=0, seed=0):
    """Points near y = 2 (theta = (0, 1), alpha = 2) plus uniform clutter."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-5, 5, n)
    y = 2.0 + rng.normal(0, sigma, n) if sigma else np.full(n, 2.0)
    pts = np.column_stack([x, y])
    if outliers:
        pts = np.vstack([pts, rng.uniform(-5, 5, (outliers, 2)) * [1, 4]])
    return pts


def _winner(model, cs, theta, alpha):
    h = Hypothesis(np.asarray(theta, dtype=float), float(alpha))
    return select_best(cs, [ScoredHypothesis(h, 0.0, model.spec.m_e * 5)])


# ===== 1. density =====


class TestKde:
    def test_single_point_at_its_projection(self):
        assert kde(0.5, np.array([0.5]), np.array([1.0]), sigma=2.0) == pytest.approx(0.5)

    def test_outside_every_window(self):
        assert kde(10.0, np.array([0.0, 1.0]), np.array([1.0, 1.0])) == 0.0

    def test_symmetric_pair_at_window_edge(self):
        assert kde(0.0, np.array([-1.0, 1.0]), np.array([1.0, 1.0])) == 0.0

    def test_zero_bandwidth_points_are_left_out(self):
        value = kde(0.0, np.array([0.0, 0.0]), np.array([1.0, 0.0]))
        assert value == pytest.approx(1.0)


# ===== 2. climbs =====


class TestMeanShift:
    def test_converges_to_the_pair_average(self):
        res = mean_shift(0.0, np.array([0.0, 0.1, 10.0]), np.ones(3))
        assert res.z == pytest.approx(0.05)
        assert res.support

    def test_isolated_start_stays(self):
        res = mean_shift(10.0, np.array([0.0, 0.1, 10.0]), np.ones(3))
        assert res.z == pytest.approx(10.0)

    def test_symmetric_pair(self):
        res = mean_shift(0.0, np.array([-0.1, 0.1]), np.ones(2))
        assert res.z == pytest.approx(0.0, abs=1e-12)

    def test_empty_window_returns_start(self):
        res = mean_shift(50.0, np.array([0.0, 1.0]), np.ones(2))
        assert res.z == 50.0
        assert res.height == 0.0
        assert not res.support

    def test_non_finite_start(self):
        with pytest.raises(InvalidInputError):
            mean_shift(float("nan"), np.array([0.0]), np.ones(1))

    def test_height_never_decreases(self):
        rng = np.random.default_rng(3)
        proj = np.concatenate([rng.normal(0, 0.3, 100), rng.normal(3, 0.3, 50)])
        bw = np.full(proj.size, 0.5)
        res = mean_shift(1.0, proj, bw, max_iter=1)
        heights = [kde(1.0, proj, bw), res.height]
        for k in range(2, 20):
            heights.append(mean_shift(1.0, proj, bw, max_iter=k).height)
        assert all(b >= a - 1e-15 for a, b in zip(heights, heights[1:]))

    def test_batch_matches_single_climbs(self):
        proj = np.array([0.0, 0.1, 0.2, 5.0, 5.1])
        bw = np.ones(5)
        starts = np.array([0.0, 5.0, 2.6])
        z, h, it, sup = mean_shift_batch(starts, proj, bw)
        for k, z0 in enumerate(starts):
            single = mean_shift(float(z0), proj, bw)
            assert z[k] == pytest.approx(single.z)
            assert h[k] == pytest.approx(single.height)
        assert not sup[2]

    def test_per_row_projections(self):
        proj = np.array([[0.0, 0.2, 9.0], [4.0, 4.4, 9.0]])
        z, _, _, _ = mean_shift_batch(np.array([0.0, 4.0]), proj, np.ones((2, 3)))
        assert np.allclose(z, [0.1, 4.2])

    def test_default_tolerance(self):
        assert default_tolerance(np.array([4.0, 4.0, 0.0]), factor=1e-6) == pytest.approx(2e-6)


# ===== 3. refinement =====


class TestRefine:
    def test_noiseless_line_recovers_the_intercept(self, line):
        cs = line.lift(_noisy_line())
        winner = _winner(line, cs, [0.05, 1.0] / np.linalg.norm([0.05, 1.0]), 2.0)
        report = refine(line, cs, winner, sigma=1.0, trials=20, seed=0)
        assert abs(report.theta[0]) < 1e-9
        assert report.alpha == pytest.approx(2.0, abs=1e-6)
        assert report.trials == 20

    def test_single_trial_is_that_mode(self, line):
        cs = line.lift(_noisy_line(sigma=0.05, seed=1))
        winner = _winner(line, cs, [0.0, 1.0], 2.0)
        report = refine(line, cs, winner, sigma=0.3, trials=1, seed=5)
        assert report.mode.trial == 0
        assert report.alpha == report.mode.z

    def test_neighbourhood_too_small(self, line):
        cs = line.lift(_noisy_line(n=20))
        winner = _winner(line, cs, [1.0, 0.0], 100.0)
        with pytest.raises(RefinementFailureError):
            refine(line, cs, winner, sigma=0.5, trials=5, seed=0)

    def test_needs_the_winner_table(self, line):
        cs = line.lift(_noisy_line(n=20))
        bare = ScoredHypothesis(Hypothesis(np.array([0.0, 1.0]), 2.0), 0.0, 10)
        with pytest.raises(InvalidInputError):
            refine(line, cs, bare, sigma=1.0, trials=5, seed=0)

    def test_deterministic_for_a_seed(self, line):
        cs = line.lift(_noisy_line(sigma=0.1, outliers=50, seed=2))
        winner = _winner(line, cs, [0.0, 1.0], 2.0)
        a = refine(line, cs, winner, sigma=0.4, trials=15, seed=3)
        b = refine(line, cs, winner, sigma=0.4, trials=15, seed=3, workers=3)
        assert np.array_equal(a.theta, b.theta)
        assert a.alpha == b.alpha


# ===== 4. inlier classification =====


class TestClassifyInliers:
    def test_points_on_the_structure(self, line):
        pts = np.vstack([_noisy_line(n=30), [[0.0, 40.0]]])
        cs = line.lift(pts)
        idx = classify_inliers(cs, np.array([0.0, 1.0]), 2.0, sigma=0.5)
        assert list(idx) == list(range(30))

    def test_far_isolated_point_is_out(self, line):
        pts = np.vstack([_noisy_line(n=30, sigma=0.1), [[0.0, 3.5]]])
        cs = line.lift(pts)
        # distance 1.5 > 3 * sigma
        idx = classify_inliers(cs, np.array([0.0, 1.0]), 2.0, sigma=0.45)
        assert 30 not in idx

    def test_trajectory_pulls_in_points_past_the_band(self, line):
        # the cluster sits slightly off alpha; its members climb to its center
        pts = np.column_stack([np.arange(10.0), 2.0 + np.linspace(-0.2, 0.2, 10)])
        cs = line.lift(pts)
        by_threshold = classify_inliers(cs, np.array([0.0, 1.0]), 2.05, sigma=0.2, mode="threshold")
        by_trajectory = classify_inliers(cs, np.array([0.0, 1.0]), 2.05, sigma=0.2, mode="trajectory")
        assert len(by_trajectory) > len(by_threshold)

    @pytest.mark.parametrize("mode", ["trajectory", "threshold"])
    def test_point_order_does_not_matter(self, line, mode):
        pts = _noisy_line(n=80, sigma=0.1, outliers=40, seed=4)
        perm = np.random.default_rng(9).permutation(len(pts))
        theta = np.array([0.0, 1.0])
        idx = classify_inliers(line.lift(pts), theta, 2.0, sigma=0.3, mode=mode)
        idx_perm = classify_inliers(line.lift(pts[perm]), theta, 2.0, sigma=0.3, mode=mode)
        assert sorted(perm[idx_perm].tolist()) == idx.tolist()

    def test_unknown_rule(self, line):
        cs = line.lift(_noisy_line(n=10))
        with pytest.raises(InvalidInputError):
            classify_inliers(cs, np.array([0.0, 1.0]), 2.0, 1.0, mode="vote")

    def test_worker_count_does_not_matter(self, line):
        cs = line.lift(_noisy_line(sigma=0.2, outliers=40, seed=4))
        a = classify_inliers(cs, np.array([0.0, 1.0]), 2.0, 0.6, workers=1)
        b = classify_inliers(cs, np.array([0.0, 1.0]), 2.0, 0.6, workers=4)
        assert np.array_equal(a, b)


# ===== 5. TLS refit =====


class TestTlsRefit:
    def test_exact_inliers(self, line):
        cs = line.lift(_noisy_line(n=50))
        fit = tls_refit(line, cs, np.array([0.1, 1.0]) / math.hypot(0.1, 1.0), 1.9)
        assert np.allclose(fit.theta, [0.0, 1.0], atol=1e-12)
        assert fit.alpha == pytest.approx(2.0)
        assert fit.sigma <= 1e-8
        assert fit.flags == []

    def test_symmetric_pair(self, line):
        cs = line.lift(np.array([[0.0, 1.0], [0.0, -1.0], [5.0, 1.0], [5.0, -1.0]]))
        fit = tls_refit(line, cs, np.array([0.0, 1.0]), 0.5)
        assert np.allclose(fit.theta, [0.0, 1.0])
        assert fit.alpha == pytest.approx(0.0)
        assert fit.sigma == pytest.approx(1.0)

    def test_noisy_line_scale(self, line):
        cs = line.lift(_noisy_line(n=200, sigma=3.0, seed=9) * [100, 1])
        fit = tls_refit(line, cs, np.array([0.0, 1.0]), 2.0)
        angle = math.degrees(math.atan2(abs(fit.theta[0]), abs(fit.theta[1])))
        assert angle < 0.5
        assert 2.0 * 3.0 <= fit.sigma <= 4.5 * 3.0

    def test_too_few_inliers_keeps_the_estimate(self, line):
        cs = line.lift(np.array([[1.0, 2.5]]))
        fit = tls_refit(line, cs, np.array([0.0, 1.0]), 2.0)
        assert "refit-skipped" in fit.flags
        assert fit.alpha == 2.0
        assert fit.sigma == pytest.approx(0.5)

    def test_constraint_fallback(self):
        model = get_model("ellipse2d")
        xs = np.linspace(0.5, 4.0, 12)
        cs = model.lift(np.column_stack([xs, 1 / xs]))  # a hyperbola
        theta = np.array([0, 0, 1, 0, 1]) / math.sqrt(2)
        fit = tls_refit(model, cs, theta, 1.0)
        assert fit.flags == ["tls-constraint-fallback"]
        assert np.array_equal(fit.theta, theta)

    def test_homogeneous_refit(self):
        model = get_model("homography")
        true_h = np.array([[1.0, 0.1, 0.5], [0.0, 0.9, -0.2], [0.05, 0.0, 1.0]])
        rng = np.random.default_rng(0)
        src = rng.uniform(-1, 1, (12, 2))
        dst = np.column_stack([src, np.ones(12)]) @ true_h.T
        dst = dst[:, :2] / dst[:, 2:3]
        cs = model.lift(np.column_stack([src, dst]))
        fit = tls_refit(model, cs, np.eye(3).reshape(-1) / math.sqrt(3), 0.0)
        h = fit.theta.reshape(3, 3)
        assert fit.alpha == 0.0
        assert np.allclose(h / h[2, 2], true_h, atol=1e-9)
        assert fit.sigma < 1e-9

    def test_distances_use_the_refit_frame(self, line):
        pts = _noisy_line(n=40, sigma=0.2, seed=6)
        cs = line.lift(pts)
        fit = tls_refit(line, cs, np.array([0.0, 1.0]), 2.0)
        assert fit.sigma == pytest.approx(distances(cs, fit.theta, fit.alpha).distance.max())
