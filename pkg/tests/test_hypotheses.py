"""
Tests for the hypothesis engine (misre.estimation.hypotheses).

Covers:
  1. Max-Mahalanobis distances, including the zero-variance rule.
  2. Initial set size and min-sum scoring.
  3. Winner selection and its sorted distance sequence.
  4. Seeded sampling: determinism, worker independence, failures.
"""

import math
from unittest.mock import patch

import numpy as np
import pytest

from misre.core.config import settings
from misre.core.errors import InvalidInputError, SamplingFailureError
from misre.data.synth import generate, preset
from misre.estimation.hypotheses import (
    ScoredHypothesis,
    distance_matrix,
    distances,
    hypothesis_stream,
    mahalanobis,
    n_epsilon,
    sample_hypotheses,
    score_hypotheses,
    score_hypothesis,
    select_best,
)
from misre.geometry import get_model
from misre.geometry.base import CarrierSet, Hypothesis


@pytest.fixture
def line():
    return get_model("line2d")


@pytest.fixture
def two_ellipses():
    ds = generate(preset("two-ellipses", seed=11))
    model = get_model("ellipse2d")
    y_norm, _ = model.normalize_points(ds.points)
    return model, model.lift(y_norm), ds


def _ellipse_hypothesis(q, center, level):
    """(y - c)^T Q (y - c) = level in the (x, y, x^2, xy, y^2) layout, unit theta."""
    qc = q @ center
    theta = np.array([-2 * qc[0], -2 * qc[1], q[0, 0], 2 * q[0, 1], q[1, 1]])
    alpha = level - center @ qc
    norm = np.linalg.norm(theta)
    return theta / norm, alpha / norm


# ===== 1. distances =====


class TestMahalanobis:
    def test_line_unit_covariance(self, line):
        cs = line.lift(np.array([[5.0, 2.0]]))
        rec = mahalanobis(cs, Hypothesis(np.array([0.0, 1.0]), 0.0))
        assert rec.distance == pytest.approx(2.0)
        assert rec.channel == 0

    def test_point_on_locus_is_zero(self, line):
        cs = line.lift(np.array([[7.0, 3.0]]))
        assert mahalanobis(cs, Hypothesis(np.array([0.0, 1.0]), 3.0)).distance == 0.0

    def test_ellipse_uses_jacobian_at_the_point(self):
        model = get_model("ellipse2d")
        cs = model.lift(np.array([[2.0, 0.0]]))
        h = Hypothesis(np.array([0, 0, 1, 0, 1]) / math.sqrt(2), 1 / math.sqrt(2))
        table = distances(cs, h.theta, h.alpha)
        assert table.projection[0] == pytest.approx(4 / math.sqrt(2))
        assert table.variance[0] == pytest.approx(8.0)
        assert table.distance[0] == pytest.approx(0.75)

    def test_zero_variance_rule(self):
        carriers = np.array([[[1.0, 0.0]], [[3.0, 0.0]]])
        cs = CarrierSet(carriers, np.zeros((2, 1, 2, 2)), np.zeros((2, 1, 2, 2)))
        d = distance_matrix(cs, np.array([[1.0, 0.0]]), np.array([1.0]))[0]
        assert d[0] == 0.0
        assert math.isinf(d[1])

    def test_homography_takes_the_worse_channel(self):
        model = get_model("homography")
        # identity H, point displaced only in y'
        cs = model.lift(np.array([[1.0, 1.0, 1.0, 3.0]]))
        theta = np.eye(3).reshape(-1) / math.sqrt(3)
        table = distances(cs, theta, 0.0)
        assert table.channel[0] == 1
        assert table.distance[0] > 0

    def test_negated_hypothesis_gives_the_same_distances(self):
        model = get_model("ellipse2d")
        rng = np.random.default_rng(3)
        cs = model.lift(rng.uniform(-2, 2, (50, 2)))
        theta = np.array([0.1, -0.3, 1.0, 0.2, 2.0])
        theta /= np.linalg.norm(theta)
        a = distances(cs, theta, 0.7).distance
        b = distances(cs, -theta, -0.7).distance
        assert np.array_equal(a, b)

    def test_ellipse_distances_survive_translation(self):
        model = get_model("ellipse2d")
        q = np.array([[1.0, 0.3], [0.3, 2.0]])
        rng = np.random.default_rng(8)
        pts = rng.uniform(-1, 3, (60, 2))
        shift = np.array([3.0, -2.0])
        d = [distances(model.lift(pts + t), *_ellipse_hypothesis(q, np.array([1.0, 1.0]) + t, 1.5)).distance
             for t in (np.zeros(2), shift)]
        assert np.allclose(d[0], d[1], rtol=1e-9, atol=1e-9)

    def test_sphere_distances_survive_translation(self):
        model = get_model("sphere3d")
        rng = np.random.default_rng(8)
        pts = rng.uniform(-1, 3, (60, 3))
        shift = np.array([2.0, -1.0, 4.0])
        d = []
        for t in (np.zeros(3), shift):
            c = np.array([1.0, 1.0, 1.0]) + t
            theta = np.concatenate([[1.0], -2.0 * c])
            norm = np.linalg.norm(theta)
            d.append(distances(model.lift(pts + t), theta / norm, (4.0 - c @ c) / norm).distance)
        assert np.allclose(d[0], d[1], rtol=1e-9, atol=1e-9)

    def test_index_out_of_range(self, line):
        cs = line.lift(np.zeros((2, 2)))
        with pytest.raises(InvalidInputError):
            mahalanobis(cs, Hypothesis(np.array([0.0, 1.0]), 0.0), index=5)


# ===== 2. scoring =====


class TestScoring:
    def test_n_epsilon(self):
        assert n_epsilon(1350, 5, 2) == 68
        assert n_epsilon(100, 5, 2) == 10
        assert n_epsilon(100, 5, 9) == 45

    def test_sum_of_smallest(self, line):
        cs = line.lift(np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 9.0]]))
        assert score_hypothesis(cs, Hypothesis(np.array([0.0, 1.0]), 0.0), 2) == pytest.approx(1.0)

    def test_matches_full_sort(self, line):
        rng = np.random.default_rng(5)
        cs = line.lift(rng.normal(size=(50, 2)))
        h = Hypothesis(np.array([0.6, 0.8]), 0.1)
        d = np.sort(distances(cs, h.theta, h.alpha).distance)
        assert score_hypothesis(cs, h, 17) == pytest.approx(d[:17].sum())

    def test_n_eps_larger_than_set(self, line):
        cs = line.lift(np.zeros((3, 2)))
        with pytest.raises(InvalidInputError):
            score_hypothesis(cs, Hypothesis(np.array([0.0, 1.0]), 0.0), 4)

    def test_batched_scores_match_single(self, line):
        rng = np.random.default_rng(2)
        cs = line.lift(rng.uniform(0, 10, (40, 2)))
        hyps = []
        for k in range(7):
            ang = rng.uniform(0, np.pi)
            hyps.append(Hypothesis(np.array([math.cos(ang), math.sin(ang)]), rng.uniform(0, 5), index=k))
        scored = score_hypotheses(cs, hyps, 10, workers=1, chunk=3)
        for s, h in zip(scored, hyps):
            assert s.score == pytest.approx(score_hypothesis(cs, h, 10))


# ===== 3. selection =====


class TestSelectBest:
    def test_single_hypothesis(self, line):
        cs = line.lift(np.array([[0.0, 3.0], [0.0, 1.0], [0.0, 2.0]]))
        h = Hypothesis(np.array([0.0, 1.0]), 0.0)
        best = select_best(cs, score_hypotheses(cs, [h], 2))
        assert np.allclose(best.sorted_distances, [1, 2, 3])
        assert list(best.initial_set) == [1, 2]

    def test_tie_goes_to_lower_index(self, line):
        cs = line.lift(np.zeros((3, 2)))
        a = ScoredHypothesis(Hypothesis(np.array([0.0, 1.0]), 0.0, index=4), 5.0, 2)
        b = ScoredHypothesis(Hypothesis(np.array([1.0, 0.0]), 0.0, index=2), 5.0, 2)
        assert select_best(cs, [a, b]).index == 2

    def test_empty(self, line):
        with pytest.raises(SamplingFailureError):
            select_best(line.lift(np.zeros((3, 2))), [])

    def test_sequence_only_for_the_winner(self, line):
        s = ScoredHypothesis(Hypothesis(np.array([0.0, 1.0]), 0.0), 1.0, 2)
        with pytest.raises(InvalidInputError):
            s.sorted_distances

    def test_initial_set_comes_from_one_ellipse(self, two_ellipses):
        model, cs, ds = two_ellipses
        n_eps = n_epsilon(len(cs), 5, model.spec.m_e)
        sampled = sample_hypotheses(model, cs, 1000, seed=3)
        best = select_best(cs, score_hypotheses(cs, sampled.hypotheses, n_eps))
        labels = ds.labels[best.initial_set]
        _, counts = np.unique(labels, return_counts=True)
        assert counts.max() / labels.size >= 0.9

    def test_winner_is_unchanged_when_the_points_are_scaled(self, line):
        ds = generate(preset("single-line", seed=4))
        picks = []
        for s in (1.0, 4.0):
            cs = line.lift(ds.points * s)
            n_eps = n_epsilon(len(cs), 5, line.spec.m_e)
            sampled = sample_hypotheses(line, cs, 200, seed=6)
            picks.append(select_best(cs, score_hypotheses(cs, sampled.hypotheses, n_eps)))
        assert picks[0].index == picks[1].index
        assert np.array_equal(picks[0].initial_set, picks[1].initial_set)
        assert np.array_equal(picks[0].order, picks[1].order)
        assert np.allclose(picks[1].sorted_distances, 4.0 * picks[0].sorted_distances, rtol=1e-9, atol=1e-9)


# ===== 4. sampling =====


class TestSampling:
    def test_same_seed_same_hypotheses(self, two_ellipses):
        model, cs, _ = two_ellipses
        a = sample_hypotheses(model, cs, 50, seed=9)
        b = sample_hypotheses(model, cs, 50, seed=9)
        assert [h.source_subset for h in a.hypotheses] == [h.source_subset for h in b.hypotheses]

    def test_worker_count_does_not_change_the_winner(self, two_ellipses):
        model, cs, _ = two_ellipses
        n_eps = n_epsilon(len(cs), 5, model.spec.m_e)
        winners = []
        for workers in (1, 4):
            sampled = sample_hypotheses(model, cs, 300, seed=1, workers=workers)
            scored = score_hypotheses(cs, sampled.hypotheses, n_eps, workers=workers)
            winners.append(select_best(cs, scored))
        assert winners[0].index == winners[1].index
        assert winners[0].score == winners[1].score
        assert np.array_equal(winners[0].order, winners[1].order)

    def test_streams_are_keyed(self):
        a = hypothesis_stream(1, 0, 0, 5).random(3)
        assert np.array_equal(a, hypothesis_stream(1, 0, 0, 5).random(3))
        assert not np.array_equal(a, hypothesis_stream(1, 1, 0, 5).random(3))
        assert not np.array_equal(a, hypothesis_stream(1, 0, 1, 5).random(3))

    def test_exactly_m_e_points(self, line):
        cs = line.lift(np.array([[0.0, 0.0], [1.0, 2.0]]))
        sampled = sample_hypotheses(line, cs, 5, seed=0)
        assert len(sampled.hypotheses) == 5
        assert all(sorted(h.source_subset) == [0, 1] for h in sampled.hypotheses)

    def test_population_restricts_draws(self, line):
        rng = np.random.default_rng(0)
        cs = line.lift(rng.uniform(0, 10, (30, 2)))
        pop = np.array([3, 7, 11, 19])
        sampled = sample_hypotheses(line, cs, 20, seed=0, population=pop)
        assert all(set(h.source_subset) <= set(pop.tolist()) for h in sampled.hypotheses)

    def test_all_rank_deficient_raises(self, line):
        cs = line.lift(np.ones((6, 2)))
        with pytest.raises(SamplingFailureError) as exc:
            sample_hypotheses(line, cs, 4, seed=0, budget=3)
        assert exc.value.dominant_reason == "rank-deficient"
        assert exc.value.rejections["rank-deficient"] == 12

    def test_budget_defaults_to_settings(self, line):
        cs = line.lift(np.ones((6, 2)))
        with patch.object(settings, "rejection_budget", 2):
            with pytest.raises(SamplingFailureError) as exc:
                sample_hypotheses(line, cs, 3, seed=0)
        assert exc.value.rejections["rank-deficient"] == 6

    def test_too_few_points(self, line):
        with pytest.raises(InvalidInputError):
            sample_hypotheses(line, line.lift(np.zeros((1, 2))), 3, seed=0)

    def test_exhausted_hypotheses_are_counted(self, line):
        # only the pair (0, 1) is degenerate
        cs = line.lift(np.array([[1.0, 1.0], [1.0, 1.0], [5.0, 2.0]]))
        sampled = sample_hypotheses(line, cs, 30, seed=2, budget=1)
        assert sampled.exhausted > 0
        assert sampled.exhausted + len(sampled.hypotheses) == 30
        assert sampled.rejections["rank-deficient"] == sampled.exhausted

    def test_nothing_exhausted_on_clean_data(self, line):
        cs = line.lift(np.random.default_rng(0).uniform(0, 10, (30, 2)))
        assert sample_hypotheses(line, cs, 40, seed=0).exhausted == 0
