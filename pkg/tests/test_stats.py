import math

import numpy as np
import pytest

from erdkit.ensemble import (disagreement_statistic, entropy_avg_statistic,
                             tv_distance)
from erdkit.errors import ShapeError, ValidationError


def random_prob_vectors(rng, k, classes):
    raw = rng.gamma(1.0, size=(k, classes))
    return list(raw / raw.sum(axis=1, keepdims=True))


class TestTvDistance:
    def test_identical(self):
        p = np.array([0.2, 0.3, 0.5])
        assert tv_distance(p, p) == 0.0

    def test_disjoint_support(self):
        assert tv_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0

    def test_hand_value(self):
        assert tv_distance(np.array([0.5, 0.5]),
                           np.array([0.25, 0.75])) == pytest.approx(0.25)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            p, q = random_prob_vectors(rng, 2, 4)
            assert tv_distance(p, q) == tv_distance(q, p)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            tv_distance(np.array([0.5, 0.5]), np.array([1 / 3] * 3))

    def test_not_a_distribution(self):
        with pytest.raises(ValidationError):
            tv_distance(np.array([0.9, 0.3]), np.array([0.5, 0.5]))


class TestDisagreementStatistic:
    def test_identical_outputs_zero(self):
        p = np.array([0.1, 0.2, 0.7])
        assert disagreement_statistic([p, p, p]) == 0.0

    def test_two_members_reduce_to_tv(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            p, q = random_prob_vectors(rng, 2, 5)
            assert disagreement_statistic([p, q]) == tv_distance(p, q)

    def test_three_one_hots(self):
        eye = np.eye(3)
        assert disagreement_statistic(list(eye)) == 1.0

    def test_needs_two_members(self):
        with pytest.raises(ValidationError):
            disagreement_statistic([np.array([0.5, 0.5])])

    def test_bounds_and_permutation_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            k = int(rng.integers(2, 6))
            outputs = random_prob_vectors(rng, k, int(rng.integers(2, 6)))
            t = disagreement_statistic(outputs)
            assert 0.0 <= t <= 1.0
            perm = [outputs[i] for i in rng.permutation(k)]
            assert abs(disagreement_statistic(perm) - t) <= 1e-12


class TestEntropyAvgStatistic:
    def test_single_one_hot_zero(self):
        assert entropy_avg_statistic([np.array([0.0, 1.0, 0.0])]) == 0.0

    def test_uniform_two_classes(self):
        u = np.array([0.5, 0.5])
        assert entropy_avg_statistic([u, u]) == pytest.approx(math.log(2))

    def test_disagreement_blindness_exact(self):
        # two confident members on opposite classes average to uniform:
        # the score cannot tell contradiction from shared uncertainty
        opposed = entropy_avg_statistic([np.array([1.0, 0.0]),
                                         np.array([0.0, 1.0])])
        assert opposed == math.log(2)

    def test_upper_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            classes = int(rng.integers(2, 7))
            outputs = random_prob_vectors(rng, int(rng.integers(1, 5)), classes)
            assert entropy_avg_statistic(outputs) <= math.log(classes) + 1e-12
