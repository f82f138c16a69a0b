from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ttest_rel

from commotions.metrics import (
    BinaryEval,
    SingleClassError,
    TimePoint,
    TrajEval,
    ade,
    auc,
    paired_t_test,
    roc_points,
    tnr_pr,
)

from oracles import brute_force_auc, exhaustive_tnr_pr


def ev(labels, scores):
    return BinaryEval(np.asarray(labels), np.asarray(scores, dtype=float))


labelled_scores = st.integers(2, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda l: 0 < sum(l) < len(l)),
        st.lists(st.integers(0, 12).map(lambda k: k / 4.0), min_size=n, max_size=n),
    )
)


class TestAUC:
    def test_separated(self):
        assert auc(ev([1, 1, 0], [0.9, 0.8, 0.1])) == 1.0

    def test_all_tied(self):
        assert auc(ev([1, 0, 1, 0], [0.3] * 4)) == 0.5

    def test_pair_enumeration_example(self):
        assert auc(ev([1, 1, 0, 0], [0.9, 0.4, 0.6, 0.1])) == 0.75

    def test_single_class(self):
        with pytest.raises(SingleClassError):
            auc(ev([1, 1], [0.2, 0.3]))

    def test_time_point_tag(self):
        assert BinaryEval([1, 0], [1.0, 0.0], "characteristic_gap").time_point is TimePoint.CHARACTERISTIC_GAP

    @given(labelled_scores)
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force(self, data):
        labels, scores = data
        assert auc(ev(labels, scores)) == pytest.approx(brute_force_auc(labels, scores), abs=1e-15)

    @given(labelled_scores)
    @settings(max_examples=100, deadline=None)
    def test_invariant_under_increasing_transform(self, data):
        labels, scores = data
        s = np.asarray(scores)
        e = ev(labels, s)
        t = ev(labels, np.exp(3 * s) - 7.0)
        assert auc(e) == auc(t)
        assert tnr_pr(e) == tnr_pr(t)

    @given(labelled_scores)
    @settings(max_examples=100, deadline=None)
    def test_roc_area_equals_auc(self, data):
        e = ev(*data)
        roc = roc_points(e)
        assert roc[0].tolist() == [0.0, 0.0] and roc[-1].tolist() == [1.0, 1.0]
        assert np.trapezoid(roc[:, 1], roc[:, 0]) == pytest.approx(auc(e), abs=1e-12)


class TestTNRPR:
    def test_hand_example(self):
        assert tnr_pr(ev([1, 1, 0, 0, 0], [0.8, 0.6, 0.7, 0.3, 0.2])) == pytest.approx(2 / 3)

    def test_separated(self):
        assert tnr_pr(ev([1, 1, 0, 0], [0.8, 0.6, 0.5, 0.1])) == 1.0

    def test_tie_with_lowest_positive_is_a_false_positive(self):
        assert tnr_pr(ev([1, 1, 0, 0], [0.8, 0.6, 0.6, 0.1])) == 0.5

    def test_single_class(self):
        with pytest.raises(SingleClassError):
            tnr_pr(ev([0, 0], [0.2, 0.3]))

    @given(labelled_scores)
    @settings(max_examples=200, deadline=None)
    def test_matches_exhaustive_search(self, data):
        assert tnr_pr(ev(*data)) == exhaustive_tnr_pr(*data)


class TestADE:
    def _line(self, n=20):
        t = np.arange(n) * 0.1
        return np.column_stack([t * 3.0, np.sin(t)])

    def test_exact_prediction(self):
        truth = self._line()
        assert ade(TrajEval([truth[None]], [truth])) == 0.0

    def test_constant_offset(self):
        truth = self._line()
        assert ade(TrajEval([truth + [0.0, 1.0]], [truth])) == pytest.approx(1.0)

    def test_mean_over_rollouts(self):
        truth = self._line()
        preds = np.stack([truth + [1.0, 0.0], truth + [0.0, -3.0]])
        assert ade(TrajEval([preds], [truth])) == pytest.approx(2.0)

    def test_mean_over_samples(self):
        a, b = self._line(10), self._line(30)
        assert ade(TrajEval([a + [1.0, 0.0], b + [4.0, 0.0]], [a, b])) == pytest.approx(2.5)

    def test_timestamp_mismatch(self):
        truth = self._line()
        t = np.arange(20) * 0.1
        with pytest.raises(ValueError):
            ade(TrajEval([truth[None]], [truth], [t + 0.05], [t]))
        with pytest.raises(ValueError):
            ade(TrajEval([truth[None, :10]], [truth]))

    @given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
    @settings(max_examples=100, deadline=None)
    def test_translation_invariant(self, seed, dx, dy):
        rng = np.random.default_rng(seed)
        truth = rng.normal(size=(15, 2))
        preds = truth + rng.normal(size=(4, 15, 2))
        base = ade(TrajEval([preds], [truth]))
        shifted = ade(TrajEval([preds + [dx, dy]], [truth + [dx, dy]]))
        assert base >= 0.0
        assert shifted == pytest.approx(base, rel=1e-9, abs=1e-9)


class TestPairedTTest:
    def test_identical(self):
        r = paired_t_test([0.8, 0.9, 0.7], [0.8, 0.9, 0.7])
        assert r.t == 0.0 and not r.significant

    def test_constant_difference_is_significant(self):
        r = paired_t_test([1.5, 2.5, 3.5], [1.0, 2.0, 3.0])
        assert r.t == np.inf and r.p == 0.0 and r.significant

    def test_hand_computed_statistic(self):
        diffs = np.array([1.0, 1.2, 0.8, 1.1, 0.9])
        r = paired_t_test(diffs, np.zeros(5))
        # mean 1.0, sd sqrt(0.025), t = 1 / (sqrt(0.025) / sqrt(5)) = 10 sqrt(2)
        assert r.t == pytest.approx(10.0 * np.sqrt(2.0), abs=1e-12)
        assert r.p < 0.001 and r.significant

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            paired_t_test([1.0, 2.0], [1.0])

    @given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=2, max_size=30))
    @settings(max_examples=150, deadline=None)
    def test_matches_scipy_and_is_antisymmetric(self, pairs):
        a, b = np.array(pairs).T
        d = a - b
        if np.ptp(d) < 1e-6:
            return
        r = paired_t_test(a, b)
        ref = ttest_rel(a, b)
        assert r.t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)
        assert r.p == pytest.approx(ref.pvalue, rel=1e-7, abs=1e-12)
        flipped = paired_t_test(b, a)
        assert flipped.t == -r.t and flipped.p == r.p
