import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vapformer.errors import MetricError
from vapformer.metrics import EvalResult, auc, bacc, f1
from vapformer.reference import confusion_metrics_loop, pairwise_auc_loop, trapezoid_auc


def result(scores, labels, threshold=0.5):
    return EvalResult(np.array(scores, dtype=float), np.array(labels), threshold)


# ---------------------------------------------------------------- bacc

def test_bacc_perfect():
    assert bacc(result([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])) == 1.0


def test_bacc_matches_confusion_oracle():
    labels, preds = [1, 1, 0, 0], [1, 0, 0, 0]
    expected, _ = confusion_metrics_loop(labels, preds)
    assert expected == (0.5 + 1.0) / 2
    r = result([0.9, 0.1, 0.2, 0.3], labels)
    assert bacc(r) == expected == 0.75


def test_bacc_chance_level_for_constant_predictor():
    assert bacc(result([0.9, 0.9, 0.9, 0.9], [1, 0, 1, 0])) == 0.5


def test_bacc_single_class_is_undefined():
    with pytest.raises(MetricError):
        bacc(result([0.4, 0.6], [1, 1]))


# ---------------------------------------------------------------- f1

def test_f1_perfect():
    assert f1(result([0.9, 0.8, 0.1], [1, 1, 0])) == 1.0


def test_f1_matches_confusion_oracle():
    labels, preds = [1, 1, 0, 0], [1, 0, 0, 0]
    _, expected = confusion_metrics_loop(labels, preds)
    assert expected == 2 / 3
    assert f1(result([0.9, 0.1, 0.2, 0.3], labels)) == expected


def test_f1_zero_when_no_true_positives():
    assert f1(result([0.1, 0.1, 0.9], [1, 1, 0])) == 0.0


def test_f1_undefined_without_any_positives():
    with pytest.raises(MetricError):
        f1(result([0.1, 0.2], [0, 0]))


# ---------------------------------------------------------------- auc

def test_auc_perfect_separation():
    assert auc(result([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])) == 1.0


def test_auc_matches_exhaustive_pairwise_oracle():
    scores = [0.1, 0.4, 0.35, 0.8]
    labels = [0, 0, 1, 1]
    expected = pairwise_auc_loop(scores, labels)
    assert expected == 0.75
    assert auc(result(scores, labels)) == expected


def test_auc_all_ties_is_half():
    assert auc(result([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1])) == 0.5


def test_auc_single_class_is_undefined():
    with pytest.raises(MetricError):
        auc(result([0.4, 0.6], [0, 0]))


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_auc_pairwise_equals_trapezoid(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(5, 200))
    labels = gen.integers(0, 2, size=n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    scores = np.round(gen.random(n), 2)  # coarse scores force ties
    r = result(scores, labels)
    assert abs(auc(r) - trapezoid_auc(scores, labels)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_auc_invariant_under_monotone_transform(seed):
    gen = np.random.default_rng(seed)
    scores = gen.random(30)
    labels = gen.integers(0, 2, size=30)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    squashed = 1.0 / (1.0 + np.exp(-(5.0 * scores - 2.0)))  # strictly increasing
    assert abs(auc(result(scores, labels)) - auc(result(squashed, labels))) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_bacc_invariant_under_permutation(seed):
    gen = np.random.default_rng(seed)
    scores = gen.random(20)
    labels = gen.integers(0, 2, size=20)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    perm = gen.permutation(20)
    assert bacc(result(scores, labels)) == bacc(result(scores[perm], labels[perm]))


def test_eval_result_validates_scores_and_labels():
    with pytest.raises(MetricError):
        result([1.5], [1])
    with pytest.raises(MetricError):
        result([0.5], [2])
    with pytest.raises(MetricError):
        EvalResult(np.zeros(0), np.zeros(0, dtype=int))


def test_confusion_counts_sum_to_sample_count():
    r = result([0.9, 0.1, 0.6, 0.4, 0.5], [1, 0, 0, 1, 1])
    assert sum(r.confusion()) == 5
