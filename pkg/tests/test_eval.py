import io
import json
import math

import numpy as np
import pytest

from kavguard.decision import Category, Verdict
from kavguard.errors import UsageError
from kavguard.evaluate import (accuracy, auroc, outlier_rate, sweep_report,
                               sweep_report_from_scores, softmax_scores,
                               trapezoid_area, write_curve_csv,
                               write_roc_report, write_sweep_csv)


def pairwise_auroc(pos, neg):
    """Oracle: count correctly ordered pairs, ties worth half."""
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0
               for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def make_verdict(i, category, top1=0, d1=1.0):
    return Verdict(i, category, top1, 1, d1, d1 + 1.0, 9.0, 4.0, -d1)


# --- auroc ------------------------------------------------------------------

def test_auroc_perfect_separation():
    assert auroc([1.0, 2.0], [0.0]).auroc == 1.0


def test_auroc_complete_tie():
    assert auroc([1.0], [1.0]).auroc == 0.5


def test_auroc_three_of_four_pairs():
    assert auroc([0.8, 0.4], [0.6, 0.2]).auroc == 0.75


def test_auroc_matches_pairwise_oracle():
    rng = np.random.default_rng(50)
    for _ in range(10):
        pos = rng.normal(loc=0.5, size=30).round(1)  # rounding forces ties
        neg = rng.normal(size=40).round(1)
        expected = pairwise_auroc(list(pos), list(neg))
        assert auroc(pos, neg).auroc == pytest.approx(expected, abs=1e-12)


def test_auroc_complement_identity():
    rng = np.random.default_rng(51)
    pos = rng.normal(size=25).round(1)
    neg = rng.normal(size=35).round(1)
    total = auroc(pos, neg).auroc + auroc(neg, pos).auroc
    assert total == pytest.approx(1.0, abs=1e-12)


def test_auroc_invariant_under_monotone_transform():
    rng = np.random.default_rng(52)
    pos = rng.normal(size=50)
    neg = rng.normal(size=60)
    base = auroc(pos, neg).auroc
    for transform in (lambda x: 3.0 * x + 7.0,
                      np.tanh,
                      lambda x: np.exp(x / 4.0)):
        assert auroc(transform(pos), transform(neg)).auroc == \
            pytest.approx(base, abs=1e-12)


def test_curve_endpoints_monotone_and_area():
    rng = np.random.default_rng(53)
    pos = rng.normal(loc=1.0, size=40).round(1)
    neg = rng.normal(size=40).round(1)
    curve = auroc(pos, neg)
    assert curve.points[0] == (0.0, 0.0)
    assert curve.points[-1] == (1.0, 1.0)
    fprs = [p[0] for p in curve.points]
    tprs = [p[1] for p in curve.points]
    assert fprs == sorted(fprs)
    assert tprs == sorted(tprs)
    assert trapezoid_area(curve.points) == pytest.approx(curve.auroc, abs=1e-12)


def test_auroc_rejects_empty_or_nonfinite():
    with pytest.raises(UsageError, match="empty"):
        auroc([], [1.0])
    with pytest.raises(UsageError, match="empty"):
        auroc([1.0], [])
    with pytest.raises(UsageError, match="finite"):
        auroc([float("inf")], [1.0])


# --- outlier rate -----------------------------------------------------------

def test_outlier_rate_all_and_none():
    all_out = [make_verdict(i, Category.OUTLIER) for i in range(5)]
    none_out = [make_verdict(i, Category.CERTAIN) for i in range(5)]
    assert outlier_rate(all_out) == 1.0
    assert outlier_rate(none_out) == 0.0


def test_outlier_rate_86_of_100():
    verdicts = [make_verdict(i, Category.OUTLIER) for i in range(86)]
    verdicts += [make_verdict(86 + i, Category.UNCERTAIN) for i in range(14)]
    assert outlier_rate(verdicts) == 0.86


def test_outlier_rate_rejects_empty():
    with pytest.raises(UsageError, match="no verdicts"):
        outlier_rate([])


# --- accuracy ---------------------------------------------------------------

def test_accuracy_all_certain_correct():
    verdicts = [make_verdict(i, Category.CERTAIN, top1=i % 3) for i in range(6)]
    truth = [i % 3 for i in range(6)]
    assert accuracy(verdicts, truth) == (1.0, 1.0, 0.0)


def test_accuracy_half_uncertain_wrong():
    # certain half all correct, uncertain half all wrong
    verdicts = [make_verdict(0, Category.CERTAIN, top1=1),
                make_verdict(1, Category.CERTAIN, top1=1),
                make_verdict(2, Category.UNCERTAIN, top1=0),
                make_verdict(3, Category.UNCERTAIN, top1=0)]
    truth = [1, 1, 1, 1]
    assert accuracy(verdicts, truth) == (0.5, 1.0, 0.5)


def test_accuracy_counting_oracle():
    rng = np.random.default_rng(54)
    cats = list(Category)
    verdicts = [make_verdict(i, cats[rng.integers(3)], top1=int(rng.integers(4)))
                for i in range(200)]
    truth = [int(rng.integers(4)) for _ in range(200)]
    overall, certain_only, abstain = accuracy(verdicts, truth)
    hits = [v.top1 == t for v, t in zip(verdicts, truth)]
    certain = [i for i, v in enumerate(verdicts)
               if v.category == Category.CERTAIN]
    assert overall == sum(hits) / 200
    assert certain_only == sum(hits[i] for i in certain) / len(certain)
    assert abstain == (200 - len(certain)) / 200


def test_accuracy_no_certain_is_nan():
    verdicts = [make_verdict(0, Category.OUTLIER)]
    overall, certain_only, abstain = accuracy(verdicts, [0])
    assert math.isnan(certain_only)
    assert abstain == 1.0


def test_accuracy_rejects_length_mismatch():
    with pytest.raises(UsageError, match="verdicts vs"):
        accuracy([make_verdict(0, Category.CERTAIN)], [0, 1])


# --- sweep ------------------------------------------------------------------

def test_sweep_equal_levels_equal_means():
    verdicts = [make_verdict(i, Category.CERTAIN, d1=float(i)) for i in range(4)]
    report = sweep_report({0.0: verdicts, 0.1: list(verdicts)})
    assert report.levels[0].mean_confidence == report.levels[1].mean_confidence


def test_sweep_mean_confidence_tracks_noise():
    per_level = {}
    for level in (0.0, 0.1, 0.2, 0.3):
        per_level[level] = [make_verdict(i, Category.CERTAIN, d1=level)
                            for i in range(3)]
    report = sweep_report(per_level)
    means = [lvl.mean_confidence for lvl in report.levels]
    assert means == sorted(means, reverse=True)
    assert [lvl.noise_level for lvl in report.levels] == [0.0, 0.1, 0.2, 0.3]


def test_sweep_mean_matches_hand_average():
    rng = np.random.default_rng(55)
    scores_a = list(rng.normal(size=7))
    scores_b = list(rng.normal(size=5))
    report = sweep_report_from_scores({0.0: scores_a, 1.0: scores_b})
    assert report.levels[0].mean_confidence == pytest.approx(
        sum(scores_a) / len(scores_a), rel=1e-15)
    assert report.levels[1].mean_confidence == pytest.approx(
        sum(scores_b) / len(scores_b), rel=1e-15)
    assert math.isnan(report.levels[0].auc)


def test_sweep_auc_against_baseline():
    baseline = [10.0, 11.0, 12.0]
    report = sweep_report_from_scores({0.0: [10.0, 11.0, 12.0],
                                       1.0: [0.0, 1.0, 2.0]}, baseline)
    assert report.levels[1].auc == 1.0
    assert report.levels[0].auc == 0.5


def test_sweep_rejects_single_level():
    with pytest.raises(UsageError, match="2 levels"):
        sweep_report_from_scores({0.0: [1.0]})


# --- softmax scores ---------------------------------------------------------

def test_softmax_scores_match_direct_computation():
    logits = np.array([2.0, 1.0, 0.0])
    expected = float(np.exp(2.0) / np.exp([2.0, 1.0, 0.0]).sum())
    assert softmax_scores([logits]) == [pytest.approx(expected, rel=1e-12)]


def test_softmax_scores_stable_at_large_logits():
    scores = softmax_scores([np.array([1000.0, 999.0])])
    assert 0.5 < scores[0] < 1.0


def test_softmax_scores_reject_missing_logits():
    with pytest.raises(UsageError, match="logits"):
        softmax_scores([None])


# --- emission ---------------------------------------------------------------

def test_roc_report_json():
    curve = auroc([0.8, 0.4], [0.6, 0.2])
    sink = io.StringIO()
    write_roc_report(curve, sink)
    doc = json.loads(sink.getvalue())
    assert doc["auroc"] == 0.75
    assert doc["curve"][0] == [0.0, 0.0]
    assert doc["curve"][-1] == [1.0, 1.0]


def test_curve_csv_header_and_rows():
    curve = auroc([1.0], [0.0])
    sink = io.StringIO()
    write_curve_csv(curve, sink)
    lines = sink.getvalue().splitlines()
    assert lines[0] == "fpr,tpr"
    assert len(lines) == len(curve.points) + 1


def test_sweep_csv_layout():
    report = sweep_report_from_scores({0.0: [1.0], 0.5: [0.0]}, [2.0])
    sink = io.StringIO()
    write_sweep_csv(report, sink)
    lines = sink.getvalue().splitlines()
    assert lines[0] == "noise_level,mean_confidence,auc"
    assert lines[1].startswith("0.0,1.0,")
    assert len(lines) == 3
