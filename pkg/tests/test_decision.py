import io
import math

import numpy as np
import pytest

from conftest import make_model, make_stats
from kavguard.decision import (Category, DecisionConfig, Orientation,
                               Top2Source, Verdict, category_counts, decide,
                               decide_batch, read_verdicts, select_top2,
                               write_verdicts)
from kavguard.errors import UsageError
from kavguard.geometry import joint_distance, joint_stats, mahalanobis_diag
from kavguard.store import KavDataset, KavRecord


def _three_class_model():
    # record at 0 lies at distances 5 / 2 / 9 from these unit-variance classes
    return make_model(make_stats(0, [5.0], [1.0]),
                      make_stats(1, [2.0], [1.0]),
                      make_stats(2, [9.0], [1.0]))


# --- top-2 selection --------------------------------------------------------

def test_top2_by_logits():
    model = _three_class_model()
    record = KavRecord(0, -1, [0.0], logits=[0.1, 3.0, 2.0])
    assert select_top2(record, model) == (1, 2)


def test_top2_by_min_distance():
    model = _three_class_model()
    record = KavRecord(0, -1, [0.0])
    assert select_top2(record, model) == (1, 0)


def test_top2_logit_tie_prefers_lower_class():
    model = make_model(make_stats(0, [0.0], [1.0]), make_stats(1, [1.0], [1.0]))
    record = KavRecord(0, -1, [0.5], logits=[1.0, 1.0])
    assert select_top2(record, model) == (0, 1)


def test_top2_distance_tie_prefers_lower_class():
    model = make_model(make_stats(0, [1.0], [1.0]), make_stats(1, [-1.0], [1.0]),
                       make_stats(2, [5.0], [1.0]))
    record = KavRecord(0, -1, [0.0])
    assert select_top2(record, model,
                       DecisionConfig(top2_source=Top2Source.MIN_DISTANCE)) == (0, 1)


def test_top2_explicit_logits_without_logits_errors():
    model = _three_class_model()
    record = KavRecord(0, -1, [0.0])
    with pytest.raises(UsageError, match="logits"):
        select_top2(record, model, DecisionConfig(top2_source=Top2Source.LOGITS))


def test_top2_requires_two_classes():
    model = make_model(make_stats(0, [0.0], [1.0]))
    with pytest.raises(UsageError, match="2"):
        select_top2(KavRecord(0, -1, [0.0]), model)


# --- decide -----------------------------------------------------------------

def test_decide_outlier_below_threshold():
    # df=2 -> threshold 4; squared joint distance lands well below it
    model = make_model(make_stats(0, [0.0], [1.0]), make_stats(1, [0.5], [1.0]))
    record = KavRecord(0, -1, [1.0])
    verdict = decide(record, model, DecisionConfig(df=2))
    assert verdict.threshold == 4.0
    assert verdict.d_joint_sq <= 4.0
    assert verdict.category == Category.OUTLIER
    assert verdict.confidence == -verdict.d1


def _solve_two_class_case(d1, d2, dj_sq, x=10.0):
    """Class pair achieving the given distances for a 1-D record at x:
    class 0 at mean 0 with variance x^2/d1^2, class 1 solved from
    (x - mu2)^2 = d2^2 * var2 = dj_sq * (var1 + var2)."""
    var1 = x ** 2 / d1 ** 2
    var2 = dj_sq * var1 / (d2 ** 2 - dj_sq)
    mu2 = x - d2 * math.sqrt(var2)
    return make_model(make_stats(0, [0.0], [var1]),
                      make_stats(1, [mu2], [var2]))


def test_decide_uncertain_close_distances():
    model = _solve_two_class_case(d1=10.0, d2=10.5, dj_sq=9.0)
    record = KavRecord(0, -1, [10.0])
    verdict = decide(record, model, DecisionConfig(k_percent=0.10, df=2))
    assert verdict.d1 == pytest.approx(10.0, rel=1e-12)
    assert verdict.d2 == pytest.approx(10.5, rel=1e-12)
    assert verdict.d_joint_sq == pytest.approx(9.0, rel=1e-12)
    assert verdict.d_joint_sq > verdict.threshold  # survives the outlier step
    assert verdict.category == Category.UNCERTAIN


def test_decide_certain_far_distances():
    model = _solve_two_class_case(d1=5.0, d2=20.0, dj_sq=320.0)
    record = KavRecord(0, -1, [10.0])
    verdict = decide(record, model, DecisionConfig(k_percent=0.10, df=2))
    assert verdict.d1 == pytest.approx(5.0, rel=1e-12)
    assert verdict.d2 == pytest.approx(20.0, rel=1e-12)
    assert verdict.category == Category.CERTAIN
    assert verdict.top1 == 0


def test_decide_certain_at_class_mean_prose_orientation():
    dim = 8
    model = make_model(make_stats(0, np.zeros(dim), np.ones(dim)),
                       make_stats(1, np.full(dim, 0.1), np.ones(dim)))
    record = KavRecord(0, -1, np.zeros(dim))
    # squared joint distance = 8 * 0.01 / 2 = 0.04, inside the df+sqrt(2df) cut
    verdict = decide(record, model,
                     DecisionConfig(orientation=Orientation.PROSE_ABOVE))
    assert verdict.d_joint_sq == pytest.approx(0.04, rel=1e-12)
    assert verdict.d1 == 0.0
    assert verdict.category == Category.CERTAIN


def test_decide_both_distances_zero_is_uncertain():
    # identical classes: a point at the shared mean has d1 == d2 == 0
    model = make_model(make_stats(0, [0.0, 0.0], [1.0, 1.0]),
                       make_stats(1, [0.0, 0.0], [1.0, 1.0]))
    record = KavRecord(0, -1, [0.0, 0.0])
    verdict = decide(record, model,
                     DecisionConfig(k_percent=0.0,
                                    orientation=Orientation.PROSE_ABOVE))
    assert verdict.d1 == verdict.d2 == 0.0
    assert verdict.category == Category.UNCERTAIN


def test_decide_verdict_evidence_consistent():
    model = _three_class_model()
    record = KavRecord(0, -1, [0.0])
    verdict = decide(record, model, DecisionConfig())
    s1, s2 = model.classes[verdict.top1], model.classes[verdict.top2]
    assert verdict.d1 == mahalanobis_diag(record.kav, s1)
    assert verdict.d2 == mahalanobis_diag(record.kav, s2)
    dj = joint_distance(record.kav, joint_stats(s1, s2))
    assert verdict.d_joint_sq == pytest.approx(dj * dj, rel=1e-15)
    assert verdict.d1 <= verdict.d2  # MinDistance ordering


# --- properties -------------------------------------------------------------

def _random_setup(seed, n=300, dim=4, k=4):
    rng = np.random.default_rng(seed)
    model = make_model(*[make_stats(c, rng.normal(scale=3.0, size=dim),
                                    rng.uniform(0.2, 2.0, size=dim))
                         for c in range(k)])
    records = [KavRecord(i, -1, rng.normal(scale=4.0, size=dim).astype(np.float32))
               for i in range(n)]
    return model, records


def test_exactly_one_category_per_record():
    model, records = _random_setup(40)
    for orientation in Orientation:
        config = DecisionConfig(orientation=orientation)
        for rec in records:
            verdict = decide(rec, model, config)
            assert verdict.category in (Category.CERTAIN, Category.UNCERTAIN,
                                        Category.OUTLIER)


def test_uncertain_set_grows_with_k():
    model, records = _random_setup(41)
    previous = set()
    for k in (0.0, 0.05, 0.1, 0.3, 0.6, 1.0):
        config = DecisionConfig(k_percent=k, orientation=Orientation.PROSE_ABOVE)
        current = {r.record_index for r in records
                   if decide(r, model, config).category == Category.UNCERTAIN}
        assert previous <= current
        previous = current


def test_k_zero_requires_exact_distance_tie():
    model, records = _random_setup(42)
    config = DecisionConfig(k_percent=0.0, orientation=Orientation.PROSE_ABOVE)
    for rec in records:
        verdict = decide(rec, model, config)
        if verdict.category == Category.UNCERTAIN:
            assert verdict.d1 == verdict.d2


def test_orientation_flip_negates_outlier_step():
    model, records = _random_setup(43)
    below = DecisionConfig(orientation=Orientation.AS_WRITTEN_BELOW)
    above = DecisionConfig(orientation=Orientation.PROSE_ABOVE)
    for rec in records:
        vb = decide(rec, model, below)
        va = decide(rec, model, above)
        if vb.d_joint_sq != vb.threshold:
            assert (vb.category == Category.OUTLIER) != \
                (va.category == Category.OUTLIER)


def test_confidence_order_reverses_distance_order():
    model, records = _random_setup(44)
    verdicts = [decide(r, model, DecisionConfig()) for r in records]
    for a, b in zip(verdicts, verdicts[1:]):
        if a.d1 < b.d1:
            assert a.confidence > b.confidence
        elif a.d1 > b.d1:
            assert a.confidence < b.confidence


def test_closeness_ratio_symmetric_under_top2_swap():
    # swapping the logit order swaps (d1, d2); the category must not change
    # as long as the point is not an outlier
    model = _solve_two_class_case(d1=10.0, d2=10.5, dj_sq=9.0)
    config = DecisionConfig(k_percent=0.10, df=2,
                            top2_source=Top2Source.LOGITS)
    fwd = decide(KavRecord(0, -1, [10.0], logits=[2.0, 1.0]), model, config)
    rev = decide(KavRecord(0, -1, [10.0], logits=[1.0, 2.0]), model, config)
    assert fwd.top1 == rev.top2 and fwd.top2 == rev.top1
    assert fwd.d1 == rev.d2 and fwd.d2 == rev.d1
    assert fwd.category == rev.category == Category.UNCERTAIN


# --- batch ------------------------------------------------------------------

def test_batch_empty_dataset():
    model = _three_class_model()
    ds = KavDataset(dim=1, num_classes=3)
    assert list(decide_batch(ds, model)) == []


def test_batch_preserves_order_and_matches_single():
    model, records = _random_setup(45, n=100)
    ds = KavDataset(dim=4, num_classes=4, records=records)
    config = DecisionConfig()
    batch = list(decide_batch(ds, model, config))
    singles = [decide(r, model, config) for r in records]
    assert batch == singles
    assert [v.record_index for v in batch] == list(range(100))


def test_batch_chunking_equivalence():
    model, records = _random_setup(46, n=1000)
    config = DecisionConfig()
    whole = list(decide_batch(records, model, config))
    chunked = []
    for start in range(0, 1000, 125):
        chunked.extend(decide_batch(records[start:start + 125], model, config))
    assert chunked == whole


def test_batch_error_names_record():
    model = _three_class_model()
    records = [KavRecord(0, -1, [0.0]),
               KavRecord(1, -1, [float("nan")])]
    with pytest.raises(UsageError, match="record 1"):
        list(decide_batch(records, model))


# --- serialization ----------------------------------------------------------

def test_verdict_csv_round_trip():
    model, records = _random_setup(47, n=20)
    verdicts = list(decide_batch(records, model))
    sink = io.StringIO()
    write_verdicts(verdicts, sink)
    assert read_verdicts(io.StringIO(sink.getvalue())) == verdicts


def test_config_rejects_bad_parameters():
    with pytest.raises(UsageError, match="k_percent"):
        DecisionConfig(k_percent=1.5)
    with pytest.raises(UsageError, match="k_percent"):
        DecisionConfig(k_percent=float("nan"))
    with pytest.raises(UsageError, match="df"):
        DecisionConfig(df=0)


def test_category_counts():
    verdicts = [
        Verdict(0, Category.CERTAIN, 0, 1, 1.0, 2.0, 9.0, 4.0, -1.0),
        Verdict(1, Category.OUTLIER, 0, 1, 1.0, 2.0, 1.0, 4.0, -1.0),
        Verdict(2, Category.OUTLIER, 0, 1, 1.0, 2.0, 2.0, 4.0, -1.0),
    ]
    counts = category_counts(verdicts)
    assert counts[Category.CERTAIN] == 1
    assert counts[Category.UNCERTAIN] == 0
    assert counts[Category.OUTLIER] == 2
