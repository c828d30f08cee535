import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmfuse.errors import MetricError, TaskError
from mmfuse.metrics import confusion_matrix, from_confusion, one_vs_rest, roc_auc
from mmfuse.report import ReportEntry, entry_json, report
from mmfuse.tasks import TASKS, get_task


def pair_auc(scores, labels):
    """Brute force over every positive/negative pair."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


# --------------------------------------------------------------- confusion


def test_binary_metrics_hand_case():
    m = from_confusion([[40, 10], [5, 45]])
    assert m.acc == pytest.approx(0.85)
    assert m.sen == pytest.approx(0.90)
    assert m.spe == pytest.approx(0.80)
    assert m.error_rate == pytest.approx(15.0)
    assert m.n == 100


def test_confusion_rows_are_truth():
    conf = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 1], 3)
    np.testing.assert_array_equal(conf, [[1, 1, 0], [0, 1, 0], [0, 1, 0]])


def test_multiclass_macro():
    conf = np.array([[5, 1, 0], [2, 6, 2], [0, 0, 4]])
    m = from_confusion(conf)
    per = [one_vs_rest(conf, c) for c in range(3)]
    assert m.sen == pytest.approx(np.mean([5 / 6, 6 / 10, 4 / 4]))
    assert m.spe == pytest.approx(np.mean([p[1] for p in per]))
    # class 0: tn = 6+2+0+4 = 12, fp = 2
    assert per[0][1] == pytest.approx(12 / 14)
    assert m.acc == pytest.approx(15 / 20)


def test_perfect_and_empty_rows():
    m = from_confusion(np.diag([3, 4, 5, 6]))
    assert m.acc == m.sen == m.spe == 1.0
    m = from_confusion([[0, 0], [0, 4]])
    assert m.spe == 0.0 and m.sen == 1.0


# --------------------------------------------------------------------- AUC


def test_auc_hand_cases():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0
    assert roc_auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5


def test_auc_single_class():
    with pytest.raises(MetricError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(MetricError):
        roc_auc([0.1, 0.2], [1])


def test_auc_exhaustive_small():
    grid = [0.0, 0.5, 1.0]
    for labels in itertools.product([0, 1], repeat=4):
        if len(set(labels)) < 2:
            continue
        for scores in itertools.product(grid, repeat=4):
            assert roc_auc(scores, labels) == pair_auc(scores, labels)


scored = st.lists(
    st.tuples(st.integers(-5, 5).map(lambda x: x / 4), st.integers(0, 1)), min_size=2, max_size=40
).filter(lambda xs: len({y for _, y in xs}) == 2)


@settings(max_examples=200, deadline=None)
@given(scored)
def test_auc_matches_pairs(xs):
    scores, labels = zip(*xs)
    assert roc_auc(scores, labels) == pytest.approx(pair_auc(scores, labels), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(scored)
def test_auc_flip_identity(xs):
    scores, labels = zip(*xs)
    flipped = [1 - y for y in labels]
    assert roc_auc(scores, labels) + roc_auc(scores, flipped) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(scored)
def test_auc_monotone_invariance(xs):
    scores, labels = zip(*xs)
    transformed = np.exp(3 * np.asarray(scores)) + 7
    assert roc_auc(transformed, labels) == roc_auc(scores, labels)


# ------------------------------------------------------------------- tasks


def test_task_table():
    assert {n: t.num_classes for n, t in TASKS.items()} == {
        "ad-nc": 2, "ad-emci": 2, "lmci-nc": 2, "emci-lmci": 2, "3way": 3, "4way": 4,
    }
    ad_nc = get_task("ad-nc")
    assert ad_nc.map_label(0) == 0 and ad_nc.map_label(3) == 1 and ad_nc.map_label(1) is None
    three = get_task("3way")
    assert [three.map_label(c) for c in range(4)] == [0, 1, 1, 2]


def test_binary_positive_is_more_severe():
    for name in ("ad-nc", "ad-emci", "lmci-nc", "emci-lmci"):
        t = get_task(name)
        neg = next(c for c, v in t.class_map.items() if v == 0)
        pos = next(c for c, v in t.class_map.items() if v == 1)
        assert pos > neg


def test_unknown_task():
    with pytest.raises(TaskError):
        get_task("5way")


# ------------------------------------------------------------------ report


def entry(task, conf, auc=None, provider="mock", shots=5):
    return ReportEntry(task, provider, shots, from_confusion(np.array(conf), auc))


def test_report_cells_round_to_two_decimals():
    # 53 of 55 correct: 96.3636...% accuracy, 3.6363...% error
    e = entry("ad-nc", [[27, 1], [1, 26]], auc=0.98765)
    text, js = report([e])
    row = js["entries"][0]
    assert row["acc"] == 96.36 and row["error_rate"] == 3.64 and row["auc"] == 98.77
    assert "96.36" in text and "3.64" in text and "98.77" in text


def test_report_multiclass_has_no_auc():
    e = entry("4way", np.diag([2, 2, 2, 2]))
    text, js = report([e])
    assert "auc" not in js["entries"][0]
    data_row = [line for line in text.splitlines() if line.startswith("4way")][0]
    assert data_row.split()[-2] == "-"  # AUC column precedes Error


def test_report_json_mirrors_table():
    entries = [
        entry("ad-nc", [[9, 1], [2, 8]], auc=0.9),
        entry("4way", [[3, 1, 0, 0], [0, 4, 0, 0], [1, 0, 2, 1], [0, 0, 0, 4]]),
        entry("ad-nc", [[10, 0], [1, 9]], auc=0.95, provider="sn", shots=0),
    ]
    text, js = report(entries)
    json.dumps(js)
    for row in js["entries"]:
        for key in ("acc", "spe", "sen", "error_rate"):
            assert f"{row[key]:.2f}" in text
    assert js["entries"][1]["confusion"] == entries[1].metrics.confusion.tolist()


def test_error_rate_pivot_fills_missing():
    text, _ = report([entry("ad-nc", [[5, 0], [0, 5]], 1.0), entry("4way", np.diag([1, 1, 1, 1]), provider="sn", shots=0)])
    pivot = text.split("Error rate (%)")[1]
    assert "mock (5 shot)" in pivot and "sn (0 shot)" in pivot
    row = [line for line in pivot.splitlines() if line.startswith("ad-nc")][0]
    assert row.split()[-1] == "-"


def test_report_empty():
    with pytest.raises(ValueError):
        report([])


def test_entry_json_fields():
    row = entry_json(entry("ad-nc", [[40, 10], [5, 45]], auc=0.5))
    assert row == {
        "task": "ad-nc", "provider": "mock", "shots": 5, "n": 100, "acc": 85.0, "spe": 80.0,
        "sen": 90.0, "error_rate": 15.0, "auc": 50.0, "confusion": [[40, 10], [5, 45]],
    }
