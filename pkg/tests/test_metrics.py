import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import f1_by_hand

from norakit.errors import LengthMismatch
from norakit.metrics import MISSING, evaluate, evaluate_tasks, scores, side_by_side_report, tally

A, B, C = 0, 1, 2


def test_perfect_predictions():
    t = tally([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert np.all(t.fp == 0) and np.all(t.fn == 0)
    assert scores(t)["accuracy"] == 1.0


def test_worked_tally():
    t = tally([A, A, B, B], [A, A, A, B], 2)
    assert (t.tp[A], t.fp[A], t.fn[A]) == (2, 1, 0)
    assert (t.tp[B], t.fp[B], t.fn[B]) == (1, 0, 1)
    assert t.support.sum() == t.total == 4


def test_worked_scores():
    s = evaluate([A, A, B, B], [A, A, A, B], 2)
    assert s["accuracy"] == 0.75
    np.testing.assert_allclose(s["per_class_f1"], [0.8, 2 / 3], atol=1e-12)
    assert s["macro_f1"] == pytest.approx(0.7333, abs=1e-4)
    assert s["weighted_f1"] == pytest.approx(0.7333, abs=1e-4)


def test_empty_tally_is_absent():
    t = tally([], [], 3)
    assert t.total == 0 and scores(t) is None


def test_single_class_all_correct():
    s = evaluate([0, 0, 0], [0, 0, 0], 1)
    assert s["accuracy"] == s["macro_f1"] == s["weighted_f1"] == 1.0


def test_predicted_but_never_gold_class():
    s = evaluate([A, A, B], [A, C, B], 3)
    hand = f1_by_hand([A, A, B], [A, C, B], [A, B, C])
    assert hand[A] == pytest.approx(2 / 3) and hand[C] == 0.0
    assert s["macro_f1"] == pytest.approx((hand[A] + hand[B]) / 2)
    assert evaluate([A, A, B], [A, C, B], 3, include_empty=True)["macro_f1"] == \
        pytest.approx(sum(hand.values()) / 3)


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        tally([0, 1], [0], 2)


def test_merge_is_associative():
    rng = np.random.default_rng(0)
    g, p = rng.integers(0, 4, 90), rng.integers(0, 4, 90)
    parts = [tally(g[i:i + 30], p[i:i + 30], 4) for i in (0, 30, 60)]
    whole = tally(g, p, 4)
    for m in (parts[0].merge(parts[1]).merge(parts[2]), parts[2].merge(parts[0].merge(parts[1]))):
        assert np.array_equal(m.tp, whole.tp) and np.array_equal(m.fp, whole.fp)
        assert m.correct == whole.correct and m.total == whole.total


def test_weighted_equals_macro_under_equal_support():
    rng = np.random.default_rng(1)
    for _ in range(50):
        C_ = int(rng.integers(2, 7))
        per = int(rng.integers(1, 20))
        golds = np.repeat(np.arange(C_), per)
        preds = rng.integers(0, C_, golds.size)
        s = evaluate(golds, preds, C_)
        assert s["weighted_f1"] == pytest.approx(s["macro_f1"], abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
def test_properties(pairs):
    g = [x for x, _ in pairs]
    p = [y for _, y in pairs]
    s = evaluate(g, p, 5)
    for m in ("accuracy", "macro_f1", "weighted_f1"):
        assert 0.0 <= s[m] <= 1.0
    # accuracy equals support-weighted recall
    t = tally(g, p, 5)
    rec = np.where(t.support > 0, t.tp / np.maximum(t.support, 1), 0.0)
    assert s["accuracy"] == pytest.approx(float((rec * t.support).sum() / t.total), abs=1e-12)
    # per-class F1 matches the hand oracle, and order does not matter
    hand = f1_by_hand(g, p, range(5))
    np.testing.assert_allclose(s["per_class_f1"], [hand[c] for c in range(5)], atol=1e-12)
    r = evaluate(g[::-1], p[::-1], 5)
    assert r["macro_f1"] == s["macro_f1"] and r["weighted_f1"] == s["weighted_f1"]


def test_evaluate_tasks():
    out = evaluate_tasks({"tag": [0, 1], "time": []}, {"tag": [0, 0], "time": []}, {"tag": 2, "time": 7})
    assert out["tag"]["accuracy"] == 0.5 and out["time"] is None


def test_report_single_cell_and_missing():
    s = evaluate([A, A, B, B], [A, A, A, B], 2)
    text, csv_text = side_by_side_report({"unfiltered": {"gated": {"tag": s}}}, tasks=("tag",))
    lines = text.splitlines()
    assert lines[0] == "== unfiltered =="
    assert len([l for l in lines if l.startswith("gated")]) == 1
    assert "0.7500" in text and "0.7333" in text
    assert csv_text.splitlines() == ["setting,method,task,accuracy,macro_f1,weighted_f1",
                                     "unfiltered,gated,tag,0.750000,0.733333,0.733333"]
    text2, csv2 = side_by_side_report({"npk": {"control": {"tag": None}}}, tasks=("tag",))
    assert MISSING in text2
    assert csv2.splitlines()[1] == "npk,control,tag,,,"


def test_report_panels_and_rows():
    s = evaluate([0, 1], [0, 1], 2)
    res = {st_: {m: {"tag": s, "time": s} for m in ("gated", "control")} for st_ in ("unfiltered", "npk")}
    text, csv_text = side_by_side_report(res, tasks=("tag", "time"))
    assert text.count("==") == 4
    assert len(csv_text.splitlines()) == 1 + 2 * 2 * 2
