import json

import pytest
from hypothesis import given, settings, strategies as st

from lsgdlcd.dataset import GroundTruth
from lsgdlcd.evaluation import (
    EvalError, PrPoint, auc, evaluate, pr_curve, prt, recall_at_n, write_report,
)
from lsgdlcd.pipeline import LogRow


def row(q, match=None, score=0.0, ranked=(), ms=1.0):
    return LogRow(q, match, score, ms, ranked=tuple(ranked))


def gt_pairs(*pairs, tolerance=0):
    return GroundTruth(frozenset(pairs), tolerance)


def test_perfect_log():
    gt = gt_pairs((0, 5), (1, 6))
    rows = [row(q) for q in range(5)] + [row(5, 0, 1.0), row(6, 1, 1.0)]
    curve = pr_curve(rows, gt)
    assert curve == [PrPoint(1.0, 1.0, 1.0)]
    report = evaluate(rows, gt)
    assert report.auc == 1.0 and report.recall_at[1] == 1.0
    assert report.max_precision_at_full_recall == 1.0 == report.max_recall_at_full_precision


def test_zero_detections():
    gt = gt_pairs((0, 5))
    rows = [row(q) for q in range(6)]
    curve = pr_curve(rows, gt)
    assert all(p.recall == 0 and p.precision == 1 for p in curve)
    assert recall_at_n(rows, gt, 10) == 0.0


def test_crafted_sweep():
    # positives: queries 6, 7, 8, 9 (partners 0..3); 10 queries in total
    gt = gt_pairs((0, 6), (1, 7), (2, 8), (3, 9))
    rows = [row(q) for q in range(6)]
    rows += [row(6, 0, 0.9), row(7, 4, 0.85), row(8, 2, 0.8), row(9)]
    curve = {p.threshold: p for p in pr_curve(rows, gt)}
    assert set(curve) == {0.9, 0.85, 0.8}
    # hand enumeration: tau=.86 fires only the .9 row, tau=.8 fires all three
    assert curve[0.9].precision == 1.0 and curve[0.9].recall == 1 / 4
    assert curve[0.85].precision == 1 / 2 and curve[0.85].recall == 1 / 4
    assert curve[0.8].precision == 2 / 3 and curve[0.8].recall == 2 / 4


def test_recall_at_n_rank_five():
    gt = gt_pairs((0, 20), (1, 21), tolerance=0)
    ranked_20 = [(9, 0.9), (8, 0.8), (7, 0.7), (6, 0.6), (0, 0.5)]
    ranked_21 = [(9, 0.9), (8, 0.8), (7, 0.7), (6, 0.6), (1, 0.5)]
    rows = [row(20, 9, 0.9, ranked_20), row(21, 9, 0.9, ranked_21)]
    assert recall_at_n(rows, gt, 1) == 0.0
    assert recall_at_n(rows, gt, 4) == 0.0
    assert recall_at_n(rows, gt, 5) == 1.0 == recall_at_n(rows, gt, 10)


def test_temporal_gap_shapes_denominator():
    gt = gt_pairs((0, 5), (0, 60))
    rows = [row(5, 0, 0.9), row(60, 0, 0.9)]
    # with gap 50 only query 60 is eligible; the correct detection on 5 is ignored
    curve = pr_curve(rows, gt, temporal_gap=50)
    assert curve == [PrPoint(0.9, 1.0, 1.0)]
    # an incorrect detection on an ineligible query still costs precision
    rows = [row(5, 3, 0.95), row(60, 0, 0.9)]
    assert pr_curve(rows, gt, temporal_gap=50)[0] == PrPoint(0.95, 0.0, 0.0)
    with pytest.raises(EvalError):
        pr_curve([row(5, 0, 0.9)], gt_pairs((0, 5)), temporal_gap=50)


def test_empty_ground_truth_is_an_error():
    with pytest.raises(EvalError):
        pr_curve([row(0)], GroundTruth(frozenset()))


def test_auc_examples():
    assert auc([PrPoint(0.5, 1.0, 0.0), PrPoint(0.4, 1.0, 1.0)]) == 1.0
    assert auc([PrPoint(0.5, 0.5, 1.0)]) == 0.5
    assert auc([PrPoint(0.9, 1.0, 0.5), PrPoint(0.5, 0.5, 1.0)]) == 0.875
    with pytest.raises(EvalError):
        auc([])


def test_prt_examples():
    assert prt(1.0, 0.0) == 1.0
    assert prt(0.8, 0.1, 10.0) == 0.4
    assert prt(0.0, 3.7) == 0.0


@given(st.floats(0.01, 1.0), st.floats(0.0, 10.0), st.floats(0.001, 10.0))
def test_prt_decreasing_in_time(a, t, dt):
    assert prt(a, t + dt) < prt(a, t)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 39), st.floats(0.0, 1.0), st.integers(1, 10)),
                min_size=1, max_size=40))
def test_curve_properties(entries):
    gt = gt_pairs(*[(q, q + 40) for q in range(0, 40, 3)], tolerance=1)
    rows = []
    for q, (target, score, width) in enumerate(entries, start=40):
        ranked = [(max(0, target - k), score) for k in range(width)]
        rows.append(row(q, ranked[0][0], score, ranked))
    for q in range(40 + len(entries), 80):
        rows.append(row(q))
    curve = pr_curve(rows, gt)
    thresholds = [p.threshold for p in curve]
    assert thresholds == sorted(thresholds, reverse=True)
    recalls = [p.recall for p in curve]
    assert recalls == sorted(recalls)
    assert all(0 <= p.precision <= 1 and 0 <= p.recall <= 1 for p in curve)
    assert 0.0 <= auc(curve) <= 1.0
    r = [recall_at_n(rows, gt, n) for n in (1, 5, 10)]
    assert r[0] <= r[1] <= r[2]
    assert evaluate(rows, gt).to_json() == evaluate(rows, gt).to_json()


def test_report_files(tmp_path):
    gt = gt_pairs((0, 5))
    rows = [row(q) for q in range(5)] + [row(5, 0, 1.0, [(0, 1.0)], ms=100.0)]
    report = evaluate(rows, gt, omega=10.0)
    write_report(report, tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["auc"] == 1.0 and data["recall_at"]["1"] == 1.0
    assert data["prt"] == pytest.approx(1.0 / (1 + 10 * report.mean_time_ms / 1e3))
    assert (tmp_path / "pr_curve.csv").read_text().splitlines()[0] == "threshold,precision,recall"
    head = (tmp_path / "summary.csv").read_text().splitlines()[0]
    assert head == "auc,r@1,r@5,r@10,mean_time_ms,prt"
