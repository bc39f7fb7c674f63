"""Precision-recall, Recall@N, AUC and PRT over detection logs."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import GroundTruth
from .pipeline import LogRow

DEFAULT_OMEGA = 10.0
RECALL_NS = (1, 5, 10)


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float


@dataclass
class EvalReport:
    curve: list[PrPoint]
    auc: float
    recall_at: dict[int, float]
    max_precision_at_full_recall: float
    max_recall_at_full_precision: float
    mean_time_ms: float
    prt: float
    omega: float = DEFAULT_OMEGA
    mean_retrieval_ms: float = 0.0
    n_queries: int = 0
    n_positive_queries: int = 0
    temporal_gap: int = 0
    tolerance: int = 0
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        data = asdict(self)
        data["recall_at"] = {str(k): v for k, v in self.recall_at.items()}
        return json.dumps(data, indent=2) + "\n"

    def summary_line(self) -> str:
        r = self.recall_at
        return (
            f"auc={self.auc:.4f} r@1={r.get(1, 0):.4f} r@5={r.get(5, 0):.4f} "
            f"r@10={r.get(10, 0):.4f} mean_time_ms={self.mean_time_ms:.3f} prt={self.prt:.4f}"
        )


def positive_queries(rows, gt: GroundTruth, temporal_gap: int) -> set[int]:
    return {r.query_id for r in rows if gt.eligible(r.query_id, temporal_gap)}


def pr_curve(rows: list[LogRow], gt: GroundTruth, temporal_gap: int = 0) -> list[PrPoint]:
    """Sweep the acceptance threshold over every distinct best-candidate score.

    A row fires at threshold t when it has a candidate scoring >= t. Fired
    rows on eligible queries count as true positives when the top candidate
    lies within tolerance of a ground-truth partner and as false positives
    otherwise. Rows on queries whose partners all sit inside the temporal gap
    are left out of both counts. With nothing fired precision is 1.
    """
    if not gt.positives:
        raise EvalError("ground truth has no positive pairs; recall is undefined")
    positives = positive_queries(rows, gt, temporal_gap)
    if not positives:
        raise EvalError("no query has a ground-truth partner older than the temporal gap")

    scored = []
    for r in rows:
        if not r.has_candidates:
            continue
        q = r.query_id
        correct = gt.is_correct(q, r.best)
        if q in positives:
            scored.append((r.score, 1 if correct else 0, 0 if correct else 1))
        elif not correct:
            scored.append((r.score, 0, 1))
    if not scored:
        return [PrPoint(1.0, 1.0, 0.0)]

    scores = np.array([s[0] for s in scored])
    tp = np.array([s[1] for s in scored])
    fp = np.array([s[2] for s in scored])
    order = np.argsort(-scores, kind="stable")
    scores, tp, fp = scores[order], np.cumsum(tp[order]), np.cumsum(fp[order])
    # last index of each run of equal scores = everything with score >= t
    ends = np.nonzero(np.append(scores[1:] != scores[:-1], True))[0]
    curve = []
    for i in ends:
        t, f = int(tp[i]), int(fp[i])
        precision = t / (t + f) if t + f else 1.0
        curve.append(PrPoint(float(scores[i]), precision, t / len(positives)))
    return curve


def auc(curve: list[PrPoint]) -> float:
    """Trapezoidal area under precision(recall), anchored at recall 0.

    The curve is extended to recall 0 at its maximum precision.
    """
    if not curve:
        raise EvalError("empty precision-recall curve")
    pts = sorted(((p.recall, p.precision) for p in curve), key=lambda rp: rp[0])
    pts.insert(0, (0.0, max(p.precision for p in curve)))
    area = 0.0
    for (r0, p0), (r1, p1) in zip(pts, pts[1:]):
        area += (r1 - r0) * (p0 + p1) / 2.0
    return min(max(area, 0.0), 1.0)


def recall_at_n(rows: list[LogRow], gt: GroundTruth, n: int, temporal_gap: int = 0) -> float:
    if n < 1:
        raise EvalError(f"n must be >= 1, got {n}")
    positives = positive_queries(rows, gt, temporal_gap)
    if not positives:
        raise EvalError("no query has a ground-truth partner older than the temporal gap")
    hits = 0
    for r in rows:
        if r.query_id not in positives:
            continue
        top = [fid for fid, _ in r.ranked[:n]] if r.ranked else (
            [r.match_id] if r.match_id is not None else [])
        if any(gt.is_correct(r.query_id, fid) for fid in top):
            hits += 1
    return hits / len(positives)


def prt(auc_value: float, mean_time_s: float, omega: float = DEFAULT_OMEGA) -> float:
    """Accuracy/runtime composite: auc / (1 + omega * seconds per frame)."""
    return auc_value / (1.0 + omega * mean_time_s)


def evaluate(rows: list[LogRow], gt: GroundTruth, temporal_gap: int = 0,
             omega: float = DEFAULT_OMEGA) -> EvalReport:
    curve = pr_curve(rows, gt, temporal_gap)
    area = auc(curve)
    full_recall = [p.precision for p in curve if p.recall >= 1.0]
    full_precision = [p.recall for p in curve if p.precision >= 1.0]
    times = [r.elapsed_ms for r in rows]
    mean_ms = float(np.mean(times)) if times else 0.0
    return EvalReport(
        curve=curve,
        auc=area,
        recall_at={n: recall_at_n(rows, gt, n, temporal_gap) for n in RECALL_NS},
        max_precision_at_full_recall=max(full_recall, default=0.0),
        max_recall_at_full_precision=max(full_precision, default=0.0),
        mean_time_ms=mean_ms,
        prt=prt(area, mean_ms / 1e3, omega),
        omega=omega,
        mean_retrieval_ms=float(np.mean([r.retrieval_ms for r in rows])) if rows else 0.0,
        n_queries=len(rows),
        n_positive_queries=len(positive_queries(rows, gt, temporal_gap)),
        temporal_gap=temporal_gap,
        tolerance=gt.tolerance,
        notes=[
            "precision is 1 where no detection fires",
            "recall counts queries with a ground-truth partner older than the temporal gap",
            "running time is mean per-frame seconds (segmentation + description + retrieval)",
        ],
    )


def write_report(report: EvalReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    with open(out / "pr_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall"])
        for p in report.curve:
            w.writerow([repr(p.threshold), repr(p.precision), repr(p.recall)])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["auc", "r@1", "r@5", "r@10", "mean_time_ms", "prt"])
        r = report.recall_at
        w.writerow([report.auc, r.get(1), r.get(5), r.get(10), report.mean_time_ms, report.prt])
