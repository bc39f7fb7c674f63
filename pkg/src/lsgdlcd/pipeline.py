"""Per-frame loop-closure detection: segment, describe, retrieve, verify."""

from __future__ import annotations

import bisect
import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .core import FrameId, GrayImage, InputError, Mode, PipelineConfig, SegmentationConfig
from .descriptor import DescriptorStack, Lsgd, extract_lsgd, l1_distance, similarity_from_distance
from .nodedb import NodeDatabase
from .segmentation import segment

LOG_COLUMNS = [
    "query_id", "match_id", "score", "elapsed_ms", "node_id", "created_new",
    "retrieval_ms", "ranked",
]
TIMING_COLUMNS = ("elapsed_ms", "retrieval_ms")


class RunError(RuntimeError):
    pass


@dataclass(frozen=True)
class DetectionResult:
    query: FrameId
    match: FrameId | None
    score: float
    ranked: tuple[tuple[FrameId, float], ...]
    elapsed_ms: float
    retrieval_ms: float = 0.0
    node_id: int | None = None
    created_new: bool | None = None


def rank(candidates, top_n: int) -> list[tuple[FrameId, float]]:
    """Descending score, ties to the smaller frame id."""
    return sorted(candidates, key=lambda c: (-c[1], c[0]))[:top_n]


def exhaustive_query(history, query: Lsgd, top_n: int) -> list[tuple[FrameId, float]]:
    """Linear scan of ``history`` [(frame_id, Lsgd), ...]; the reference ranking."""
    scored = [
        (fid, similarity_from_distance(l1_distance(query, desc), query.total_pixels))
        for fid, desc in history
    ]
    return rank(scored, top_n)


def candidate_cutoff(query_id: FrameId, temporal_gap: int) -> FrameId:
    """Frames with id strictly below this value may close a loop with the query."""
    return query_id - temporal_gap


class LoopDetector:
    """Stateful detector; feed frames in increasing id order.

    Exhaustive mode scores the query against every frame older than the
    temporal gap. Node mode routes it through the dynamic-node database and
    ranks the members of the selected node that are older than the gap;
    recent frames still join nodes, they just cannot be returned as matches.
    """

    def __init__(self, seg_config: SegmentationConfig | None = None,
                 config: PipelineConfig | None = None):
        self.seg_config = seg_config or SegmentationConfig()
        self.config = config or PipelineConfig()
        self.db = NodeDatabase()
        self._ids: list[FrameId] = []
        self._stack = DescriptorStack()
        self._shape: tuple[int, int] | None = None
        self.results: list[DetectionResult] = []

    @property
    def mode(self) -> Mode:
        return self.config.mode

    def describe(self, image: GrayImage) -> Lsgd:
        if self._shape is None:
            self._shape = image.shape
        elif image.shape != self._shape:
            raise RunError(
                f"image is {image.width}x{image.height}, run started with "
                f"{self._shape[1]}x{self._shape[0]}"
            )
        return extract_lsgd(image, segment(image, self.seg_config))

    def process_frame(self, image: GrayImage, frame_id: FrameId) -> DetectionResult:
        start = time.perf_counter()
        desc = self.describe(image)
        return self.process_descriptor(desc, frame_id, _start=start)

    def process_descriptor(self, desc: Lsgd, frame_id: FrameId, _start=None) -> DetectionResult:
        start = time.perf_counter() if _start is None else _start
        if self._ids and frame_id <= self._ids[-1]:
            raise InputError(f"frame id {frame_id} is not above previous {self._ids[-1]}")
        cfg = self.config
        cutoff = candidate_cutoff(frame_id, cfg.temporal_gap)
        node_id = created_new = None

        t0 = time.perf_counter()
        if cfg.mode is Mode.EXHAUSTIVE:
            stop = bisect.bisect_left(self._ids, cutoff)
            if stop:
                dist = self._stack.distances(desc, stop)
                ids = np.asarray(self._ids[:stop])
                order = np.lexsort((ids, dist))[: cfg.top_n]
                scores = similarity_from_distance(dist[order], desc.total_pixels)
                ranked = [(int(ids[i]), float(s)) for i, s in zip(order, scores)]
            else:
                ranked = []
        else:
            sel = self.db.select_or_create(desc, frame_id, cfg)
            node_id, created_new = sel.node_id, sel.created_new
            ranked = rank([c for c in sel.candidates if c[0] < cutoff], cfg.top_n)
        retrieval_ms = (time.perf_counter() - t0) * 1e3

        self._ids.append(frame_id)
        if cfg.mode is Mode.EXHAUSTIVE:
            self._stack.append(desc)

        score = ranked[0][1] if ranked else 0.0
        match = ranked[0][0] if ranked and score >= cfg.accept_threshold else None
        result = DetectionResult(
            query=frame_id,
            match=match,
            score=score,
            ranked=tuple(ranked),
            elapsed_ms=(time.perf_counter() - start) * 1e3,
            retrieval_ms=retrieval_ms,
            node_id=node_id,
            created_new=created_new,
        )
        self.results.append(result)
        return result


def run_sequence(images, seg_config=None, config=None, progress=None) -> LoopDetector:
    """Process an iterable of (frame_id, GrayImage) pairs."""
    det = LoopDetector(seg_config, config)
    for i, (fid, image) in enumerate(images):
        det.process_frame(image, fid)
        if progress is not None:
            progress(i + 1)
    return det


@dataclass(frozen=True)
class LogRow:
    query_id: FrameId
    match_id: FrameId | None
    score: float
    elapsed_ms: float
    node_id: int | None = None
    created_new: bool | None = None
    retrieval_ms: float = 0.0
    ranked: tuple[tuple[FrameId, float], ...] = field(default=())

    @property
    def best(self) -> FrameId | None:
        """Top candidate regardless of the acceptance threshold."""
        if self.ranked:
            return self.ranked[0][0]
        return self.match_id

    @property
    def has_candidates(self) -> bool:
        return bool(self.ranked) or self.match_id is not None

    @classmethod
    def from_result(cls, r: DetectionResult) -> "LogRow":
        return cls(r.query, r.match, r.score, r.elapsed_ms, r.node_id, r.created_new,
                   r.retrieval_ms, r.ranked)


def _fmt_ranked(ranked) -> str:
    return ";".join(f"{fid}:{score!r}" for fid, score in ranked)


def _parse_ranked(text: str):
    out = []
    for item in filter(None, text.split(";")):
        fid, score = item.split(":")
        out.append((int(fid), float(score)))
    return tuple(out)


def write_detection_log(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(LOG_COLUMNS)
        for r in rows:
            if isinstance(r, DetectionResult):
                r = LogRow.from_result(r)
            out.writerow([
                r.query_id,
                "" if r.match_id is None else r.match_id,
                repr(float(r.score)),
                f"{r.elapsed_ms:.6f}",
                "" if r.node_id is None else r.node_id,
                "" if r.created_new is None else int(r.created_new),
                f"{r.retrieval_ms:.6f}",
                _fmt_ranked(r.ranked),
            ])


def read_detection_log(path) -> list[LogRow]:
    """Read a detection log. Only query_id, match_id and score are required."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"query_id", "match_id", "score"} - set(reader.fieldnames or ())
        if missing:
            raise InputError(f"{path}: missing columns {sorted(missing)}")
        for lineno, rec in enumerate(reader, 2):
            try:
                rows.append(LogRow(
                    query_id=int(rec["query_id"]),
                    match_id=int(rec["match_id"]) if rec["match_id"] else None,
                    score=float(rec["score"]),
                    elapsed_ms=float(rec.get("elapsed_ms") or 0.0),
                    node_id=int(rec["node_id"]) if rec.get("node_id") else None,
                    created_new=bool(int(rec["created_new"])) if rec.get("created_new") else None,
                    retrieval_ms=float(rec.get("retrieval_ms") or 0.0),
                    ranked=_parse_ranked(rec.get("ranked") or ""),
                ))
            except (ValueError, TypeError) as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
    return rows
