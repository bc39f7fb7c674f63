"""Incremental database of dynamic nodes.

A node groups frames that looked alike when they arrived. A query is first
compared with each node's founding frame; a node that clears ``alpha`` is then
scored on the average similarity over all its members, and clearing ``beta``
there makes it the selected node. The first node passing both gates wins. If
none does, the query founds a new node.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .core import FrameId, InputError, PipelineConfig
from .descriptor import DescriptorStack, Lsgd


@dataclass
class DynamicNode:
    node_id: int
    members: list[tuple[FrameId, Lsgd]]
    _stack: DescriptorStack = field(default_factory=DescriptorStack, repr=False)

    def __post_init__(self):
        if not self.members:
            raise InputError("a node needs at least one member")
        if not len(self._stack):
            for _, desc in self.members:
                self._stack.append(desc)

    @property
    def representative(self) -> Lsgd:
        return self.members[0][1]

    @property
    def frame_ids(self) -> list[FrameId]:
        return [fid for fid, _ in self.members]

    def __len__(self):
        return len(self.members)

    def representative_score(self, query: Lsgd) -> float:
        return float(self._stack.scores(query, stop=1)[0])

    def member_scores(self, query: Lsgd):
        return self._stack.scores(query)

    def append(self, frame_id: FrameId, desc: Lsgd) -> None:
        self.members.append((frame_id, desc))
        self._stack.append(desc)


@dataclass(frozen=True)
class NodeSelection:
    node_id: int
    created_new: bool
    candidates: tuple[tuple[FrameId, float], ...] = ()
    rep_score: float | None = None
    avg_score: float | None = None
    comparisons: int = 0


class NodeDatabase:
    def __init__(self):
        self.nodes: list[DynamicNode] = []
        self.frame_index: dict[FrameId, int] = {}
        self._last_id: FrameId | None = None

    def __len__(self):
        return len(self.nodes)

    @property
    def frame_count(self) -> int:
        return len(self.frame_index)

    def node_of(self, frame_id: FrameId) -> int:
        return self.frame_index[frame_id]

    def _check_id(self, frame_id: FrameId) -> None:
        if frame_id < 0 or (self._last_id is not None and frame_id <= self._last_id):
            raise InputError(
                f"frame id {frame_id} must exceed every stored id (last {self._last_id})"
            )

    def _record(self, frame_id: FrameId, node_id: int) -> None:
        self.frame_index[frame_id] = node_id
        self._last_id = frame_id

    def create_node(self, frame_id: FrameId, desc: Lsgd) -> int:
        self._check_id(frame_id)
        node_id = len(self.nodes)
        self.nodes.append(DynamicNode(node_id, [(frame_id, desc)]))
        self._record(frame_id, node_id)
        return node_id

    def insert(self, node_id: int, frame_id: FrameId, desc: Lsgd) -> None:
        self._check_id(frame_id)
        self.nodes[node_id].append(frame_id, desc)
        self._record(frame_id, node_id)

    def select_or_create(
        self, query: Lsgd, frame_id: FrameId, cfg: PipelineConfig
    ) -> NodeSelection:
        """Route ``query`` to the first node passing both gates, else a new node.

        Candidate scores are taken over the node's members before the query
        joins, so a frame never shows up among its own candidates.
        """
        self._check_id(frame_id)
        comparisons = 0
        for node in self.nodes:
            s_first = node.representative_score(query)
            comparisons += 1
            if not s_first > cfg.alpha:
                continue
            scores = node.member_scores(query)
            comparisons += len(node) - 1
            s_ave = float(scores.mean())
            if s_ave > cfg.beta:
                candidates = tuple(
                    (fid, float(s)) for (fid, _), s in zip(node.members, scores)
                )
                self.insert(node.node_id, frame_id, query)
                return NodeSelection(
                    node.node_id, False, candidates, s_first, s_ave, comparisons
                )
        node_id = self.create_node(frame_id, query)
        return NodeSelection(node_id, True, (), None, None, comparisons)

    def node_stats(self) -> tuple[int, dict[int, int]]:
        """(node count, {member count: number of nodes with that many members})."""
        sizes = Counter(len(node) for node in self.nodes)
        return len(self.nodes), dict(sorted(sizes.items()))

    # snapshot i/o: nodes.json manifest + one concatenated descriptor blob file

    def save(self, directory, manifest_name="nodes.json", blob_name="descriptors.bin"):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        frames = sorted(self.frame_index)
        descs = {fid: desc for node in self.nodes for fid, desc in node.members}
        offsets = {}
        with open(directory / blob_name, "wb") as fh:
            pos = 0
            for fid in frames:
                blob = descs[fid].to_bytes()
                fh.write(blob)
                offsets[fid] = [pos, len(blob)]
                pos += len(blob)
        manifest = {
            "descriptor_file": blob_name,
            "nodes": [
                {"node_id": node.node_id, "members": node.frame_ids} for node in self.nodes
            ],
            "offsets": {str(fid): offsets[fid] for fid in frames},
        }
        (directory / manifest_name).write_text(json.dumps(manifest, indent=1) + "\n")

    @classmethod
    def load(cls, directory, manifest_name="nodes.json") -> "NodeDatabase":
        directory = Path(directory)
        manifest = json.loads((directory / manifest_name).read_text())
        blob = (directory / manifest["descriptor_file"]).read_bytes()
        offsets = manifest["offsets"]

        def desc(fid):
            start, length = offsets[str(fid)]
            return Lsgd.from_bytes(blob[start:start + length])

        db = cls()
        placements = sorted(
            (fid, pos, entry["node_id"])
            for entry in manifest["nodes"]
            for pos, fid in enumerate(entry["members"])
        )
        expected = 0
        for fid, pos, node_id in placements:
            if pos == 0:
                if node_id != expected:
                    raise InputError(f"snapshot node ids not consecutive at {node_id}")
                db.create_node(fid, desc(fid))
                expected += 1
            else:
                db.insert(node_id, fid, desc(fid))
        return db

    def structure(self) -> list[list[FrameId]]:
        return [node.frame_ids for node in self.nodes]
