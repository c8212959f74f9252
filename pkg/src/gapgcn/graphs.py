"""Dependency parses as three-relation directed graphs, plus batching.

Every dependency arc head->dependent contributes two edges (one per
direction, typed separately) and every token carries a self-loop, so a
snippet with T tokens and A arcs yields 2A + T edges. Multi-sentence
snippets become a disjoint union of per-sentence trees inside one graph.
Graphs are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np

ROOT = -1


class GraphError(Exception):
    pass


class Relation(IntEnum):
    HEAD_TO_DEP = 0
    DEP_TO_HEAD = 1
    SELF_LOOP = 2


NUM_RELATIONS = len(Relation)


@dataclass
class RelationalGraph:
    num_nodes: int
    src: tuple[np.ndarray, ...]        # int64 per relation
    dst: tuple[np.ndarray, ...]        # int64 per relation
    in_degree: np.ndarray              # int64 [num_nodes, NUM_RELATIONS]

    @property
    def num_edges(self) -> int:
        return sum(len(s) for s in self.src)

    def iter_edges(self) -> Iterator[tuple[int, int, Relation]]:
        for rel in Relation:
            for u, v in zip(self.src[rel], self.dst[rel]):
                yield int(u), int(v), rel


@dataclass
class BatchedGraph(RelationalGraph):
    boundaries: list[tuple[int, int]]  # node-id range per input graph


def _in_degrees(num_nodes: int, dst: Sequence[np.ndarray]) -> np.ndarray:
    deg = np.zeros((num_nodes, NUM_RELATIONS), dtype=np.int64)
    for rel in Relation:
        np.add.at(deg[:, rel], dst[rel], 1)
    return deg


def build_graph(heads: Sequence[int],
                sentence_ids: Sequence[int]) -> RelationalGraph:
    """Build the three-relation graph for one snippet.

    ``heads[i]`` is the head token of i (ROOT = -1), constrained to i's
    sentence. Each arc h->i yields (h, i, HEAD_TO_DEP) and (i, h,
    DEP_TO_HEAD); every token gets (i, i, SELF_LOOP).
    """
    heads = np.asarray(heads, dtype=np.int64)
    sentence_ids = np.asarray(sentence_ids, dtype=np.int64)
    n = len(heads)
    if len(sentence_ids) != n:
        raise GraphError("heads and sentence_ids lengths disagree")
    if n == 0:
        raise GraphError("empty snippet")
    for i, h in enumerate(heads):
        if h == ROOT:
            continue
        if not 0 <= h < n:
            raise GraphError(f"head of token {i} out of range: {h}")
        if h == i:
            raise GraphError(f"token {i} is its own head")
        if sentence_ids[h] != sentence_ids[i]:
            raise GraphError(f"head of token {i} crosses sentences")

    dep = np.nonzero(heads != ROOT)[0].astype(np.int64)
    head = heads[dep]
    loops = np.arange(n, dtype=np.int64)
    src = (head, dep, loops)
    dst = (dep, head, loops)
    return RelationalGraph(num_nodes=n, src=src, dst=dst,
                           in_degree=_in_degrees(n, dst))


def batch(graphs: Sequence[RelationalGraph]) -> BatchedGraph:
    """Disjoint union with node ids offset by cumulative graph sizes."""
    if not graphs:
        raise GraphError("cannot batch an empty list of graphs")
    boundaries = []
    offset = 0
    src = [[] for _ in Relation]
    dst = [[] for _ in Relation]
    for g in graphs:
        boundaries.append((offset, offset + g.num_nodes))
        for rel in Relation:
            src[rel].append(g.src[rel] + offset)
            dst[rel].append(g.dst[rel] + offset)
        offset += g.num_nodes
    src_t = tuple(np.concatenate(s) for s in src)
    dst_t = tuple(np.concatenate(d) for d in dst)
    return BatchedGraph(num_nodes=offset, src=src_t, dst=dst_t,
                        in_degree=_in_degrees(offset, dst_t),
                        boundaries=boundaries)


def graph_for_snippet(snippet) -> RelationalGraph:
    return build_graph(snippet.heads, snippet.sent_ids)
