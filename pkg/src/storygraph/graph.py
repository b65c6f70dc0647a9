"""Per-document word graphs from sliding-window co-occurrence.

Every document becomes a graph whose nodes are its distinct token ids. For
every pair of positions (i, j) with 0 < |i - j| <= w there is a directed
edge token_i -> token_j. Each distinct ordered token pair seen at least k
times across the training split owns a trainable edge parameter; rarer
pairs share the single "public" edge parameter at index 0, which is also
the fallback for pairs first seen at test time.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .embeddings import EncodedDocument
from .errors import EmptyDocumentError

PUBLIC_EDGE_INDEX = 0

PairCounts = Counter  # (src token id, dst token id) -> occurrence count


def count_cooccurrences(docs: Sequence[EncodedDocument], window: int) -> PairCounts:
    """Count ordered token-id pairs within the sliding window.

    Every position pair (i, j) with 0 < |i - j| <= window contributes one
    count to (token_i, token_j). Repeated words at different positions do
    produce pairs of a token with itself; |i - j| = 0 never does.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    counts: PairCounts = Counter()
    for doc in docs:
        ids = doc.token_ids
        for offset in range(1, window + 1):
            for a, b in zip(ids, ids[offset:]):
                counts[(a, b)] += 1
                counts[(b, a)] += 1
    return counts


@dataclass
class EdgeTable:
    """Global map from ordered token-id pairs to edge parameter indices.

    Pairs counted fewer than `min_frequency` times share PUBLIC_EDGE_INDEX;
    the others get unique indices 1..num_distinct. `distinct_pair_count`
    reports pairs before thresholding, which is the graph-scale statistic.
    """

    pair_counts: dict[tuple[int, int], int]
    pair_index: dict[tuple[int, int], int]
    min_frequency: int
    window: int

    @property
    def num_edge_params(self) -> int:
        return 1 + len(self.pair_index)

    @property
    def distinct_pair_count(self) -> int:
        return len(self.pair_counts)

    def index_for(self, src_id: int, dst_id: int) -> int:
        return self.pair_index.get((src_id, dst_id), PUBLIC_EDGE_INDEX)


def assign_edge_params(counts: PairCounts, min_frequency: int, window: int) -> EdgeTable:
    """Give every sufficiently frequent ordered pair its own parameter index.

    Indices are assigned in sorted pair order so the table is independent of
    counting order.
    """
    if min_frequency < 1:
        raise ValueError(f"min_frequency must be >= 1, got {min_frequency}")
    pair_index: dict[tuple[int, int], int] = {}
    next_index = 1
    for pair in sorted(counts):
        if counts[pair] >= min_frequency:
            pair_index[pair] = next_index
            next_index += 1
    return EdgeTable(
        pair_counts=dict(counts),
        pair_index=pair_index,
        min_frequency=min_frequency,
        window=window,
    )


@dataclass
class DocumentGraph:
    """One document's nodes and incoming adjacency.

    node_ids holds the distinct token ids in first-occurrence order. The
    adjacency arrays are parallel: entry e is an edge from node position
    edge_src[e] into node position edge_dst[e] carrying edge parameter
    edge_param[e]. Entries are sorted by (dst, src) and duplicates
    (same source node into same destination node) are collapsed.
    """

    doc_id: str
    label: int
    node_ids: np.ndarray  # (n,) int64
    edge_src: np.ndarray  # (m,) int64, source node positions
    edge_dst: np.ndarray  # (m,) int64, destination node positions
    edge_param: np.ndarray  # (m,) int64

    @property
    def n_nodes(self) -> int:
        return int(self.node_ids.shape[0])

    @property
    def n_entries(self) -> int:
        return int(self.edge_src.shape[0])

    def incoming(self, position: int) -> list[tuple[int, int]]:
        """(source position, edge parameter) pairs for one node position."""
        mask = self.edge_dst == position
        return list(zip(self.edge_src[mask].tolist(), self.edge_param[mask].tolist()))


def build_graph(
    doc: EncodedDocument,
    window: int,
    table: EdgeTable,
    label: int | None = None,
) -> DocumentGraph:
    """Construct the word graph of one document against a fixed edge table.

    Pairs unseen in training (or below the frequency threshold) fall back to
    the public edge parameter. The label defaults to the document's effort
    level; regression-as-classification callers pass their own.
    """
    ids = doc.token_ids
    if not ids:
        raise EmptyDocumentError(f"{doc.doc_id}: no tokens")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")

    position_of: dict[int, int] = {}
    node_ids: list[int] = []
    for tok in ids:
        if tok not in position_of:
            position_of[tok] = len(node_ids)
            node_ids.append(tok)

    pairs: set[tuple[int, int]] = set()  # (dst node pos, src node pos)
    for offset in range(1, window + 1):
        for a, b in zip(ids, ids[offset:]):
            pa, pb = position_of[a], position_of[b]
            pairs.add((pb, pa))
            pairs.add((pa, pb))

    ordered = sorted(pairs)
    nodes = np.array(node_ids, dtype=np.int64)
    edge_dst = np.array([p[0] for p in ordered], dtype=np.int64)
    edge_src = np.array([p[1] for p in ordered], dtype=np.int64)
    edge_param = np.array(
        [table.index_for(int(nodes[s]), int(nodes[d])) for d, s in ordered],
        dtype=np.int64,
    )
    if label is None:
        label = int(doc.level)
    return DocumentGraph(
        doc_id=doc.doc_id,
        label=label,
        node_ids=nodes,
        edge_src=edge_src,
        edge_dst=edge_dst,
        edge_param=edge_param,
    )


def build_graphs(
    docs: Iterable[EncodedDocument],
    window: int,
    table: EdgeTable,
    labels: Sequence[int] | None = None,
) -> list[DocumentGraph]:
    """build_graph over a document collection, with optional explicit labels."""
    docs = list(docs)
    if labels is None:
        return [build_graph(d, window, table) for d in docs]
    if len(labels) != len(docs):
        raise ValueError("labels and docs must have equal length")
    return [build_graph(d, window, table, label=l) for d, l in zip(docs, labels)]


@dataclass
class GraphStats:
    """Graph-scale statistics of one project's training split."""

    project: str
    train_size: int
    node_count: int
    edge_count: int
    train_seconds: float
    flagged_empty: bool = field(default=False)


def graph_stats(
    project: str, train_graphs: Sequence[DocumentGraph], train_seconds: float
) -> GraphStats:
    """Summarize the training graphs of one project.

    node_count is the number of distinct token ids across the graphs;
    edge_count the number of distinct ordered token pairs, i.e. the
    pre-thresholding scale of the edge table built from the same split.
    """
    node_ids: set[int] = set()
    token_pairs: set[tuple[int, int]] = set()
    for g in train_graphs:
        node_ids.update(g.node_ids.tolist())
        for s, d in zip(g.edge_src.tolist(), g.edge_dst.tolist()):
            token_pairs.add((int(g.node_ids[s]), int(g.node_ids[d])))
    return GraphStats(
        project=project,
        train_size=len(train_graphs),
        node_count=len(node_ids),
        edge_count=len(token_pairs),
        train_seconds=train_seconds,
        flagged_empty=not train_graphs,
    )
