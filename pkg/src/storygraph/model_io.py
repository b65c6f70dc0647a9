"""Versioned binary container for trained models.

Layout: 7-byte magic, 1 version byte, little-endian uint64 header length,
UTF-8 JSON header, then raw little-endian arrays in a fixed order
(five float64 parameter arrays, then the indexed edge pairs as int64).
Arrays round-trip bit-exactly. The edge pair list is stored in parameter
index order, so index i+1 in the edge-weight vector belongs to pairs[i];
pre-threshold co-occurrence counts are not persisted.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .baseline import (
    Forest,
    RandomForestConfig,
    TfidfModel,
    Tree,
    TreeNode,
)
from .embeddings import Vocabulary
from .errors import CorruptFileError, VersionMismatchError
from .gnn import ModelParameters, TrainConfig
from .graph import EdgeTable

MAGIC_PREFIX = b"STGRMDL"
BASELINE_MAGIC_PREFIX = b"STGRBSL"
FORMAT_VERSION = 1


@dataclass
class ModelBundle:
    """A trained model plus everything needed to score unseen issues."""

    params: ModelParameters
    config: TrainConfig
    vocabulary: Vocabulary
    edge_table: EdgeTable
    class_values: tuple[int, ...] = ()  # story-point mode: value per class index


def _ordered_pairs(table: EdgeTable) -> np.ndarray:
    pairs = np.zeros((len(table.pair_index), 2), dtype=np.int64)
    for (src, dst), idx in table.pair_index.items():
        pairs[idx - 1] = (src, dst)
    return pairs


def save_model(path: str | Path, bundle: ModelBundle) -> None:
    params = bundle.params
    vocab = bundle.vocabulary
    pairs = _ordered_pairs(bundle.edge_table)
    header = {
        "format_version": FORMAT_VERSION,
        "vocab_size": params.vocab_size,
        "dim": params.dim,
        "n_classes": params.n_classes,
        "n_edge_params": int(params.edge_weights.shape[0]),
        "n_pairs": int(pairs.shape[0]),
        "config": asdict(bundle.config),
        "class_values": list(bundle.class_values),
        "tokens": list(vocab.id_to_token),
        "token_counts": [int(c) for c in vocab.counts],
        "edge_window": bundle.edge_table.window,
        "edge_min_frequency": bundle.edge_table.min_frequency,
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC_PREFIX)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in params.named_arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(pairs, dtype="<i8").tobytes())


def _take(buf: bytes, offset: int, dtype: str, shape: tuple[int, ...]) -> tuple[np.ndarray, int]:
    want = int(np.prod(shape)) if shape else 1
    itemsize = np.dtype(dtype).itemsize
    end = offset + want * itemsize
    if end > len(buf):
        raise CorruptFileError(
            f"array section truncated: need {end} bytes, file has {len(buf)}"
        )
    arr = np.frombuffer(buf[offset:end], dtype=dtype).reshape(shape).copy()
    return arr, end


def load_model(path: str | Path) -> ModelBundle:
    """Read a model container back; inverse of save_model, bit for bit."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC_PREFIX) + 9:
        raise CorruptFileError(f"{path}: too short to be a model file")
    if data[: len(MAGIC_PREFIX)] != MAGIC_PREFIX:
        raise CorruptFileError(f"{path}: not a model file (bad magic)")
    version = data[len(MAGIC_PREFIX)]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, this build reads {FORMAT_VERSION}"
        )
    pos = len(MAGIC_PREFIX) + 1
    (header_len,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if pos + header_len > len(data):
        raise CorruptFileError(f"{path}: header extends past end of file")
    try:
        header = json.loads(data[pos : pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CorruptFileError(f"{path}: unreadable header: {err}") from err
    pos += header_len
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: header declares version {header.get('format_version')}"
        )

    try:
        v = int(header["vocab_size"])
        d = int(header["dim"])
        c = int(header["n_classes"])
        n_edge = int(header["n_edge_params"])
        n_pairs = int(header["n_pairs"])
        tokens = list(header["tokens"])
        token_counts = list(header["token_counts"])
        config = TrainConfig(**header["config"])
        class_values = tuple(int(x) for x in header["class_values"])
        edge_window = int(header["edge_window"])
        edge_min_frequency = int(header["edge_min_frequency"])
    except (KeyError, TypeError, ValueError) as err:
        raise CorruptFileError(f"{path}: malformed header field: {err}") from err
    if len(tokens) != v or len(token_counts) != v:
        raise CorruptFileError(
            f"{path}: header lists {len(tokens)} tokens for vocabulary of {v}"
        )
    if n_edge != n_pairs + 1:
        raise CorruptFileError(
            f"{path}: {n_edge} edge parameters cannot index {n_pairs} pairs"
        )

    embeddings, pos = _take(data, pos, "<f8", (v, d))
    edge_weights, pos = _take(data, pos, "<f8", (n_edge,))
    gates, pos = _take(data, pos, "<f8", (v,))
    classifier_weights, pos = _take(data, pos, "<f8", (c, d))
    classifier_bias, pos = _take(data, pos, "<f8", (c,))
    pairs, pos = _take(data, pos, "<i8", (n_pairs, 2))
    if pos != len(data):
        raise CorruptFileError(f"{path}: {len(data) - pos} unexpected trailing bytes")

    params = ModelParameters(
        embeddings=embeddings,
        edge_weights=edge_weights,
        gates=gates,
        classifier_weights=classifier_weights,
        classifier_bias=classifier_bias,
    )
    vocabulary = Vocabulary(
        id_to_token=list(tokens),
        token_to_id={t: i for i, t in enumerate(tokens)},
        counts=[int(n) for n in token_counts],
    )
    pair_index = {
        (int(src), int(dst)): i + 1 for i, (src, dst) in enumerate(pairs)
    }
    table = EdgeTable(
        pair_counts={},
        pair_index=pair_index,
        min_frequency=edge_min_frequency,
        window=edge_window,
    )
    return ModelBundle(
        params=params,
        config=config,
        vocabulary=vocabulary,
        edge_table=table,
        class_values=class_values,
    )


# --- baseline container -----------------------------------------------------


@dataclass
class BaselineBundle:
    """A fitted tf-idf vectorizer and forest, savable as one file."""

    tfidf: TfidfModel
    forest: Forest


def _flatten_tree(root: TreeNode, n_classes: int):
    """Preorder arrays (feature, threshold, left, right, value, histogram);
    child index -1 marks a leaf."""
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    hist_rows: list[np.ndarray] = []
    stack: list[tuple[TreeNode, int, int]] = [(root, -1, 0)]
    while stack:
        node, parent, side = stack.pop()
        idx = len(feature)
        if parent >= 0:
            (left if side == 0 else right)[parent] = idx
        feature.append(node.feature)
        threshold.append(node.threshold)
        left.append(-1)
        right.append(-1)
        value.append(node.value)
        if node.histogram is not None:
            hist_rows.append(node.histogram)
        else:
            hist_rows.append(np.zeros(n_classes))
        if not node.is_leaf:
            assert node.right is not None
            stack.append((node.right, idx, 1))
            stack.append((node.left, idx, 0))
    histogram = (
        np.stack(hist_rows) if n_classes else np.zeros((len(feature), 0))
    )
    return (
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
        histogram,
    )


def _unflatten_tree(
    feature: np.ndarray,
    threshold: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    value: np.ndarray,
    histogram: np.ndarray,
    task: str,
) -> TreeNode:
    n = feature.shape[0]
    nodes = [TreeNode() for _ in range(n)]
    for i in range(n):
        node = nodes[i]
        if left[i] < 0:
            if task == "classify":
                node.histogram = histogram[i].copy()
            node.value = float(value[i])
        else:
            if not 0 <= int(left[i]) < n or not 0 <= int(right[i]) < n:
                raise CorruptFileError("tree child index out of range")
            node.feature = int(feature[i])
            node.threshold = float(threshold[i])
            node.left = nodes[int(left[i])]
            node.right = nodes[int(right[i])]
    return nodes[0]


def save_baseline_model(path: str | Path, bundle: BaselineBundle) -> None:
    tfidf = bundle.tfidf
    forest = bundle.forest
    terms_by_column: list[str] = [""] * tfidf.n_features
    for gram, col in tfidf.vocabulary.items():
        terms_by_column[col] = gram
    flats = [_flatten_tree(t.root, forest.n_classes) for t in forest.trees]
    header = {
        "format_version": FORMAT_VERSION,
        "task": forest.task,
        "n_features": forest.n_features,
        "n_classes": forest.n_classes,
        "forest_config": asdict(forest.config),
        "bootstrap_seeds": [t.bootstrap_seed for t in forest.trees],
        "tree_node_counts": [int(f[0].shape[0]) for f in flats],
        "terms": terms_by_column,
        "document_count": tfidf.document_count,
        "max_ngram": tfidf.max_ngram,
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(BASELINE_MAGIC_PREFIX)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(tfidf.idf, dtype="<f8").tobytes())
        for feature, threshold, left, right, value, histogram in flats:
            fh.write(np.ascontiguousarray(feature, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(threshold, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(left, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(right, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
            if forest.n_classes:
                fh.write(np.ascontiguousarray(histogram, dtype="<f8").tobytes())


def load_baseline_model(path: str | Path) -> BaselineBundle:
    data = Path(path).read_bytes()
    if len(data) < len(BASELINE_MAGIC_PREFIX) + 9:
        raise CorruptFileError(f"{path}: too short to be a baseline model file")
    if data[: len(BASELINE_MAGIC_PREFIX)] != BASELINE_MAGIC_PREFIX:
        raise CorruptFileError(f"{path}: not a baseline model file (bad magic)")
    version = data[len(BASELINE_MAGIC_PREFIX)]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, this build reads {FORMAT_VERSION}"
        )
    pos = len(BASELINE_MAGIC_PREFIX) + 1
    (header_len,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if pos + header_len > len(data):
        raise CorruptFileError(f"{path}: header extends past end of file")
    try:
        header = json.loads(data[pos : pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CorruptFileError(f"{path}: unreadable header: {err}") from err
    pos += header_len

    try:
        task = str(header["task"])
        n_features = int(header["n_features"])
        n_classes = int(header["n_classes"])
        config = RandomForestConfig(**header["forest_config"])
        seeds = [int(s) for s in header["bootstrap_seeds"]]
        node_counts = [int(c) for c in header["tree_node_counts"]]
        terms = list(header["terms"])
        document_count = int(header["document_count"])
        max_ngram = int(header["max_ngram"])
    except (KeyError, TypeError, ValueError) as err:
        raise CorruptFileError(f"{path}: malformed header field: {err}") from err
    if len(terms) != n_features:
        raise CorruptFileError(
            f"{path}: header lists {len(terms)} terms for {n_features} features"
        )
    if len(seeds) != len(node_counts):
        raise CorruptFileError(f"{path}: per-tree metadata lengths disagree")

    idf, pos = _take(data, pos, "<f8", (n_features,))
    trees = []
    for seed, count in zip(seeds, node_counts):
        feature, pos = _take(data, pos, "<i8", (count,))
        threshold, pos = _take(data, pos, "<f8", (count,))
        left, pos = _take(data, pos, "<i8", (count,))
        right, pos = _take(data, pos, "<i8", (count,))
        value, pos = _take(data, pos, "<f8", (count,))
        if n_classes:
            histogram, pos = _take(data, pos, "<f8", (count, n_classes))
        else:
            histogram = np.zeros((count, 0))
        root = _unflatten_tree(
            feature, threshold, left, right, value, histogram, task
        )
        trees.append(Tree(root=root, bootstrap_seed=seed))
    if pos != len(data):
        raise CorruptFileError(f"{path}: {len(data) - pos} unexpected trailing bytes")

    tfidf = TfidfModel(
        vocabulary={gram: col for col, gram in enumerate(terms)},
        idf=idf,
        document_count=document_count,
        max_ngram=max_ngram,
    )
    forest = Forest(
        trees=trees,
        config=config,
        task=task,
        n_features=n_features,
        n_classes=n_classes,
    )
    return BaselineBundle(tfidf=tfidf, forest=forest)
