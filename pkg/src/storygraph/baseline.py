"""Traditional comparison pipeline: 1-4 gram tf-idf plus a random forest.

Both halves are implemented here rather than imported so the exact split
and tie-break semantics stay pinned down and testable: candidate thresholds
are midpoints between consecutive distinct feature values, the best split
minimizes weighted child impurity (Gini for classification, variance for
regression), and ties fall to the lowest feature index, then the lowest
threshold. Forest votes break ties toward the lowest class index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateDataError, EmptyCorpusError

MAX_NGRAM = 4
UNIT_NORM_TOLERANCE = 1e-9


# --- tf-idf -----------------------------------------------------------------


@dataclass(frozen=True)
class SparseVector:
    """Sorted sparse feature vector; unit L2 norm unless empty."""

    indices: np.ndarray  # int64, strictly increasing
    values: np.ndarray  # float64
    dim: int

    def __post_init__(self) -> None:
        if self.indices.shape != self.values.shape:
            raise ValueError("index/value arrays differ in length")
        if self.indices.size and np.any(np.diff(self.indices) <= 0):
            raise ValueError("feature indices must be strictly increasing")

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values**2)))

    def value_at(self, feature: int) -> float:
        pos = int(np.searchsorted(self.indices, feature))
        if pos < self.indices.size and int(self.indices[pos]) == feature:
            return float(self.values[pos])
        return 0.0


def iter_ngrams(tokens: Sequence[str], max_n: int = MAX_NGRAM):
    """All contiguous 1..max_n grams, joined by single spaces."""
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            yield " ".join(tokens[i : i + n])


@dataclass
class TfidfModel:
    """Fitted vectorizer: n-gram feature space and smoothed idf weights."""

    vocabulary: dict[str, int]  # n-gram -> column
    idf: np.ndarray  # (F,)
    document_count: int
    max_ngram: int = MAX_NGRAM

    @property
    def n_features(self) -> int:
        return int(self.idf.shape[0])


def tfidf_fit(
    token_docs: Sequence[Sequence[str]], max_ngram: int = MAX_NGRAM
) -> TfidfModel:
    """Fit idf weights on the training documents only.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1, the smoothed variant that never
    zeroes a feature out. Columns are assigned in sorted n-gram order so the
    feature space is independent of document order.
    """
    if not token_docs:
        raise EmptyCorpusError("no documents to fit on")
    df: dict[str, int] = {}
    for tokens in token_docs:
        for gram in set(iter_ngrams(tokens, max_ngram)):
            df[gram] = df.get(gram, 0) + 1
    if not df:
        raise EmptyCorpusError("documents contain no n-grams")
    vocabulary = {gram: col for col, gram in enumerate(sorted(df))}
    n = len(token_docs)
    idf = np.zeros(len(vocabulary))
    for gram, col in vocabulary.items():
        idf[col] = math.log((1.0 + n) / (1.0 + df[gram])) + 1.0
    return TfidfModel(
        vocabulary=vocabulary, idf=idf, document_count=n, max_ngram=max_ngram
    )


def tfidf_transform(model: TfidfModel, tokens: Sequence[str]) -> SparseVector:
    """Count-weighted idf vector, L2-normalized; unseen n-grams are ignored
    and a document with no known n-grams maps to the empty vector."""
    counts: dict[int, int] = {}
    for gram in iter_ngrams(tokens, model.max_ngram):
        col = model.vocabulary.get(gram)
        if col is not None:
            counts[col] = counts.get(col, 0) + 1
    if not counts:
        return SparseVector(
            indices=np.zeros(0, dtype=np.int64),
            values=np.zeros(0),
            dim=model.n_features,
        )
    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.array([counts[int(j)] for j in indices], dtype=np.float64)
    values *= model.idf[indices]
    values /= np.sqrt(np.sum(values**2))
    return SparseVector(indices=indices, values=values, dim=model.n_features)


# --- random forest ----------------------------------------------------------


@dataclass
class RandomForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    max_features: int | str = "auto"  # "auto": sqrt(F) classify, F/3 regress
    bootstrap: bool = True
    seed: int = 0


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    histogram: np.ndarray | None = None  # classification leaf: class counts
    value: float = 0.0  # regression leaf: mean target

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class Tree:
    root: TreeNode
    bootstrap_seed: int


@dataclass
class Forest:
    trees: list[Tree]
    config: RandomForestConfig
    task: str  # "classify" | "regress"
    n_features: int
    n_classes: int = 0  # classification only


class _ColumnStore:
    """Column-major view of the sparse training matrix: per feature, the
    rows holding a nonzero and their values, sorted by row."""

    def __init__(self, vectors: Sequence[SparseVector], n_features: int):
        per_col_rows: dict[int, list[int]] = {}
        per_col_vals: dict[int, list[float]] = {}
        for row, vec in enumerate(vectors):
            for j, val in zip(vec.indices.tolist(), vec.values.tolist()):
                per_col_rows.setdefault(j, []).append(row)
                per_col_vals.setdefault(j, []).append(val)
        self.n_features = n_features
        self._cols = {
            j: (
                np.array(rows, dtype=np.int64),
                np.array(per_col_vals[j], dtype=np.float64),
            )
            for j, rows in per_col_rows.items()
        }

    def values(self, feature: int, rows: np.ndarray) -> np.ndarray:
        out = np.zeros(rows.shape[0])
        col = self._cols.get(feature)
        if col is None:
            return out
        stored_rows, stored_vals = col
        pos = np.searchsorted(stored_rows, rows)
        pos_c = np.minimum(pos, stored_rows.size - 1)
        hit = stored_rows[pos_c] == rows
        out[hit] = stored_vals[pos_c[hit]]
        return out


def _gini_best_cut(
    xs: np.ndarray, ys: np.ndarray, n_classes: int, min_leaf: int
) -> tuple[float, float] | None:
    """Lowest weighted child Gini over midpoint cuts of a sorted column;
    first (= lowest) threshold wins ties."""
    m = xs.shape[0]
    cuts = np.nonzero(xs[:-1] < xs[1:])[0]
    if cuts.size == 0:
        return None
    onehot = np.zeros((m, n_classes))
    onehot[np.arange(m), ys] = 1.0
    cum = np.cumsum(onehot, axis=0)
    left = cum[cuts]
    right = cum[-1] - left
    nl = (cuts + 1).astype(np.float64)
    nr = m - nl
    ok = (nl >= min_leaf) & (nr >= min_leaf)
    if not ok.any():
        return None
    gini_l = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
    gini_r = 1.0 - np.sum((right / nr[:, None]) ** 2, axis=1)
    score = (nl * gini_l + nr * gini_r) / m
    score[~ok] = np.inf
    best = int(np.argmin(score))
    threshold = (xs[cuts[best]] + xs[cuts[best] + 1]) / 2.0
    return float(score[best]), float(threshold)


def _variance_best_cut(
    xs: np.ndarray, ys: np.ndarray, min_leaf: int
) -> tuple[float, float] | None:
    """Lowest weighted child variance over midpoint cuts of a sorted column."""
    m = xs.shape[0]
    cuts = np.nonzero(xs[:-1] < xs[1:])[0]
    if cuts.size == 0:
        return None
    cum_s = np.cumsum(ys)
    cum_q = np.cumsum(ys**2)
    sl = cum_s[cuts]
    ql = cum_q[cuts]
    nl = (cuts + 1).astype(np.float64)
    nr = m - nl
    ok = (nl >= min_leaf) & (nr >= min_leaf)
    if not ok.any():
        return None
    sr = cum_s[-1] - sl
    qr = cum_q[-1] - ql
    var_l = np.maximum(ql / nl - (sl / nl) ** 2, 0.0)
    var_r = np.maximum(qr / nr - (sr / nr) ** 2, 0.0)
    score = (nl * var_l + nr * var_r) / m
    score[~ok] = np.inf
    best = int(np.argmin(score))
    threshold = (xs[cuts[best]] + xs[cuts[best] + 1]) / 2.0
    return float(score[best]), float(threshold)


def _resolve_max_features(spec: int | str, n_features: int, task: str) -> int:
    if isinstance(spec, int):
        return max(1, min(spec, n_features))
    if spec == "auto":
        k = int(math.sqrt(n_features)) if task == "classify" else n_features // 3
        return max(1, k)
    if spec == "all":
        return n_features
    raise ValueError(f"unknown max_features {spec!r}")


def _grow_tree(
    store: _ColumnStore,
    labels: np.ndarray,
    rows: np.ndarray,
    config: RandomForestConfig,
    task: str,
    n_classes: int,
    rng: np.random.Generator,
) -> TreeNode:
    k = _resolve_max_features(config.max_features, store.n_features, task)

    def leaf(node_rows: np.ndarray) -> TreeNode:
        y = labels[node_rows]
        if task == "classify":
            hist = np.bincount(y.astype(np.int64), minlength=n_classes).astype(
                np.float64
            )
            return TreeNode(histogram=hist)
        return TreeNode(value=float(y.mean()))

    root = TreeNode()
    # (node, rows, depth) grown iteratively; recursion would hit the
    # interpreter limit on deep trees
    stack: list[tuple[TreeNode, np.ndarray, int]] = [(root, rows, 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        y = labels[node_rows]
        pure = np.all(y == y[0])
        too_deep = config.max_depth is not None and depth >= config.max_depth
        if pure or too_deep or node_rows.shape[0] < max(2, 2 * config.min_leaf):
            replacement = leaf(node_rows)
            node.histogram = replacement.histogram
            node.value = replacement.value
            continue

        if k >= store.n_features:
            candidates = np.arange(store.n_features)
        else:
            candidates = np.sort(rng.choice(store.n_features, size=k, replace=False))
        best_score = np.inf
        best_feature = -1
        best_threshold = 0.0
        best_x: np.ndarray | None = None
        for j in candidates.tolist():
            x = store.values(j, node_rows)
            order = np.argsort(x, kind="stable")
            found = (
                _gini_best_cut(x[order], y[order], n_classes, config.min_leaf)
                if task == "classify"
                else _variance_best_cut(x[order], y[order], config.min_leaf)
            )
            if found is None:
                continue
            score, threshold = found
            if score < best_score:
                best_score = score
                best_feature = j
                best_threshold = threshold
                best_x = x
        if best_feature < 0:
            replacement = leaf(node_rows)
            node.histogram = replacement.histogram
            node.value = replacement.value
            continue

        assert best_x is not None
        go_left = best_x <= best_threshold
        node.feature = best_feature
        node.threshold = best_threshold
        node.left = TreeNode()
        node.right = TreeNode()
        stack.append((node.right, node_rows[~go_left], depth + 1))
        stack.append((node.left, node_rows[go_left], depth + 1))
    return root


def rf_fit(
    features: Sequence[SparseVector],
    labels: Sequence[int] | Sequence[float],
    config: RandomForestConfig | None = None,
    task: str = "classify",
) -> Forest:
    """Grow the forest: each tree on its own bootstrap sample (same size as
    the training set) with a fresh feature subsample per split."""
    if task not in ("classify", "regress"):
        raise ValueError(f"unknown task {task!r}")
    config = config or RandomForestConfig()
    n = len(features)
    if n < 2:
        raise DegenerateDataError(f"{n} training sample(s), need at least 2")
    if n != len(labels):
        raise ValueError(f"{n} feature vectors but {len(labels)} labels")
    dims = {vec.dim for vec in features}
    if len(dims) != 1:
        raise ValueError(f"inconsistent feature dimensions {sorted(dims)}")
    n_features = dims.pop()

    if task == "classify":
        y = np.asarray(labels, dtype=np.int64)
        if y.min() < 0:
            raise ValueError("class labels must be nonnegative")
        n_classes = int(y.max()) + 1
    else:
        y = np.asarray(labels, dtype=np.float64)
        n_classes = 0

    store = _ColumnStore(features, n_features)
    tree_seeds = np.random.SeedSequence(config.seed).generate_state(config.n_trees)
    trees = []
    for seed in tree_seeds.tolist():
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
        root = _grow_tree(store, y, rows, config, task, n_classes, rng)
        trees.append(Tree(root=root, bootstrap_seed=int(seed)))
    return Forest(
        trees=trees,
        config=config,
        task=task,
        n_features=n_features,
        n_classes=n_classes,
    )


def _descend(root: TreeNode, vector: SparseVector) -> TreeNode:
    node = root
    while not node.is_leaf:
        assert node.right is not None
        node = node.left if vector.value_at(node.feature) <= node.threshold else node.right
    return node


def rf_predict(forest: Forest, vector: SparseVector) -> int | float:
    """Majority vote (lowest class index on ties) or mean of leaf means."""
    if forest.task == "classify":
        votes = np.zeros(forest.n_classes, dtype=np.int64)
        for tree in forest.trees:
            leaf = _descend(tree.root, vector)
            assert leaf.histogram is not None
            votes[int(np.argmax(leaf.histogram))] += 1
        return int(np.argmax(votes))
    total = 0.0
    for tree in forest.trees:
        total += _descend(tree.root, vector).value
    return total / len(forest.trees)


def rf_predict_many(
    forest: Forest, vectors: Iterable[SparseVector]
) -> list[int] | list[float]:
    return [rf_predict(forest, vec) for vec in vectors]
