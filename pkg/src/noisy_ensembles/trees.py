"""CART regression trees with exhaustive variance-reduction splits, and bagging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, DimensionError, EnsembleModel


@dataclass(frozen=True)
class RegressionTree:
    """Flat array representation of a binary regression tree.

    Node ``k`` is a leaf when ``feature[k] == -1``; otherwise rows with
    ``x[feature[k]] < threshold[k]`` go to ``left[k]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int
    max_depth: int = 8
    min_leaf: int = 2
    leaf_counts: np.ndarray | None = None

    @classmethod
    def constant(cls, value: float, n_features: int) -> "RegressionTree":
        return cls(
            feature=np.array([-1]),
            threshold=np.array([0.0]),
            left=np.array([-1]),
            right=np.array([-1]),
            value=np.array([float(value)]),
            n_features=n_features,
            max_depth=0,
            min_leaf=1,
        )

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        def rec(k):
            if self.feature[k] < 0:
                return 0
            return 1 + max(rec(self.left[k]), rec(self.right[k]))

        return rec(0)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {X.shape[1]}")
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while np.any(active):
            r = rows[active]
            k = node[r]
            go_left = X[r, self.feature[k]] < self.threshold[k]
            node[r] = np.where(go_left, self.left[k], self.right[k])
            active = self.feature[node] >= 0
        return self.value[node].copy()

    def to_records(self) -> list:
        """(feature, threshold, left, right, value) tuples, one per node."""
        return [
            [int(f), float(t), int(l), int(r), float(v)]
            for f, t, l, r, v in zip(self.feature, self.threshold, self.left, self.right, self.value)
        ]

    @classmethod
    def from_records(cls, records, n_features: int, max_depth: int = 8, min_leaf: int = 2):
        arr = list(zip(*records))
        return cls(
            feature=np.array(arr[0], dtype=np.intp),
            threshold=np.array(arr[1], dtype=np.float64),
            left=np.array(arr[2], dtype=np.intp),
            right=np.array(arr[3], dtype=np.intp),
            value=np.array(arr[4], dtype=np.float64),
            n_features=n_features,
            max_depth=max_depth,
            min_leaf=min_leaf,
        )


def tree_predict(tree: RegressionTree, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != tree.n_features:
        raise DimensionError(f"expected a vector of {tree.n_features} features, got shape {x.shape}")
    k = 0
    while tree.feature[k] >= 0:
        k = tree.left[k] if x[tree.feature[k]] < tree.threshold[k] else tree.right[k]
    return float(tree.value[k])


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Lowest-SSE split over every feature and every midpoint between sorted unique values.

    Ties go to the lowest feature index, then the lowest threshold.
    Returns (sse, feature, threshold) or None.
    """
    n = y.size
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total, total_sq = csum[-1], csq[-1]
        # candidate i splits rows [0, i] | [i+1, n)
        i = np.arange(min_leaf - 1, n - min_leaf)
        if i.size == 0:
            continue
        i = i[xs[i] < xs[i + 1]]
        if i.size == 0:
            continue
        nl = i + 1.0
        nr = n - nl
        sl = csum[i]
        sr = total - sl
        sse = (csq[i] - sl * sl / nl) + ((total_sq - csq[i]) - sr * sr / nr)
        m = int(np.argmin(sse))
        if best is None or sse[m] < best[0]:
            best = (float(sse[m]), j, 0.5 * (xs[i[m]] + xs[i[m] + 1]))
    return best


def fit_tree(dataset: Dataset, max_depth: int = 8, min_leaf: int = 2) -> RegressionTree:
    """Greedy CART fit; leaves predict the mean of their training targets."""
    X, y = dataset.features, dataset.targets
    n = y.size
    if n == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    if max_depth < 0 or min_leaf < 1:
        raise ValueError(f"invalid tree parameters max_depth={max_depth}, min_leaf={min_leaf}")
    if n < min_leaf:
        raise ValueError(f"dataset has {n} rows, fewer than min_leaf={min_leaf}")

    feature, threshold, left, right, value, counts = [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(y[rows])))
        counts.append(rows.size)
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        k, rows, depth = stack.pop()
        if depth >= max_depth or rows.size < 2 * min_leaf:
            continue
        ys = y[rows]
        parent_sse = float(np.sum((ys - ys.mean()) ** 2))
        if parent_sse <= 1e-12 * max(1.0, float(np.sum(ys * ys))):
            continue
        split = _best_split(X[rows], ys, min_leaf)
        if split is None or split[0] >= parent_sse - 1e-12 * max(1.0, parent_sse):
            continue
        _, j, thr = split
        mask = X[rows, j] < thr
        lk = new_node(rows[mask])
        rk = new_node(rows[~mask])
        feature[k], threshold[k], left[k], right[k] = j, thr, lk, rk
        stack.append((rk, rows[~mask], depth + 1))
        stack.append((lk, rows[mask], depth + 1))

    return RegressionTree(
        feature=np.array(feature, dtype=np.intp),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.intp),
        right=np.array(right, dtype=np.intp),
        value=np.array(value, dtype=np.float64),
        n_features=dataset.n_features,
        max_depth=max_depth,
        min_leaf=min_leaf,
        leaf_counts=np.array(counts, dtype=np.intp),
    )


@dataclass(frozen=True)
class BaggingConfig:
    T: int = 32
    sample_fraction: float = 0.6
    max_depth: int = 8
    min_leaf: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValueError(f"sample_fraction must be in (0, 1], got {self.sample_fraction}")
        if self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


def stream_rng(*key: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``key``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def subsample_indices(n: int, config: BaggingConfig, t: int) -> np.ndarray:
    size = int(np.floor(config.sample_fraction * n))
    perm = stream_rng(config.seed, t).permutation(n)
    return np.sort(perm[:size])


def fit_bagging(dataset: Dataset, config: BaggingConfig) -> EnsembleModel:
    """T trees, each on its own subsample drawn without replacement from stream (seed, t)."""
    n = dataset.n_samples
    if int(np.floor(config.sample_fraction * n)) < config.min_leaf:
        raise ValueError(
            f"subsample of {config.sample_fraction} x {n} rows is smaller than min_leaf={config.min_leaf}"
        )
    trees = [
        fit_tree(dataset.subset(subsample_indices(n, config, t)), config.max_depth, config.min_leaf)
        for t in range(config.T)
    ]
    return EnsembleModel(tuple(trees), kind="bagging")
