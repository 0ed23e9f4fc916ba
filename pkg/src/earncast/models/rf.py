"""Random-forest direction classifier: bootstrapped gini trees with per-split
feature subsampling; predicted probability is the mean of per-tree leaf
class-1 frequencies. Per-tree seeds derive from the root seed, so the
ensemble is reproducible tree by tree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RfParams, TrainConfig
from .tree import DecisionTree, _TreeBuilder, check_row_width, check_training_inputs

MIN_IMPURITY_DECREASE = 1e-12


@dataclass
class RfClassifier:
    trees: list[DecisionTree]
    n_features: int
    train_prior: float
    oob_accuracy: float | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def per_tree_proba(self, X: np.ndarray) -> np.ndarray:
        X = check_row_width(self.n_features, X)
        return np.stack([t.predict(X) for t in self.trees])

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.per_tree_proba(X).mean(axis=0)


def _gini_split(X, y, rows, feat_candidates, min_samples_leaf):
    """Best (weighted-gini-decrease, feature, threshold) over the candidate
    features, vectorized; ties break to the first candidate. Returns None
    when no split clears the impurity-decrease floor."""
    n = len(rows)
    if n < 2:
        return None
    yn = y[rows]
    ones_total = yn.sum()
    p = ones_total / n
    parent_gini = 2.0 * p * (1.0 - p)

    Xn = X[rows][:, feat_candidates]
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    ones_left = np.cumsum(yn[order], axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    valid = xs[:-1] < xs[1:]
    valid &= (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    if not np.any(valid):
        return None
    pl = ones_left / n_left
    pr = (ones_total - ones_left) / n_right
    child = (n_left * 2 * pl * (1 - pl) + n_right * 2 * pr * (1 - pr)) / n
    gain = parent_gini - child
    gain[~valid] = -np.inf
    col, pos = divmod(int(np.argmax(gain.T)), n - 1)
    if gain[pos, col] <= MIN_IMPURITY_DECREASE:
        return None
    threshold = (xs[pos, col] + xs[pos + 1, col]) / 2.0
    return float(gain[pos, col]), int(feat_candidates[col]), float(threshold)


def _grow_tree(X, y, rows, params: RfParams, mtry: int, rng: np.random.Generator) -> DecisionTree:
    builder = _TreeBuilder()
    root = builder.add_node(0)
    stack = [(root, rows, 0)]
    n_features = X.shape[1]
    while stack:
        node, idx, depth = stack.pop()
        ones = y[idx].sum()
        pure = ones == 0 or ones == len(idx)
        split = None
        if not pure and depth < params.max_depth and len(idx) >= 2 * params.min_samples_leaf:
            feats = np.sort(rng.choice(n_features, size=mtry, replace=False))
            split = _gini_split(X, y, idx, feats, params.min_samples_leaf)
            if split is None:
                # candidates were uninformative; fall back to the full feature set
                split = _gini_split(X, y, idx, np.arange(n_features), params.min_samples_leaf)
        if split is None:
            builder.set_leaf(node, ones / len(idx))
            continue
        _, feat, thr = split
        go_left = X[idx, feat] < thr
        left = builder.add_node(depth + 1)
        right = builder.add_node(depth + 1)
        builder.set_split(node, feat, thr, left, right)
        stack.append((right, idx[~go_left], depth + 1))
        stack.append((left, idx[go_left], depth + 1))
    return builder.freeze()


def train_rf(features, labels, cfg: TrainConfig) -> RfClassifier:
    """Fit cfg.rf.n_trees bootstrap trees; also computes out-of-bag accuracy."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    check_training_inputs(X, y, require_two_classes=True)
    params = cfg.rf
    n = len(y)
    mtry = params.mtry or max(1, int(np.sqrt(X.shape[1])))

    seeds = np.random.SeedSequence(cfg.seed).spawn(params.n_trees)
    trees: list[DecisionTree] = []
    oob_sum = np.zeros(n)
    oob_count = np.zeros(n)
    for seq in seeds:
        rng = np.random.default_rng(seq)
        boot = rng.integers(0, n, size=n)
        tree = _grow_tree(X, y, boot, params, mtry, rng)
        tree.validate(max_depth=params.max_depth)
        trees.append(tree)
        oob = np.setdiff1d(np.arange(n), boot, assume_unique=False)
        if oob.size:
            oob_sum[oob] += tree.predict(X[oob])
            oob_count[oob] += 1

    covered = oob_count > 0
    oob_accuracy = None
    if np.any(covered):
        oob_pred = (oob_sum[covered] / oob_count[covered]) >= 0.5
        oob_accuracy = float(np.mean(oob_pred == (y[covered] == 1)))

    return RfClassifier(
        trees=trees,
        n_features=X.shape[1],
        train_prior=float(y.mean()),
        oob_accuracy=oob_accuracy,
    )
