"""Array-backed binary decision tree shared by the boosted and forest ensembles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAF = -1


class ModelError(Exception):
    pass


class SingleClassError(ModelError):
    pass


class SchemaMismatchError(ModelError):
    pass


@dataclass
class DecisionTree:
    """Nodes stored as parallel arrays; feature == -1 marks a leaf.

    Internal nodes always have both children; rows with x[feature] < threshold
    go left.
    """

    feature: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int32))
    threshold: np.ndarray = field(default_factory=lambda: np.zeros(0))
    left: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int32))
    right: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int32))
    value: np.ndarray = field(default_factory=lambda: np.zeros(0))
    depth: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def validate(self, max_depth: int | None = None) -> None:
        internal = self.feature != LEAF
        if np.any((self.left[internal] < 0) | (self.right[internal] < 0)):
            raise ModelError("internal node missing a child")
        if max_depth is not None and self.depth > max_depth:
            raise ModelError(f"tree depth {self.depth} exceeds cap {max_depth}")

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf value for every row of X."""
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        active = np.arange(n)
        while active.size:
            cur = node[active]
            feats = self.feature[cur]
            at_leaf = feats == LEAF
            active = active[~at_leaf]
            if not active.size:
                break
            cur = node[active]
            go_left = X[active, self.feature[cur]] < self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]


class _TreeBuilder:
    """Accumulates nodes during top-down growth, then freezes to DecisionTree."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.max_depth_seen = 0

    def add_node(self, depth: int) -> int:
        idx = len(self.feature)
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(0.0)
        self.max_depth_seen = max(self.max_depth_seen, depth)
        return idx

    def set_split(self, idx: int, feature: int, threshold: float, left: int, right: int) -> None:
        self.feature[idx] = feature
        self.threshold[idx] = threshold
        self.left[idx] = left
        self.right[idx] = right

    def set_leaf(self, idx: int, value: float) -> None:
        self.value[idx] = value

    def freeze(self) -> DecisionTree:
        return DecisionTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            depth=self.max_depth_seen,
        )


def check_training_inputs(X: np.ndarray, y: np.ndarray, require_two_classes: bool) -> None:
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ModelError(f"feature matrix {X.shape} does not match labels {y.shape}")
    if X.shape[0] < 2:
        raise ModelError("need at least 2 training rows")
    if not np.all(np.isfinite(X)):
        raise ModelError("non-finite feature values")
    if require_two_classes:
        classes = np.unique(y)
        if not np.array_equal(classes, [0, 1]):
            if classes.size == 1:
                raise SingleClassError(f"labels contain a single class ({classes[0]})")
            raise ModelError(f"labels must be binary 0/1, got {classes}")


def check_row_width(n_features: int, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != n_features:
        raise SchemaMismatchError(f"expected {n_features} features, got {X.shape[1]}")
    return X
