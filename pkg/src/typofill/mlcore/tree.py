"""CART decision trees: Gini classification and variance-reduction regression.

Split thresholds are midpoints between consecutive sorted distinct values.
Candidates are scanned with dims ascending and thresholds ascending and a new
best is accepted only on strict improvement, so ties resolve to the lowest
dim index, then the lowest threshold. A node splits when it is impure, deep
enough to grow, and has at least ``min_samples_split`` rows; a zero-gain split
is still taken (both children are non-empty, so recursion terminates).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import MlError


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0
    n_samples: int = 0
    leaf_id: int = -1

    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf():
            return {"value": self.value, "n": self.n_samples}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "n": self.n_samples,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TreeNode":
        if "value" in data:
            return cls(value=data["value"], n_samples=data["n"])
        return cls(
            feature=data["feature"],
            threshold=data["threshold"],
            n_samples=data["n"],
            left=cls.from_dict(data["left"]),
            right=cls.from_dict(data["right"]),
        )


def _best_split(X: np.ndarray, y: np.ndarray, dims: np.ndarray, criterion: str):
    """Best (dim, threshold) over the candidate dims, or None.

    Splits are scored by sum-of-squares-over-count of the children minus the
    parent's, which orders candidates identically to Gini decrease
    (classification) or variance reduction (regression). All dims are scanned
    in one vectorized pass; the flat argmax runs dims-major then
    thresholds-ascending, so exact ties resolve to the lowest dim index and
    then the lowest threshold.
    """
    sub = X[:, dims]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    found = _best_split_sorted(xs, y[order], criterion)
    if found is None:
        return None
    col, threshold = found
    return int(dims[col]), threshold


def _best_split_sorted(xs: np.ndarray, ys: np.ndarray, criterion: str):
    """Split search on column-wise presorted values; returns (column, threshold)."""
    if criterion not in ("gini", "variance"):
        raise MlError(f"unknown criterion {criterion!r}")
    boundary = xs[:-1] != xs[1:]
    if not boundary.any():
        return None
    n = len(ys)
    csum = np.cumsum(ys, axis=0)
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    left = csum[:-1]
    if criterion == "gini":
        pos = csum[-1, 0]
        neg_left = n_left - left
        pos_right = pos - left
        neg_right = n_right - pos_right
        children = ((left * left + neg_left * neg_left) / n_left
                    + (pos_right * pos_right + neg_right * neg_right) / n_right)
    else:
        total = csum[-1, 0]
        right = total - left
        children = left * left / n_left + right * right / n_right
    children[~boundary] = -np.inf
    flat = int(np.argmax(children.T))
    col, pos_idx = divmod(flat, n - 1)
    threshold = (xs[pos_idx, col] + xs[pos_idx + 1, col]) / 2.0
    if threshold >= xs[pos_idx + 1, col]:
        # Adjacent floats: the midpoint rounded up; fall back to the lower value.
        threshold = xs[pos_idx, col]
    return col, float(threshold)


class DecisionTree:
    """Single CART tree; also the base learner for forests and boosting.

    ``max_features`` (a count) enables per-split feature subsampling from the
    tree's own RNG, which must then be supplied; nodes are grown depth-first,
    left child before right, so the RNG consumption order is deterministic.
    """

    def __init__(self, criterion: str = "gini", max_depth: int | None = None,
                 min_samples_split: int = 2, max_features: int | None = None,
                 rng: np.random.Generator | None = None):
        if max_depth is not None and max_depth < 1:
            raise MlError("max_depth must be >= 1")
        if min_samples_split < 2:
            raise MlError("min_samples_split must be >= 2")
        if max_features is not None and rng is None:
            raise MlError("feature subsampling requires an RNG")
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.rng = rng
        self.root: TreeNode | None = None
        self.n_dims: int | None = None
        self._leaves: list[TreeNode] = []

    def fit(self, X: np.ndarray, y: np.ndarray,
            presorted: np.ndarray | None = None) -> "DecisionTree":
        """Fit on (X, y); ``presorted`` = argsort of every X column, reused by
        boosting so repeated fits on a static X never re-sort (children filter
        the parent's sorted order instead)."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
            raise MlError("bad training data shape")
        self.n_dims = X.shape[1]
        self._leaves = []
        if presorted is not None and self.max_features is None:
            self.root = self._grow_presorted(X, y, presorted, depth=0)
        else:
            self.root = self._grow(X, y, depth=0)
        return self

    def _leaf(self, y: np.ndarray) -> TreeNode:
        node = TreeNode(value=float(y.mean()), n_samples=len(y), leaf_id=len(self._leaves))
        self._leaves.append(node)
        return node

    def _grow(self, X: np.ndarray, y: np.ndarray, depth: int) -> TreeNode:
        n = len(y)
        pure = bool(np.all(y == y[0]))
        if (pure or n < self.min_samples_split
                or (self.max_depth is not None and depth >= self.max_depth)):
            return self._leaf(y)
        if self.max_features is not None and self.max_features < X.shape[1]:
            dims = np.sort(self.rng.choice(X.shape[1], self.max_features, replace=False))
        else:
            dims = np.arange(X.shape[1])
        best = _best_split(X, y, dims, self.criterion)
        if best is None:
            return self._leaf(y)
        dim, threshold = best
        mask = X[:, dim] <= threshold
        node = TreeNode(feature=int(dim), threshold=float(threshold), n_samples=n)
        node.left = self._grow(X[mask], y[mask], depth + 1)
        node.right = self._grow(X[~mask], y[~mask], depth + 1)
        return node

    def _grow_presorted(self, X: np.ndarray, y: np.ndarray,
                        sorted_idx: np.ndarray, depth: int) -> TreeNode:
        """Grow from per-dim presorted row indices; same splits and tie rules
        as :meth:`_grow`, without any per-node sorting."""
        n = sorted_idx.shape[0]
        y_node = y[sorted_idx[:, 0]]
        pure = bool(np.all(y_node == y_node[0]))
        if (pure or n < self.min_samples_split
                or (self.max_depth is not None and depth >= self.max_depth)):
            # Ascending row order keeps the leaf mean bit-identical to _grow's.
            return self._leaf(y[np.sort(sorted_idx[:, 0])])
        xs = X[sorted_idx, np.arange(X.shape[1])[None, :]]
        best = _best_split_sorted(xs, y[sorted_idx], self.criterion)
        if best is None:
            return self._leaf(y_node)
        dim, threshold = best
        node = TreeNode(feature=dim, threshold=threshold, n_samples=n)
        member = (X[:, dim] <= threshold)[sorted_idx]
        k_left = int(member[:, 0].sum())
        left_idx = sorted_idx.T[member.T].reshape(X.shape[1], k_left).T
        right_idx = sorted_idx.T[~member.T].reshape(X.shape[1], n - k_left).T
        node.left = self._grow_presorted(X, y, left_idx, depth + 1)
        node.right = self._grow_presorted(X, y, right_idx, depth + 1)
        return node

    def _route(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Batch-route rows to leaves; returns (values, leaf ids)."""
        X = np.asarray(X, dtype=np.float64)
        values = np.empty(len(X))
        leaf_ids = np.empty(len(X), dtype=np.intp)
        stack = [(self.root, np.arange(len(X)))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            if node.is_leaf():
                values[rows] = node.value
                leaf_ids[rows] = node.leaf_id
            else:
                mask = X[rows, node.feature] <= node.threshold
                stack.append((node.left, rows[mask]))
                stack.append((node.right, rows[~mask]))
        return values, leaf_ids

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self._route(X)[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by each row."""
        return self._route(X)[1]

    @property
    def n_leaves(self) -> int:
        return len(self._leaves)

    def leaf_values(self) -> np.ndarray:
        return np.array([leaf.value for leaf in self._leaves])

    def set_leaf_values(self, values: dict[int, float]) -> None:
        """Override leaf outputs (boosting writes Newton-step values here)."""
        for leaf_id, value in values.items():
            self._leaves[leaf_id].value = float(value)

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        tree = cls(criterion=data["criterion"])
        tree.root = TreeNode.from_dict(data["root"])
        tree._leaves = []

        def index(node: TreeNode):
            if node.is_leaf():
                node.leaf_id = len(tree._leaves)
                tree._leaves.append(node)
            else:
                index(node.left)
                index(node.right)

        index(tree.root)
        return tree
