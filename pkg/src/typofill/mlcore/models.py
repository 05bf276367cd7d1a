"""The five classifier kinds behind one train / predict-proba contract.

``fit(kind, params, dataset, seed)`` is deterministic for fixed inputs: every
stochastic consumer derives child seeds up front (see ``seeding``), so forest
fitting may be spread over threads without changing any prediction. A
single-class dataset yields a constant predictor flagged on the model instead
of an error.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import MlError
from .seeding import child_seed
from .tree import DecisionTree

KINDS = ("knn", "decision_tree", "random_forest", "gradient_boosting", "logistic_regression")


@dataclass(frozen=True)
class KnnParams:
    k: int = 5
    metric: str = "euclidean"

    def __post_init__(self):
        if self.k < 1:
            raise MlError("k must be >= 1")
        if self.metric != "euclidean":
            raise MlError(f"unsupported metric {self.metric!r}")


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise MlError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise MlError("min_samples_split must be >= 2")


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: float | None = None  # fraction of dims per split; None = sqrt

    def __post_init__(self):
        if self.n_estimators < 1:
            raise MlError("n_estimators must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise MlError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise MlError("min_samples_split must be >= 2")
        if self.max_features is not None and not 0.0 < self.max_features <= 1.0:
            raise MlError("max_features fraction must be in (0, 1]")


@dataclass(frozen=True)
class BoostingParams:
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_split: int = 2

    def __post_init__(self):
        if self.n_estimators < 1:
            raise MlError("n_estimators must be >= 1")
        if self.learning_rate <= 0:
            raise MlError("learning_rate must be > 0")
        if self.max_depth < 1:
            raise MlError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise MlError("min_samples_split must be >= 2")


@dataclass(frozen=True)
class LogisticParams:
    l2_strength: float = 1e-3
    max_iterations: int = 500
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.l2_strength < 0:
            raise MlError("l2_strength must be >= 0")
        if self.max_iterations < 1:
            raise MlError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise MlError("tolerance must be > 0")


PARAM_TYPES = {
    "knn": KnnParams,
    "decision_tree": TreeParams,
    "random_forest": ForestParams,
    "gradient_boosting": BoostingParams,
    "logistic_regression": LogisticParams,
}


@dataclass
class Dataset:
    rows: np.ndarray
    labels: np.ndarray
    row_keys: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rows.ndim != 2:
            raise MlError("rows must be a 2-d matrix")
        if len(self.rows) != len(self.labels):
            raise MlError("rows and labels length mismatch")
        if not np.all(np.isfinite(self.rows)):
            raise MlError("rows contain NaN/Inf")
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise MlError("labels must be 0/1")
        if self.row_keys and len(self.row_keys) != len(self.labels):
            raise MlError("row_keys length mismatch")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "Dataset":
        keys = [self.row_keys[i] for i in indices] if self.row_keys else []
        return Dataset(self.rows[indices], self.labels[indices], keys)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class _Constant:
    def __init__(self, p: float):
        self.p = float(p)

    def proba(self, X: np.ndarray) -> np.ndarray:
        return np.full(len(X), self.p)

    def to_dict(self) -> dict:
        return {"p": self.p}

    @classmethod
    def from_dict(cls, data: dict) -> "_Constant":
        return cls(data["p"])


class _Knn:
    def __init__(self, k: int, X: np.ndarray, y: np.ndarray):
        self.k = k
        self.X = X
        self.y = y

    def proba(self, X: np.ndarray) -> np.ndarray:
        k = min(self.k, len(self.y))
        out = np.empty(len(X))
        for i, q in enumerate(X):
            d2 = np.sum((self.X - q) ** 2, axis=1)
            nearest = np.argsort(d2, kind="stable")[:k]
            out[i] = self.y[nearest].mean()
        return out

    def to_dict(self) -> dict:
        return {"k": self.k, "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "_Knn":
        return cls(data["k"], np.array(data["X"], dtype=np.float64),
                   np.array(data["y"], dtype=np.float64))


class _Tree:
    def __init__(self, tree: DecisionTree):
        self.tree = tree

    def proba(self, X: np.ndarray) -> np.ndarray:
        return np.clip(self.tree.predict_value(X), 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"tree": self.tree.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "_Tree":
        return cls(DecisionTree.from_dict(data["tree"]))


def resolve_max_features(fraction: float | None, n_dims: int) -> int:
    """Dims to sample per split: round(fraction * d), or sqrt(d) when None."""
    if fraction is None:
        m = int(round(np.sqrt(n_dims)))
    else:
        m = int(round(fraction * n_dims))
    return min(n_dims, max(1, m))


def fit_forest_tree(X: np.ndarray, y: np.ndarray, *, criterion: str,
                    max_depth: int | None, min_samples_split: int,
                    max_features: int, seed: int) -> DecisionTree:
    """One bootstrap tree of a forest; the replay primitive for determinism checks.

    The tree's RNG first draws the bootstrap indices, then feeds per-split
    feature subsampling, so a tree is a pure function of (data, params, seed).
    """
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(y), len(y))
    tree = DecisionTree(criterion=criterion, max_depth=max_depth,
                        min_samples_split=min_samples_split,
                        max_features=max_features, rng=rng)
    return tree.fit(X[idx], y[idx])


class _Forest:
    def __init__(self, trees: list[DecisionTree], tree_seeds: list[int], clip: bool = True):
        self.trees = trees
        self.tree_seeds = tree_seeds
        self.clip = clip

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, params: ForestParams, seed: int,
            criterion: str = "gini", n_threads: int = 1) -> "_Forest":
        m = resolve_max_features(params.max_features, X.shape[1])
        seeds = [child_seed(seed, "tree", i) for i in range(params.n_estimators)]

        def one(tree_seed: int) -> DecisionTree:
            return fit_forest_tree(X, y, criterion=criterion, max_depth=params.max_depth,
                                   min_samples_split=params.min_samples_split,
                                   max_features=m, seed=tree_seed)

        if n_threads > 1:
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                trees = list(pool.map(one, seeds))
        else:
            trees = [one(s) for s in seeds]
        return cls(trees, seeds, clip=(criterion == "gini"))

    def proba(self, X: np.ndarray) -> np.ndarray:
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict_value(X)
        mean = total / len(self.trees)
        return np.clip(mean, 0.0, 1.0) if self.clip else mean

    def to_dict(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees],
                "tree_seeds": self.tree_seeds, "clip": self.clip}

    @classmethod
    def from_dict(cls, data: dict) -> "_Forest":
        return cls([DecisionTree.from_dict(t) for t in data["trees"]],
                   list(data["tree_seeds"]), data["clip"])


class _Boosting:
    """Stagewise log-loss boosting: regression trees on the negative gradient,
    leaf values by a single Newton step, scores accumulated from the log-odds
    of the positive base rate."""

    def __init__(self, init_score: float, learning_rate: float, trees: list[DecisionTree]):
        self.init_score = init_score
        self.learning_rate = learning_rate
        self.trees = trees

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, params: BoostingParams) -> "_Boosting":
        p0 = y.mean()
        init = float(np.log(p0 / (1.0 - p0)))
        scores = np.full(len(y), init)
        trees: list[DecisionTree] = []
        presorted = np.argsort(X, axis=0, kind="stable")
        for _ in range(params.n_estimators):
            p = sigmoid(scores)
            residual = y - p
            tree = DecisionTree(criterion="variance", max_depth=params.max_depth,
                                min_samples_split=params.min_samples_split)
            tree.fit(X, residual, presorted=presorted)
            leaves = tree.apply(X)
            hessian = p * (1.0 - p)
            num = np.bincount(leaves, weights=residual, minlength=tree.n_leaves)
            den = np.bincount(leaves, weights=hessian, minlength=tree.n_leaves)
            tree.set_leaf_values({leaf: num[leaf] / max(den[leaf], 1e-12)
                                  for leaf in range(tree.n_leaves)})
            scores = scores + params.learning_rate * tree.leaf_values()[leaves]
            trees.append(tree)
        return cls(init, params.learning_rate, trees)

    def proba(self, X: np.ndarray) -> np.ndarray:
        scores = np.full(len(X), self.init_score)
        for tree in self.trees:
            scores += self.learning_rate * tree.predict_value(X)
        return sigmoid(scores)

    def to_dict(self) -> dict:
        return {"init_score": self.init_score, "learning_rate": self.learning_rate,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, data: dict) -> "_Boosting":
        return cls(data["init_score"], data["learning_rate"],
                   [DecisionTree.from_dict(t) for t in data["trees"]])


def logistic_loss_grad(weights: np.ndarray, bias: float, X: np.ndarray,
                       y: np.ndarray, l2: float):
    """Mean log-loss + (l2/2)||w||^2 (bias unregularized) and its gradient."""
    z = X @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * weights @ weights)
    err = sigmoid(z) - y
    grad_w = X.T @ err / len(y) + l2 * weights
    grad_b = float(err.mean())
    return loss, grad_w, grad_b


class _Logistic:
    def __init__(self, weights: np.ndarray, bias: float):
        self.weights = weights
        self.bias = bias

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, params: LogisticParams) -> "_Logistic":
        """Backtracking gradient descent from zero until the gradient sup-norm
        drops below the tolerance."""
        w = np.zeros(X.shape[1])
        b = 0.0
        step = 1.0
        loss, gw, gb = logistic_loss_grad(w, b, X, y, params.l2_strength)
        for _ in range(params.max_iterations):
            gnorm2 = gw @ gw + gb * gb
            if max(np.abs(gw).max(initial=0.0), abs(gb)) <= params.tolerance:
                break
            step = min(step * 2.0, 1e6)
            while True:
                w_new = w - step * gw
                b_new = b - step * gb
                loss_new, gw_new, gb_new = logistic_loss_grad(w_new, b_new, X, y,
                                                              params.l2_strength)
                if loss_new <= loss - 1e-4 * step * gnorm2 or step < 1e-16:
                    break
                step *= 0.5
            w, b, loss, gw, gb = w_new, b_new, loss_new, gw_new, gb_new
        return cls(w, b)

    def proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(X @ self.weights + self.bias)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias}

    @classmethod
    def from_dict(cls, data: dict) -> "_Logistic":
        return cls(np.array(data["weights"], dtype=np.float64), data["bias"])


_IMPL_TYPES = {
    "constant": _Constant,
    "knn": _Knn,
    "decision_tree": _Tree,
    "random_forest": _Forest,
    "gradient_boosting": _Boosting,
    "logistic_regression": _Logistic,
}


@dataclass
class TrainedModel:
    """A fitted classifier: predict_proba in [0, 1], predict = proba >= 0.5."""

    kind: str
    params: object
    impl: object
    n_dims: int
    fingerprint: str
    seed: int
    constant: bool = False

    def _check(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.n_dims:
            raise MlError(f"row width {rows.shape[1] if rows.ndim == 2 else '?'} "
                          f"does not match model width {self.n_dims}")
        return rows

    def predict_proba(self, rows) -> np.ndarray:
        return np.clip(self.impl.proba(self._check(rows)), 0.0, 1.0)

    def predict(self, rows) -> np.ndarray:
        return (self.predict_proba(rows) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        params = {k: v for k, v in self.params.__dict__.items()} if self.params else {}
        return {
            "kind": self.kind,
            "params": params,
            "impl_type": "constant" if self.constant else self.kind,
            "impl": self.impl.to_dict(),
            "n_dims": self.n_dims,
            "fingerprint": self.fingerprint,
            "seed": self.seed,
            "constant": self.constant,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedModel":
        params_type = PARAM_TYPES[data["kind"]]
        params = params_type(**data["params"]) if data["params"] else params_type()
        impl = _IMPL_TYPES[data["impl_type"]].from_dict(data["impl"])
        return cls(kind=data["kind"], params=params, impl=impl, n_dims=data["n_dims"],
                   fingerprint=data["fingerprint"], seed=data["seed"],
                   constant=data["constant"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit(kind: str, params, dataset: Dataset, seed: int, *, n_threads: int = 1,
        fingerprint: str | None = None) -> TrainedModel:
    """Train a classifier of the given kind; deterministic in (data, params, seed)."""
    if kind not in KINDS:
        raise MlError(f"unknown model kind {kind!r}")
    if len(dataset) == 0:
        raise MlError("cannot fit on an empty dataset")
    expected = PARAM_TYPES[kind]
    if not isinstance(params, expected):
        raise MlError(f"{kind} expects {expected.__name__}, got {type(params).__name__}")
    X = dataset.rows
    y = dataset.labels.astype(np.float64)
    fp = fingerprint if fingerprint is not None else f"dims:{X.shape[1]}"

    if len(np.unique(dataset.labels)) < 2:
        return TrainedModel(kind=kind, params=params, impl=_Constant(y.mean()),
                            n_dims=X.shape[1], fingerprint=fp, seed=seed, constant=True)

    if kind == "knn":
        impl = _Knn(params.k, X.copy(), y.copy())
    elif kind == "decision_tree":
        tree = DecisionTree(criterion="gini", max_depth=params.max_depth,
                            min_samples_split=params.min_samples_split)
        impl = _Tree(tree.fit(X, y))
    elif kind == "random_forest":
        impl = _Forest.fit(X, y, params, seed, criterion="gini", n_threads=n_threads)
    elif kind == "gradient_boosting":
        impl = _Boosting.fit(X, y, params)
    else:
        impl = _Logistic.fit(X, y, params)
    return TrainedModel(kind=kind, params=params, impl=impl, n_dims=X.shape[1],
                        fingerprint=fp, seed=seed)


@dataclass
class RegressionForest:
    """Bagged variance-reduction trees with mean leaves (quality regressor)."""

    forest: _Forest
    n_dims: int
    seed: int

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, *, n_estimators: int = 200,
            max_depth: int | None = None, min_samples_split: int = 2,
            max_features: float | None = 1.0, seed: int = 0,
            n_threads: int = 1) -> "RegressionForest":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if len(X) == 0:
            raise MlError("cannot fit on an empty dataset")
        params = ForestParams(n_estimators=n_estimators, max_depth=max_depth,
                              min_samples_split=min_samples_split, max_features=max_features)
        forest = _Forest.fit(X, y, params, seed, criterion="variance", n_threads=n_threads)
        return cls(forest, X.shape[1], seed)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.n_dims:
            raise MlError("row width mismatch")
        return self.forest.proba(X)

    def to_dict(self) -> dict:
        return {"forest": self.forest.to_dict(), "n_dims": self.n_dims, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "RegressionForest":
        return cls(_Forest.from_dict(data["forest"]), data["n_dims"], data["seed"])
