"""Principal component analysis via truncated eigendecomposition.

Two routes share one contract: when n_dims <= n_samples the d x d covariance
matrix is decomposed directly; otherwise the n x n Gram matrix of the centered
rows is decomposed and the components recovered as X_c^T u / s, so the cost is
O(n^2 d) and never O(d^3). Rows may be a dense ndarray or a scipy sparse
matrix (sparse input always takes the Gram route, with the centering folded
into the Gram algebra rather than densifying).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .metrics import MlError


@dataclass
class PcaModel:
    """Fitted PCA: mean vector, orthonormal components (k x d), variances."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, rows) -> np.ndarray:
        if sparse.issparse(rows):
            proj = np.asarray(rows @ self.components.T)
        else:
            proj = np.asarray(rows, dtype=np.float64) @ self.components.T
        return proj - self.mean @ self.components.T

    def inverse_transform(self, projected: np.ndarray) -> np.ndarray:
        return np.asarray(projected, dtype=np.float64) @ self.components + self.mean

    def truncated(self, k: int) -> "PcaModel":
        """View keeping only the leading k components."""
        if not 1 <= k <= self.n_components:
            raise MlError(f"cannot truncate {self.n_components} components to {k}")
        return PcaModel(self.mean, self.components[:k], self.explained_variance[:k])

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PcaModel":
        return cls(
            mean=np.array(data["mean"], dtype=np.float64),
            components=np.array(data["components"], dtype=np.float64),
            explained_variance=np.array(data["explained_variance"], dtype=np.float64),
        )


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: the max-|loading| entry of each row is positive."""
    for row in components:
        pivot = int(np.argmax(np.abs(row)))
        if row[pivot] < 0:
            row *= -1.0
    return components


def _complete_basis(components: np.ndarray, start: int) -> None:
    """Fill rows [start:] with a deterministic orthonormal completion.

    Used when the data rank is below the requested k (duplicate rows are
    common in phylogeny vectors); the filled directions carry zero variance.
    """
    k, d = components.shape
    have = start
    for j in range(d):
        if have >= k:
            return
        cand = np.zeros(d)
        cand[j] = 1.0
        cand -= components[:have].T @ (components[:have] @ cand)
        norm = np.linalg.norm(cand)
        if norm > 1e-6:
            components[have] = cand / norm
            have += 1
    if have < k:
        raise MlError("could not complete an orthonormal basis")


def fit_pca(rows, k: int) -> PcaModel:
    """Top-k principal components of the centered rows.

    Explained variances use the sample convention (divide by n-1) and are
    returned non-increasing; component signs follow a fixed convention so
    repeated fits are identical.
    """
    is_sparse = sparse.issparse(rows)
    if not is_sparse:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise MlError("rows must be 2-dimensional")
        if not np.all(np.isfinite(rows)):
            raise MlError("rows contain NaN/Inf")
    n, d = rows.shape
    if n == 0:
        raise MlError("cannot fit PCA on zero rows")
    if not 1 <= k <= min(n, d):
        raise MlError(f"k={k} outside [1, min(n={n}, d={d})]")
    denom = max(n - 1, 1)

    if not is_sparse and d <= n:
        mean = rows.mean(axis=0)
        centered = rows - mean
        cov = centered.T @ centered / denom
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals, kind="stable")[::-1][:k]
        components = np.ascontiguousarray(evecs[:, order].T)
        variance = np.maximum(evals[order], 0.0)
        return PcaModel(mean, _fix_signs(components), variance)

    # Gram route (d > n, or sparse input of any shape with k <= n).
    if is_sparse:
        rows = rows.tocsr().astype(np.float64)
        mean = np.asarray(rows.mean(axis=0)).ravel()
        a = np.asarray(rows @ mean).ravel()
        gram = np.asarray((rows @ rows.T).todense(), dtype=np.float64)
        gram -= a[:, None]
        gram -= a[None, :]
        gram += float(mean @ mean)
    else:
        mean = rows.mean(axis=0)
        centered = rows - mean
        gram = centered @ centered.T
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals, kind="stable")[::-1][:k]
    evals = np.maximum(evals[order], 0.0)
    tol = max(n, d) * np.finfo(np.float64).eps * (evals[0] if evals.size else 0.0)
    components = np.zeros((k, d))
    rank = 0
    for i in range(k):
        if evals[i] <= tol:
            break
        u = evecs[:, order[i]]
        if is_sparse:
            v = np.asarray(rows.T @ u).ravel() - mean * float(u.sum())
        else:
            v = centered.T @ u
        components[i] = v / np.sqrt(evals[i])
        rank += 1
    if rank < k:
        evals[rank:] = 0.0
        _complete_basis(components, rank)
    variance = evals / denom
    return PcaModel(mean, _fix_signs(components), variance)
