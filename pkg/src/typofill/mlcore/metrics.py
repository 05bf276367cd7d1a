"""Positive-class F1 and seeded k-fold splitting."""

from __future__ import annotations

import numpy as np

from .seeding import child_rng


class MlError(ValueError):
    """Contract violation in the ML core (bad shapes, empty data, ...)."""


def f1_score(predictions, labels) -> float:
    """F1 of the positive class as a percentage in [0, 100].

    Degenerate cases: 100.0 when there are no positives and none were
    predicted; 0.0 when precision and recall are both zero.
    """
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.shape != lab.shape:
        raise MlError(f"length mismatch: {pred.shape} vs {lab.shape}")
    tp = int(np.sum((pred == 1) & (lab == 1)))
    fp = int(np.sum((pred == 1) & (lab == 0)))
    fn = int(np.sum((pred == 0) & (lab == 1)))
    if tp == 0 and fp == 0 and fn == 0:
        return 100.0
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def k_fold_split(n_samples: int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Partition a seeded permutation of range(n_samples) into k near-equal folds.

    The first ``n_samples % k`` folds receive one extra element. Returns
    (train_indices, test_indices) pairs, both sorted ascending; deterministic
    for a given seed.
    """
    if k < 2:
        raise MlError(f"k must be >= 2, got {k}")
    if k > n_samples:
        raise MlError(f"k={k} exceeds n_samples={n_samples}")
    perm = child_rng(seed, "kfold", n_samples, k).permutation(n_samples)
    base, extra = divmod(n_samples, k)
    folds = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        test = np.sort(perm[start:start + size])
        mask = np.ones(n_samples, dtype=bool)
        mask[test] = False
        folds.append((np.nonzero(mask)[0], test))
        start += size
    return folds
