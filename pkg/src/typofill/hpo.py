"""Joint hyperparameter and feature-group search over cross-validated F1.

Two samplers share one study loop: ``random`` draws every dim uniformly;
``tpe_like`` runs 5 random warm-up trials and then samples each dim from a
density favoring the top-25% completed trials (Laplace-smoothed counts for
boolean/categorical dims, a truncated Gaussian KDE for numeric dims). A trial
whose objective raises is recorded as failed with score -inf and the study
continues. Serial studies are deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .featurize import GROUP_FLAGS
from .mlcore import child_seed

WARMUP_TRIALS = 5
TOP_FRACTION = 0.25


class HpoError(ValueError):
    pass


@dataclass(frozen=True)
class BoolDim:
    name: str

    def sample(self, rng: np.random.Generator):
        return bool(rng.integers(0, 2))

    def contains(self, value) -> bool:
        return isinstance(value, (bool, np.bool_))

    def describe(self) -> dict:
        return {"name": self.name, "type": "bool"}


@dataclass(frozen=True)
class IntDim:
    name: str
    low: int
    high: int
    log: bool = False

    def __post_init__(self):
        if self.low > self.high:
            raise HpoError(f"{self.name}: empty range [{self.low}, {self.high}]")
        if self.log and self.low < 1:
            raise HpoError(f"{self.name}: log-scale range must start at >= 1")

    def sample(self, rng: np.random.Generator):
        if self.log:
            x = rng.uniform(math.log(self.low), math.log(self.high + 1))
            return int(min(self.high, max(self.low, math.floor(math.exp(x)))))
        return int(rng.integers(self.low, self.high + 1))

    def contains(self, value) -> bool:
        return isinstance(value, (int, np.integer)) and self.low <= value <= self.high

    def describe(self) -> dict:
        return {"name": self.name, "type": "int", "low": self.low,
                "high": self.high, "log": self.log}


@dataclass(frozen=True)
class FloatDim:
    name: str
    low: float
    high: float
    log: bool = False

    def __post_init__(self):
        if self.low > self.high:
            raise HpoError(f"{self.name}: empty range [{self.low}, {self.high}]")
        if self.log and self.low <= 0:
            raise HpoError(f"{self.name}: log-scale range must be positive")

    def sample(self, rng: np.random.Generator):
        if self.log:
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        return float(rng.uniform(self.low, self.high))

    def contains(self, value) -> bool:
        return isinstance(value, (float, int, np.floating, np.integer)) \
            and self.low <= value <= self.high

    def describe(self) -> dict:
        return {"name": self.name, "type": "float", "low": self.low,
                "high": self.high, "log": self.log}


@dataclass(frozen=True)
class CatDim:
    name: str
    choices: tuple

    def __post_init__(self):
        if not self.choices:
            raise HpoError(f"{self.name}: no choices")

    def sample(self, rng: np.random.Generator):
        return self.choices[int(rng.integers(0, len(self.choices)))]

    def contains(self, value) -> bool:
        return value in self.choices

    def describe(self) -> dict:
        return {"name": self.name, "type": "cat", "choices": list(self.choices)}


Dim = BoolDim | IntDim | FloatDim | CatDim


@dataclass
class SearchSpace:
    dims: tuple[Dim, ...]

    def __post_init__(self):
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise HpoError("duplicate dim names")

    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def sample(self, rng: np.random.Generator) -> dict:
        return {d.name: d.sample(rng) for d in self.dims}

    def contains(self, assignment: dict) -> bool:
        if set(assignment) != set(self.names()):
            return False
        return all(d.contains(assignment[d.name]) for d in self.dims)

    def describe(self) -> list[dict]:
        return [d.describe() for d in self.dims]


@dataclass
class Trial:
    index: int
    assignment: dict
    score: float
    fold_scores: list[float] | None
    seed: int
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {"index": self.index, "assignment": self.assignment,
                "score": self.score if not self.failed else None,
                "fold_scores": self.fold_scores, "seed": self.seed,
                "error": self.error}


@dataclass
class StudyResult:
    trials: list[Trial]
    space: SearchSpace
    seed: int
    sampler: str

    @property
    def best(self) -> Trial:
        completed = [t for t in self.trials if not t.failed]
        if not completed:
            raise HpoError("all trials failed")
        return max(completed, key=lambda t: (t.score, -t.index))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "sampler": self.sampler,
            "space": self.space.describe(),
            "trials": [t.to_dict() for t in self.trials],
            "best_index": self.best.index,
            "best_score": self.best.score,
            "best_assignment": self.best.assignment,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _kde_sample(values: list[float], low: float, high: float,
                rng: np.random.Generator) -> float:
    """Draw from a Gaussian KDE over the good values, truncated to the range."""
    n = len(values)
    if n == 1:
        bw = (high - low) / 20.0 or 1.0
    else:
        sd = float(np.std(values, ddof=1))
        bw = max(1.06 * sd * n ** -0.2, (high - low) / 20.0, 1e-12)
    center = values[int(rng.integers(0, n))]
    return float(np.clip(center + rng.normal() * bw, low, high))


def _sample_favoring(dim: Dim, good: list, rng: np.random.Generator):
    if isinstance(dim, BoolDim):
        p_true = (sum(1 for v in good if v) + 1.0) / (len(good) + 2.0)
        return bool(rng.random() < p_true)
    if isinstance(dim, CatDim):
        counts = np.array([sum(1 for v in good if v == c) for c in dim.choices],
                          dtype=np.float64)
        probs = (counts + 1.0) / (counts.sum() + len(dim.choices))
        return dim.choices[int(rng.choice(len(dim.choices), p=probs))]
    if isinstance(dim, IntDim):
        if dim.log:
            x = _kde_sample([math.log(v) for v in good],
                            math.log(dim.low), math.log(dim.high), rng)
            return int(min(dim.high, max(dim.low, round(math.exp(x)))))
        x = _kde_sample([float(v) for v in good], dim.low, dim.high, rng)
        return int(min(dim.high, max(dim.low, round(x))))
    if dim.log:
        x = _kde_sample([math.log(v) for v in good],
                        math.log(dim.low), math.log(dim.high), rng)
        return float(math.exp(x))
    return _kde_sample([float(v) for v in good], dim.low, dim.high, rng)


def run_study(space: SearchSpace, objective, n_trials: int, seed: int,
              sampler: str = "random") -> StudyResult:
    """Evaluate ``objective(assignment, trial_seed)`` for n_trials assignments.

    The objective returns a score, or a (score, per-fold scores) pair. Results
    are deterministic given the seed.
    """
    if n_trials < 1:
        raise HpoError("n_trials must be >= 1")
    if sampler not in ("random", "tpe_like"):
        raise HpoError(f"unknown sampler {sampler!r}")
    rng = np.random.default_rng(child_seed(seed, "study", sampler))
    trials: list[Trial] = []
    for index in range(n_trials):
        completed = [t for t in trials if not t.failed]
        if sampler == "tpe_like" and len(completed) >= WARMUP_TRIALS:
            ranked = sorted(completed, key=lambda t: (-t.score, t.index))
            good = ranked[:max(1, math.ceil(TOP_FRACTION * len(ranked)))]
            assignment = {d.name: _sample_favoring(d, [t.assignment[d.name] for t in good], rng)
                          for d in space.dims}
        else:
            assignment = space.sample(rng)
        trial_seed = child_seed(seed, "trial", index)
        try:
            result = objective(assignment, trial_seed)
        except Exception as err:  # noqa: BLE001 - a bad config must not kill the study
            trials.append(Trial(index, assignment, float("-inf"), None, trial_seed,
                                error=f"{type(err).__name__}: {err}"))
            continue
        if isinstance(result, tuple):
            score, fold_scores = result
            fold_scores = list(fold_scores)
        else:
            score, fold_scores = float(result), None
        trials.append(Trial(index, assignment, float(score), fold_scores, trial_seed))
    return StudyResult(trials, space, seed, sampler)


def default_space(task: str) -> SearchSpace:
    """Search space presets.

    ``presence``: gradient-boosting hyperparameters plus the phylogeny
    component count. ``typology``: the 13 feature-group booleans, both PCA
    component counts, and random-forest hyperparameters.
    """
    if task == "presence":
        return SearchSpace((
            IntDim("max_depth", 3, 25),
            IntDim("min_samples_split", 2, 20),
            FloatDim("learning_rate", 0.01, 0.3, log=True),
            IntDim("n_estimators", 50, 600),
            IntDim("phylo_n_comp", 2, 128),
        ))
    if task == "typology":
        return SearchSpace(tuple(BoolDim(name) for name in GROUP_FLAGS) + (
            IntDim("phylo_n_comp", 2, 128),
            IntDim("ngram_n_comp", 2, 512),
            IntDim("n_estimators", 25, 200),
            IntDim("max_depth", 3, 25),
            IntDim("min_samples_split", 2, 20),
        ))
    raise HpoError(f"unknown task {task!r}")


def presence_space_for(kind: str) -> SearchSpace:
    """Per-kind presence space used when the model zoo is searched."""
    phylo = IntDim("phylo_n_comp", 2, 128)
    if kind == "gradient_boosting":
        return default_space("presence")
    if kind == "knn":
        return SearchSpace((IntDim("k", 1, 25), phylo))
    if kind == "logistic_regression":
        return SearchSpace((FloatDim("l2_strength", 1e-4, 10.0, log=True), phylo))
    if kind == "decision_tree":
        return SearchSpace((IntDim("max_depth", 3, 25),
                            IntDim("min_samples_split", 2, 20), phylo))
    if kind == "random_forest":
        return SearchSpace((IntDim("n_estimators", 25, 200), IntDim("max_depth", 3, 25),
                            IntDim("min_samples_split", 2, 20), phylo))
    raise HpoError(f"unknown model kind {kind!r}")
