"""Feature-presence classification: which database cells are likely missing.

A binary classifier is trained on present-vs-missing over every (language,
target-feature) cell, using the same feature groups as the typology models
minus the text-based block. Present cells are then ranked by the model's
missingness confidence; the global top fraction is flagged and per-feature
missing ratios (flagged / present) are reported.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import MISSING, LanguageMeta, PhylogenyVector, TypologyMatrix
from .featurize import EncoderContext, FeatureConfig, FeatureEncoders
from .hpo import StudyResult, presence_space_for, run_study
from .mlcore import (
    BoostingParams,
    Dataset,
    ForestParams,
    KnnParams,
    LogisticParams,
    TrainedModel,
    TreeParams,
    child_seed,
    f1_score,
    fit,
    k_fold_split,
)

RATIO_BIN_STEP = 0.05


class PresenceError(ValueError):
    pass


@dataclass
class PresenceDataset:
    """Every (language, feature) cell over a language subset; label 1 = present."""

    keys: list[tuple[str, str]]
    labels: np.ndarray
    languages: list[str]
    features: list[str]
    config: FeatureConfig

    @property
    def features_per_language(self) -> int:
        return len(self.features)

    def to_dataset(self, encoders: FeatureEncoders) -> Dataset:
        return Dataset(encoders.matrix(self.keys), self.labels, self.keys)


def build_presence_dataset(matrix: TypologyMatrix, meta: list[LanguageMeta],
                           config: FeatureConfig,
                           language_sample: tuple[int, int] | None = None,
                           ) -> PresenceDataset:
    """One labelled row per (language, target feature) cell.

    ``language_sample`` = (size, seed) draws a seeded language subset. The
    text-based n-gram block is not admitted for presence models.
    """
    if config.use_pos_ngrams:
        raise PresenceError("presence models exclude text-based features "
                            "(use_pos_ngrams must be false)")
    languages = list(matrix.languages)
    if language_sample is not None:
        size, seed = language_sample
        if size > len(languages):
            raise PresenceError(f"sample size {size} exceeds {len(languages)} languages")
        rng = np.random.default_rng(child_seed(seed, "presence-sample"))
        chosen = rng.choice(len(languages), size=size, replace=False)
        languages = sorted(languages[i] for i in chosen)
    features = matrix.target_features
    keys: list[tuple[str, str]] = []
    labels: list[int] = []
    for code in languages:
        i = matrix.lang_index[code]
        for feat in features:
            j = matrix.feat_index[feat]
            keys.append((code, feat))
            labels.append(0 if matrix.values[i, j] == MISSING else 1)
    return PresenceDataset(keys, np.array(labels, dtype=np.int64),
                           languages, features, config)


@dataclass
class PresenceSettings:
    kinds: tuple[str, ...] = ("gradient_boosting",)
    n_trials: int = 10
    folds: int = 5
    seed: int = 0
    sampler: str = "tpe_like"
    threads: int = 1
    phylo_cap: int = 128
    refit_on_all: bool = True


def params_from_assignment(kind: str, assignment: dict):
    """Model hyperparameters carried by a search assignment."""
    if kind == "gradient_boosting":
        return BoostingParams(n_estimators=assignment["n_estimators"],
                              learning_rate=assignment["learning_rate"],
                              max_depth=assignment["max_depth"],
                              min_samples_split=assignment["min_samples_split"])
    if kind == "knn":
        return KnnParams(k=assignment["k"])
    if kind == "logistic_regression":
        return LogisticParams(l2_strength=assignment["l2_strength"])
    if kind == "decision_tree":
        return TreeParams(max_depth=assignment["max_depth"],
                          min_samples_split=assignment["min_samples_split"])
    if kind == "random_forest":
        return ForestParams(n_estimators=assignment["n_estimators"],
                            max_depth=assignment["max_depth"],
                            min_samples_split=assignment["min_samples_split"])
    raise PresenceError(f"unknown model kind {kind!r}")


@dataclass
class PresenceModel:
    """Trained presence classifier bundled with its fitted encoders."""

    kind: str
    config: FeatureConfig
    context: EncoderContext
    model: TrainedModel
    studies: dict[str, StudyResult] = field(default_factory=dict)

    def score_missing(self, keys: list[tuple[str, str]]) -> np.ndarray:
        encoders = FeatureEncoders(self.context, self.config)
        return 1.0 - self.model.predict_proba(encoders.matrix(keys))

    def save(self, path: str | Path) -> None:
        payload = {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "context": self.context.to_dict(),
            "model": self.model.to_dict(),
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path: str | Path) -> "PresenceModel":
        payload = json.loads(Path(path).read_text())
        return cls(kind=payload["kind"],
                   config=FeatureConfig(**payload["config"]),
                   context=EncoderContext.from_dict(payload["context"]),
                   model=TrainedModel.from_dict(payload["model"]))


def train_presence(matrix: TypologyMatrix, meta: list[LanguageMeta],
                   phylo: dict[str, PhylogenyVector] | None,
                   dataset: PresenceDataset,
                   settings: PresenceSettings) -> tuple[PresenceModel, dict[str, StudyResult]]:
    """HPO per candidate kind on the dataset, then refit the winner on all rows."""
    if len(np.unique(dataset.labels)) < 2:
        raise PresenceError("presence dataset has a single label")
    folds = k_fold_split(len(dataset.labels), settings.folds,
                         child_seed(settings.seed, "presence-folds"))
    features = [f for f in matrix.features]
    context_cache: dict[int, EncoderContext] = {}

    def fold_context(fold_idx: int, train_idx) -> EncoderContext:
        ctx = context_cache.get(fold_idx)
        if ctx is None:
            train_langs = {dataset.keys[i][0] for i in train_idx}
            ctx = EncoderContext.fit(train_langs, meta, features, phylo=phylo,
                                     phylo_cap=settings.phylo_cap)
            context_cache[fold_idx] = ctx
        return ctx

    def make_objective(kind: str):
        def objective(assignment: dict, trial_seed: int):
            config = replace(dataset.config, phylo_n_comp=assignment.get(
                "phylo_n_comp", dataset.config.phylo_n_comp))
            params = params_from_assignment(kind, assignment)
            scores = []
            for fold_idx, (train_idx, test_idx) in enumerate(folds):
                encoders = FeatureEncoders(fold_context(fold_idx, train_idx), config)
                train = Dataset(encoders.matrix([dataset.keys[i] for i in train_idx]),
                                dataset.labels[train_idx])
                model = fit(kind, params, train,
                            child_seed(trial_seed, "fold", fold_idx),
                            n_threads=settings.threads)
                test_rows = encoders.matrix([dataset.keys[i] for i in test_idx])
                scores.append(f1_score(model.predict(test_rows), dataset.labels[test_idx]))
            return float(np.mean(scores)), scores
        return objective

    studies: dict[str, StudyResult] = {}
    for kind in settings.kinds:
        studies[kind] = run_study(presence_space_for(kind), make_objective(kind),
                                  settings.n_trials,
                                  child_seed(settings.seed, "presence", kind),
                                  sampler=settings.sampler)
    best_kind = max(settings.kinds,
                    key=lambda k: (studies[k].best.score, -settings.kinds.index(k)))
    best = studies[best_kind].best

    refit = dataset
    if settings.refit_on_all and set(dataset.languages) != set(matrix.languages):
        refit = build_presence_dataset(matrix, meta, dataset.config)
    config = replace(dataset.config, phylo_n_comp=best.assignment.get(
        "phylo_n_comp", dataset.config.phylo_n_comp))
    context = EncoderContext.fit(refit.languages, meta, features, phylo=phylo,
                                 phylo_cap=settings.phylo_cap)
    encoders = FeatureEncoders(context, config)
    model = fit(best_kind, params_from_assignment(best_kind, best.assignment),
                refit.to_dataset(encoders), child_seed(settings.seed, "presence-refit"),
                n_threads=settings.threads, fingerprint=encoders.schema.fingerprint())
    return PresenceModel(best_kind, config, context, model, studies), studies


@dataclass(frozen=True)
class RankedCell:
    code: str
    feat_id: str
    p_missing: float
    flagged: bool


@dataclass
class MissingRanking:
    """Present cells ordered by descending missingness score; top share flagged."""

    cells: list[RankedCell]
    fraction: float

    @property
    def flagged_count(self) -> int:
        return sum(1 for c in self.cells if c.flagged)

    def flagged_cells(self, feat_id: str | None = None) -> list[RankedCell]:
        return [c for c in self.cells
                if c.flagged and (feat_id is None or c.feat_id == feat_id)]

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iso639_3", "feat_id", "p_missing", "flagged"])
            for cell in self.cells:
                writer.writerow([cell.code, cell.feat_id, f"{cell.p_missing:.6f}",
                                 int(cell.flagged)])

    @classmethod
    def load(cls, path: str | Path, fraction: float = 0.2) -> "MissingRanking":
        cells = []
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                cells.append(RankedCell(row[0], row[1], float(row[2]), row[3] == "1"))
        return cls(cells, fraction)


def rank_missing(bundle: PresenceModel, matrix: TypologyMatrix,
                 fraction: float = 0.2) -> MissingRanking:
    """Score every present target cell and flag the global top ceil(fraction*N).

    Ties are broken by (feat_id, language) lexicographic order so the flagged
    set is deterministic.
    """
    if not 0.0 < fraction <= 1.0:
        raise PresenceError("fraction must be in (0, 1]")
    keys = [(code, feat) for feat in matrix.target_features
            for code in matrix.present_languages(feat)]
    if not keys:
        return MissingRanking([], fraction)
    scores = bundle.score_missing(keys)
    order = sorted(range(len(keys)),
                   key=lambda i: (-scores[i], keys[i][1], keys[i][0]))
    n_flag = math.ceil(fraction * len(keys))
    cells = [RankedCell(keys[i][0], keys[i][1], float(scores[i]), rank < n_flag)
             for rank, i in enumerate(order)]
    return MissingRanking(cells, fraction)


@dataclass(frozen=True)
class MissingRatioRow:
    feat_id: str
    flagged: int
    present: int

    @property
    def ratio(self) -> float:
        return self.flagged / self.present


@dataclass
class MissingReport:
    """Per-feature flagged/present counts; features with zero present are absent."""

    rows: list[MissingRatioRow]

    def ratios(self) -> dict[str, float]:
        return {r.feat_id: r.ratio for r in self.rows}

    def histogram(self) -> tuple[list[float], list[int]]:
        """Counts over ratio bins [0, 0.05), ..., [0.95, 1.0]; edges returned too."""
        n_bins = round(1.0 / RATIO_BIN_STEP)
        edges = [i * RATIO_BIN_STEP for i in range(n_bins + 1)]
        counts = [0] * n_bins
        for row in self.rows:
            idx = min(int(row.ratio / RATIO_BIN_STEP), n_bins - 1)
            counts[idx] += 1
        return edges, counts

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feat_id", "flagged", "present", "ratio"])
            for row in self.rows:
                writer.writerow([row.feat_id, row.flagged, row.present,
                                 f"{row.ratio:.6f}"])

    def save_histogram(self, path: str | Path) -> None:
        edges, counts = self.histogram()
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_low", "bin_high", "count"])
            for i, count in enumerate(counts):
                writer.writerow([f"{edges[i]:.2f}", f"{edges[i + 1]:.2f}", count])

    @classmethod
    def load(cls, path: str | Path) -> "MissingReport":
        rows = []
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                rows.append(MissingRatioRow(row[0], int(row[1]), int(row[2])))
        return cls(rows)


def missing_ratio(ranking: MissingRanking, matrix: TypologyMatrix) -> MissingReport:
    """flagged / present per target feature."""
    flagged: dict[str, int] = {}
    for cell in ranking.cells:
        if cell.flagged:
            flagged[cell.feat_id] = flagged.get(cell.feat_id, 0) + 1
    rows = []
    for feat in matrix.target_features:
        present = len(matrix.present_languages(feat))
        if present == 0:
            continue
        rows.append(MissingRatioRow(feat, flagged.get(feat, 0), present))
    return MissingReport(rows)
