"""Per-feature typology classifiers, the KNN baseline, evaluation, imputation.

One classifier is trained per target feature over the languages where that
feature is present; classifiers share no fitted state. The baseline imputes
from typological overlap alone: the distance between two languages is the
mismatch rate over cells observed in both, excluding the target feature.

Two evaluation protocols are provided: seeded k-fold over present cells, and
the harder "likely missing" holdout where the test set is the globally
top-ranked present cells from the presence module.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import MISSING, LanguageMeta, PhylogenyVector, TypologyMatrix
from .featurize import (
    GROUP_FLAGS,
    EncoderContext,
    FeatureConfig,
    FeatureEncoders,
    NGramCounts,
)
from .hpo import HpoError, SearchSpace, StudyResult, default_space, run_study
from .mlcore import Dataset, child_seed, f1_score, fit, k_fold_split
from .presence import MissingRanking, params_from_assignment

logger = logging.getLogger(__name__)


class TypologyError(ValueError):
    pass


class FeatureSkipped(Exception):
    """A target feature was skipped (too few rows or a single class)."""

    def __init__(self, feat_id: str, reason: str):
        self.feat_id = feat_id
        self.reason = reason
        super().__init__(f"{feat_id}: {reason}")


@dataclass(frozen=True)
class KnnBaselineConfig:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise TypologyError("k must be >= 1")


@dataclass(frozen=True)
class KnnPrediction:
    value: int
    proba: float
    fallback: bool = False


def knn_baseline(matrix: TypologyMatrix, feat_id: str, target_langs: list[str],
                 config: KnnBaselineConfig = KnnBaselineConfig(),
                 ) -> dict[str, KnnPrediction]:
    """Majority vote of the k typologically nearest languages with the feature.

    Distance = 1 - (matching co-observed cells / co-observed count), over all
    features except the target; ties in the vote go to the feature's global
    majority. A language sharing no observed cell with any candidate falls
    back to the global majority.
    """
    j = matrix.feat_index[feat_id]
    values = matrix.values
    col = values[:, j]
    candidates = np.nonzero(col != MISSING)[0]
    if candidates.size == 0:
        raise TypologyError(f"{feat_id}: zero present cells")
    cand_labels = col[candidates].astype(np.int64)
    n_pos = int((cand_labels == 1).sum())
    global_majority = 1 if n_pos >= cand_labels.size - n_pos else 0
    global_rate = n_pos / cand_labels.size

    observed = values != MISSING
    observed = observed.copy()
    observed[:, j] = False
    cand_obs = observed[candidates]
    cand_vals = values[candidates]
    cand_codes = [matrix.languages[i] for i in candidates]

    out: dict[str, KnnPrediction] = {}
    for code in target_langs:
        t = matrix.lang_index[code]
        co = cand_obs & observed[t]
        co_counts = co.sum(axis=1)
        matches = ((cand_vals == values[t]) & co).sum(axis=1)
        valid = (co_counts > 0) & (candidates != t)
        if not valid.any():
            out[code] = KnnPrediction(global_majority, global_rate, fallback=True)
            continue
        idx = np.nonzero(valid)[0]
        dist = 1.0 - matches[idx] / co_counts[idx]
        order = sorted(range(len(idx)), key=lambda r: (dist[r], cand_codes[idx[r]]))
        k = min(config.k, len(order))
        votes = cand_labels[idx[[order[r] for r in range(k)]]]
        ones = int((votes == 1).sum())
        if ones * 2 > k:
            value = 1
        elif ones * 2 < k:
            value = 0
        else:
            value = global_majority
        out[code] = KnnPrediction(value, ones / k)
    return out


@dataclass
class TypologySettings:
    model_kind: str = "random_forest"
    n_trials: int = 30
    folds: int = 10
    seed: int = 0
    sampler: str = "tpe_like"
    hpo_mode: str = "outer"  # or "nested"
    knn: KnnBaselineConfig = field(default_factory=KnnBaselineConfig)
    threads: int = 1
    phylo_cap: int = 128
    ngram_cap: int = 512
    space: SearchSpace | None = None

    def search_space(self) -> SearchSpace:
        return self.space if self.space is not None else default_space("typology")


def _feature_rows(matrix: TypologyMatrix, feat_id: str) -> tuple[list[str], np.ndarray]:
    j = matrix.feat_index[feat_id]
    langs = matrix.present_languages(feat_id)
    labels = np.array([matrix.values[matrix.lang_index[c], j] for c in langs],
                      dtype=np.int64)
    return langs, labels


def _check_trainable(feat_id: str, labels: np.ndarray, folds: int) -> None:
    if len(labels) < 2 * folds:
        raise FeatureSkipped(feat_id, f"only {len(labels)} present cells "
                                      f"(< {2 * folds} for {folds}-fold)")
    if len(np.unique(labels)) < 2:
        raise FeatureSkipped(feat_id, "single observed class")


class _FeatureContexts:
    """Per-(feature, split) encoder contexts, fitted once and reused across trials."""

    def __init__(self, meta, features, phylo, ngrams, settings: TypologySettings):
        self.meta = meta
        self.features = features
        self.phylo = phylo
        self.ngrams = ngrams
        self.settings = settings
        self._cache: dict[tuple, EncoderContext] = {}

    def get(self, key: tuple, train_langs) -> EncoderContext:
        ctx = self._cache.get(key)
        if ctx is None:
            ctx = EncoderContext.fit(train_langs, self.meta, self.features,
                                     phylo=self.phylo, ngrams=self.ngrams,
                                     phylo_cap=self.settings.phylo_cap,
                                     ngram_cap=self.settings.ngram_cap)
            self._cache[key] = ctx
        return ctx


def _fit_eval(contexts: _FeatureContexts, ctx_key: tuple, settings: TypologySettings,
              assignment: dict, train_langs: list[str], train_labels: np.ndarray,
              test_langs: list[str], feat_id: str, seed: int):
    """Fit one configured model on the train split, return test predictions."""
    config = FeatureConfig.from_assignment(assignment)
    params = params_from_assignment(settings.model_kind, assignment)
    ctx = contexts.get(ctx_key, train_langs)
    encoders = FeatureEncoders(ctx, config)
    train = Dataset(encoders.matrix([(c, feat_id) for c in train_langs]), train_labels)
    model = fit(settings.model_kind, params, train, seed, n_threads=settings.threads)
    return model.predict(encoders.matrix([(c, feat_id) for c in test_langs]))


def _study_for_feature(matrix: TypologyMatrix, contexts: _FeatureContexts,
                       feat_id: str, langs: list[str], labels: np.ndarray,
                       settings: TypologySettings, seed_path: tuple) -> StudyResult:
    folds = k_fold_split(len(langs), settings.folds,
                         child_seed(settings.seed, feat_id, *seed_path, "study-folds"))

    def objective(assignment: dict, trial_seed: int):
        scores = []
        for fold_idx, (train_idx, test_idx) in enumerate(folds):
            preds = _fit_eval(
                contexts, (feat_id, *seed_path, fold_idx), settings, assignment,
                [langs[i] for i in train_idx], labels[train_idx],
                [langs[i] for i in test_idx], feat_id,
                child_seed(trial_seed, "fold", fold_idx))
            scores.append(f1_score(preds, labels[test_idx]))
        return float(np.mean(scores)), scores

    return run_study(settings.search_space(), objective, settings.n_trials,
                     child_seed(settings.seed, feat_id, *seed_path, "study"),
                     sampler=settings.sampler)


@dataclass
class FeatureModel:
    """One target feature's refit classifier with its encoders."""

    feat_id: str
    config: FeatureConfig
    assignment: dict
    context: EncoderContext
    model: object

    def predict(self, langs: list[str]) -> tuple[np.ndarray, np.ndarray]:
        encoders = FeatureEncoders(self.context, self.config)
        rows = encoders.matrix([(c, self.feat_id) for c in langs])
        proba = self.model.predict_proba(rows)
        return (proba >= 0.5).astype(np.int64), proba


def train_feature_classifier(matrix: TypologyMatrix, meta: list[LanguageMeta],
                             phylo: dict[str, PhylogenyVector] | None,
                             ngrams: NGramCounts | None, feat_id: str,
                             settings: TypologySettings,
                             ) -> tuple[FeatureModel, StudyResult]:
    """Search configs for one feature, then refit the best on all present rows."""
    if feat_id not in matrix.feat_index:
        raise TypologyError(f"unknown feature {feat_id!r}")
    langs, labels = _feature_rows(matrix, feat_id)
    _check_trainable(feat_id, labels, settings.folds)
    contexts = _FeatureContexts(meta, matrix.features, phylo, ngrams, settings)
    study = _study_for_feature(matrix, contexts, feat_id, langs, labels,
                               settings, seed_path=("train",))
    try:
        best = study.best
    except HpoError:
        raise FeatureSkipped(feat_id, "all search trials failed") from None
    config = FeatureConfig.from_assignment(best.assignment)
    params = params_from_assignment(settings.model_kind, best.assignment)
    context = EncoderContext.fit(langs, meta, matrix.features, phylo=phylo,
                                 ngrams=ngrams, phylo_cap=settings.phylo_cap,
                                 ngram_cap=settings.ngram_cap)
    encoders = FeatureEncoders(context, config)
    dataset = Dataset(encoders.matrix([(c, feat_id) for c in langs]), labels)
    model = fit(settings.model_kind, params, dataset,
                child_seed(settings.seed, feat_id, "refit"),
                n_threads=settings.threads,
                fingerprint=encoders.schema.fingerprint())
    return FeatureModel(feat_id, config, best.assignment, context, model), study


@dataclass
class FeatureEval:
    feat_id: str
    knn_f1: float
    ours_f1: float
    config: FeatureConfig | None = None
    missing_ratio: float | None = None


@dataclass
class EvalReport:
    """Per-feature F1 for the KNN baseline and our method, plus averages."""

    rows: list[FeatureEval]
    skipped: list[tuple[str, str]]
    mode: str
    folds: int
    seed: int
    studies: dict[str, StudyResult] = field(default_factory=dict)

    @property
    def knn_avg(self) -> float:
        return float(np.mean([r.knn_f1 for r in self.rows])) if self.rows else float("nan")

    @property
    def ours_avg(self) -> float:
        return float(np.mean([r.ours_f1 for r in self.rows])) if self.rows else float("nan")

    def row(self, feat_id: str) -> FeatureEval:
        for r in self.rows:
            if r.feat_id == feat_id:
                return r
        raise KeyError(feat_id)

    def save_table1(self, path: str | Path) -> None:
        comp_cols = ["phylo_n_comp", "ngram_n_comp"]
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feat_id", "knn_f1", "ours_f1", *GROUP_FLAGS, *comp_cols])
            for r in self.rows:
                flags = r.config.flags() if r.config else {}
                writer.writerow(
                    [r.feat_id, f"{r.knn_f1:.4f}", f"{r.ours_f1:.4f}"]
                    + [int(flags.get(name, False)) for name in GROUP_FLAGS]
                    + [getattr(r.config, c) if r.config else "" for c in comp_cols])
            if self.rows:
                usage = [f"{np.mean([1.0 if (r.config and getattr(r.config, name)) else 0.0 for r in self.rows]):.4f}"
                         for name in GROUP_FLAGS]
                comps = [f"{np.mean([getattr(r.config, c) for r in self.rows if r.config]):.1f}"
                         if any(r.config for r in self.rows) else "" for c in comp_cols]
                writer.writerow(["AVERAGE", f"{self.knn_avg:.4f}", f"{self.ours_avg:.4f}",
                                 *usage, *comps])

    def save_table2(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feat_id", "missing_ratio", "knn_f1", "ours_f1"])
            for r in self.rows:
                writer.writerow([r.feat_id, f"{r.missing_ratio:.4f}",
                                 f"{r.knn_f1:.4f}", f"{r.ours_f1:.4f}"])
            if self.rows:
                writer.writerow(["AVERAGE", "", f"{self.knn_avg:.4f}",
                                 f"{self.ours_avg:.4f}"])

    def save_skipped(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feat_id", "reason"])
            for feat, reason in self.skipped:
                writer.writerow([feat, reason])


def _knn_fold_f1(matrix: TypologyMatrix, feat_id: str, test_langs: list[str],
                 test_labels: np.ndarray, knn_config: KnnBaselineConfig) -> float:
    masked = matrix.masked([(c, feat_id) for c in test_langs])
    preds = knn_baseline(masked, feat_id, test_langs, knn_config)
    return f1_score(np.array([preds[c].value for c in test_langs]), test_labels)


def evaluate_kfold(matrix: TypologyMatrix, meta: list[LanguageMeta],
                   phylo: dict[str, PhylogenyVector] | None,
                   ngrams: NGramCounts | None,
                   settings: TypologySettings) -> EvalReport:
    """Seeded k-fold comparison of the KNN baseline and our method per feature.

    In ``outer`` mode one study runs on a feature's full present data and the
    chosen config is then k-fold evaluated on independently drawn folds; in
    ``nested`` mode the study reruns inside each training fold (slower, no
    selection bias). The mode is recorded on the report.
    """
    if settings.hpo_mode not in ("outer", "nested"):
        raise TypologyError(f"unknown hpo_mode {settings.hpo_mode!r}")
    rows: list[FeatureEval] = []
    skipped: list[tuple[str, str]] = []
    studies: dict[str, StudyResult] = {}
    contexts = _FeatureContexts(meta, matrix.features, phylo, ngrams, settings)
    for feat_id in matrix.target_features:
        langs, labels = _feature_rows(matrix, feat_id)
        try:
            _check_trainable(feat_id, labels, settings.folds)
        except FeatureSkipped as skip:
            logger.info("skipping %s: %s", feat_id, skip.reason)
            skipped.append((feat_id, skip.reason))
            continue
        folds = k_fold_split(len(langs), settings.folds,
                             child_seed(settings.seed, feat_id, "eval-folds"))
        config: FeatureConfig | None = None
        if settings.hpo_mode == "outer":
            study = _study_for_feature(matrix, contexts, feat_id, langs, labels,
                                       settings, seed_path=("outer",))
            try:
                assignment = study.best.assignment
            except HpoError:
                skipped.append((feat_id, "all search trials failed"))
                continue
            studies[feat_id] = study
            config = FeatureConfig.from_assignment(assignment)
        knn_scores = []
        ours_scores = []
        for fold_idx, (train_idx, test_idx) in enumerate(folds):
            train_langs = [langs[i] for i in train_idx]
            test_langs = [langs[i] for i in test_idx]
            if settings.hpo_mode == "nested":
                sub = TypologySettings(**{**settings.__dict__,
                                          "folds": min(settings.folds, max(2, len(train_idx) // 2))})
                inner = _study_for_feature(matrix, contexts, feat_id,
                                           train_langs, labels[train_idx], sub,
                                           seed_path=("nested", fold_idx))
                assignment = inner.best.assignment
                if config is None:
                    config = FeatureConfig.from_assignment(assignment)
            preds = _fit_eval(contexts, (feat_id, "eval", fold_idx), settings,
                              assignment, train_langs, labels[train_idx],
                              test_langs, feat_id,
                              child_seed(settings.seed, feat_id, "eval-fit", fold_idx))
            ours_scores.append(f1_score(preds, labels[test_idx]))
            knn_scores.append(_knn_fold_f1(matrix, feat_id, test_langs,
                                           labels[test_idx], settings.knn))
        rows.append(FeatureEval(feat_id, float(np.mean(knn_scores)),
                                float(np.mean(ours_scores)), config))
    return EvalReport(rows, skipped, f"kfold-{settings.hpo_mode}",
                      settings.folds, settings.seed, studies)


def evaluate_likely_missing(matrix: TypologyMatrix, meta: list[LanguageMeta],
                            phylo: dict[str, PhylogenyVector] | None,
                            ngrams: NGramCounts | None,
                            ranking: MissingRanking,
                            settings: TypologySettings,
                            ratio_threshold: float = 0.5) -> EvalReport:
    """Hold out the flagged present cells of every feature whose missing ratio
    exceeds the threshold; train on the remaining present cells."""
    from .presence import missing_ratio as compute_ratios

    ratios = compute_ratios(ranking, matrix).ratios()
    rows: list[FeatureEval] = []
    skipped: list[tuple[str, str]] = []
    studies: dict[str, StudyResult] = {}
    contexts = _FeatureContexts(meta, matrix.features, phylo, ngrams, settings)
    for feat_id in matrix.target_features:
        ratio = ratios.get(feat_id)
        if ratio is None or ratio <= ratio_threshold:
            continue
        langs, labels = _feature_rows(matrix, feat_id)
        flagged = {c.code for c in ranking.flagged_cells(feat_id)}
        train_idx = [i for i, c in enumerate(langs) if c not in flagged]
        test_idx = [i for i, c in enumerate(langs) if c in flagged]
        if not test_idx:
            continue
        train_langs = [langs[i] for i in train_idx]
        test_langs = [langs[i] for i in test_idx]
        train_labels = labels[train_idx]
        try:
            _check_trainable(feat_id, train_labels, settings.folds)
        except FeatureSkipped as skip:
            skipped.append((feat_id, skip.reason))
            continue
        study = _study_for_feature(matrix, contexts, feat_id, train_langs,
                                   train_labels, settings, seed_path=("missing",))
        try:
            study.best
        except HpoError:
            skipped.append((feat_id, "all search trials failed"))
            continue
        studies[feat_id] = study
        preds = _fit_eval(contexts, (feat_id, "missing-fit"), settings,
                          study.best.assignment, train_langs, train_labels,
                          test_langs, feat_id,
                          child_seed(settings.seed, feat_id, "missing-fit"))
        ours = f1_score(preds, labels[test_idx])
        knn = _knn_fold_f1(matrix, feat_id, test_langs, labels[test_idx], settings.knn)
        rows.append(FeatureEval(feat_id, knn, ours,
                                FeatureConfig.from_assignment(study.best.assignment),
                                missing_ratio=ratio))
    return EvalReport(rows, skipped, "likely-missing", settings.folds,
                      settings.seed, studies)


@dataclass
class ImputedMatrix:
    """Completed grid plus per-cell provenance strings."""

    languages: list[str]
    features: list[str]
    values: np.ndarray
    provenance: list[list[str]]

    def cell(self, code: str, feat_id: str) -> tuple[int, str]:
        i = self.languages.index(code)
        j = self.features.index(feat_id)
        return int(self.values[i, j]), self.provenance[i][j]

    def save(self, completed_path: str | Path, provenance_path: str | Path) -> None:
        with Path(completed_path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iso639_3"] + self.features)
            for i, code in enumerate(self.languages):
                row = ["--" if v == MISSING else str(int(v)) for v in self.values[i]]
                writer.writerow([code] + row)
        with Path(provenance_path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iso639_3"] + self.features)
            for i, code in enumerate(self.languages):
                writer.writerow([code] + self.provenance[i])


def impute_all(matrix: TypologyMatrix, meta: list[LanguageMeta],
               phylo: dict[str, PhylogenyVector] | None,
               ngrams: NGramCounts | None, settings: TypologySettings,
               assignments: dict[str, dict] | None = None) -> ImputedMatrix:
    """Fill every missing target cell; observed cells pass through unchanged.

    Per feature the refit classifier predicts the missing cells; features that
    cannot be trained fall back to the KNN baseline, recorded in provenance.
    ``assignments`` supplies pre-searched configs (e.g. from an earlier study)
    keyed by feature id; anything absent triggers a fresh study.
    """
    values = matrix.values.copy()
    provenance = [["OBSERVED" if matrix.values[i, j] != MISSING else "MISSING"
                   for j in range(len(matrix.features))]
                  for i in range(len(matrix.languages))]
    for feat_id in matrix.target_features:
        j = matrix.feat_index[feat_id]
        missing_langs = [matrix.languages[i]
                         for i in np.nonzero(matrix.values[:, j] == MISSING)[0]]
        if not missing_langs:
            continue
        langs, labels = _feature_rows(matrix, feat_id)
        if not langs:
            logger.warning("%s: zero present cells, leaving missing", feat_id)
            continue
        try:
            _check_trainable(feat_id, labels, settings.folds)
        except FeatureSkipped as skip:
            logger.info("imputing %s via KNN fallback: %s", feat_id, skip.reason)
            preds = knn_baseline(matrix, feat_id, missing_langs, settings.knn)
            for code in missing_langs:
                i = matrix.lang_index[code]
                values[i, j] = preds[code].value
                provenance[i][j] = f"IMPUTED_KNN({preds[code].proba:.4f})"
            continue
        if assignments is not None and feat_id in assignments:
            assignment = assignments[feat_id]
            config = FeatureConfig.from_assignment(assignment)
            params = params_from_assignment(settings.model_kind, assignment)
            context = EncoderContext.fit(langs, meta, matrix.features, phylo=phylo,
                                         ngrams=ngrams, phylo_cap=settings.phylo_cap,
                                         ngram_cap=settings.ngram_cap)
            encoders = FeatureEncoders(context, config)
            dataset = Dataset(encoders.matrix([(c, feat_id) for c in langs]), labels)
            model = fit(settings.model_kind, params, dataset,
                        child_seed(settings.seed, feat_id, "refit"),
                        n_threads=settings.threads)
            fm = FeatureModel(feat_id, config, assignment, context, model)
        else:
            try:
                fm, _ = train_feature_classifier(matrix, meta, phylo, ngrams,
                                                 feat_id, settings)
            except FeatureSkipped as skip:
                logger.info("imputing %s via KNN fallback: %s", feat_id, skip.reason)
                preds = knn_baseline(matrix, feat_id, missing_langs, settings.knn)
                for code in missing_langs:
                    i = matrix.lang_index[code]
                    values[i, j] = preds[code].value
                    provenance[i][j] = f"IMPUTED_KNN({preds[code].proba:.4f})"
                continue
        preds, proba = fm.predict(missing_langs)
        for code, value, p in zip(missing_langs, preds, proba):
            i = matrix.lang_index[code]
            values[i, j] = int(value)
            provenance[i][j] = f"IMPUTED({p:.4f})"
    return ImputedMatrix(list(matrix.languages),
                         [f.feat_id for f in matrix.features], values, provenance)
