"""Estimate POS-tagger quality per language and gate n-gram features on it.

Tag frequencies and Swadesh agreement are computed in-repo from the POS corpus
and the Swadesh list; confidence and subword statistics come from a stats TSV
produced by whatever tagger generated the corpus (``pos_stats.tsv``, columns
``iso639_3 avg_confidence pct_unk avg_len_subwords avg_len_chars``). A
regression forest maps these features to estimated tagging recall, and
languages above a recall threshold keep their n-gram block.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CorpusError, PosCorpus, SwadeshList, UPOS_TAGS, is_lang_code
from .mlcore import RegressionForest, child_seed, k_fold_split

logger = logging.getLogger(__name__)

STATS_COLUMNS = ("iso639_3", "avg_confidence", "pct_unk",
                 "avg_len_subwords", "avg_len_chars")


class PosQualityError(ValueError):
    pass


@dataclass(frozen=True)
class TaggerStats:
    avg_confidence: float
    pct_unk_subwords: float
    avg_word_len_subwords: float
    avg_word_len_chars: float

    def __post_init__(self):
        if not 0.0 <= self.avg_confidence <= 1.0:
            raise PosQualityError(f"avg_confidence {self.avg_confidence} outside [0, 1]")
        if not 0.0 <= self.pct_unk_subwords <= 100.0:
            raise PosQualityError(f"pct_unk {self.pct_unk_subwords} outside [0, 100]")
        if self.avg_word_len_subwords <= 0 or self.avg_word_len_chars <= 0:
            raise PosQualityError("word lengths must be positive")


@dataclass(frozen=True)
class PosQualityFeatures:
    code: str
    tag_freqs: tuple[float, ...]          # 17 probabilities summing to 1
    avg_confidence: float
    pct_unk_subwords: float
    avg_word_len_subwords: float
    avg_word_len_chars: float
    swadesh_agreement_pct: float

    def __post_init__(self):
        if len(self.tag_freqs) != len(UPOS_TAGS):
            raise PosQualityError("tag_freqs must have one entry per UPOS tag")
        if abs(sum(self.tag_freqs) - 1.0) > 1e-9:
            raise PosQualityError(f"tag_freqs sum {sum(self.tag_freqs)} != 1")
        if not 0.0 <= self.swadesh_agreement_pct <= 100.0:
            raise PosQualityError("swadesh agreement outside [0, 100]")

    def to_vector(self) -> np.ndarray:
        return np.array([*self.tag_freqs, self.avg_confidence,
                         self.pct_unk_subwords, self.avg_word_len_subwords,
                         self.avg_word_len_chars, self.swadesh_agreement_pct])


@dataclass(frozen=True)
class QualityEstimate:
    code: str
    estimated_recall: float  # [0, 100]


def load_pos_stats(path: str | Path) -> dict[str, TaggerStats]:
    path = Path(path)
    stats: dict[str, TaggerStats] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusError("empty file", path=path) from None
        if tuple(header) != STATS_COLUMNS:
            raise CorpusError(f"header {header!r} != {list(STATS_COLUMNS)}",
                              path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise CorpusError(f"expected 5 fields, got {len(row)}",
                                  path=path, line=lineno)
            code = row[0]
            if not is_lang_code(code):
                raise CorpusError(f"invalid code {code!r}", path=path, line=lineno)
            try:
                stats[code] = TaggerStats(float(row[1]), float(row[2]),
                                          float(row[3]), float(row[4]))
            except (ValueError, PosQualityError) as err:
                raise CorpusError(str(err), path=path, line=lineno) from None
    return stats


def tag_frequencies(sentences: list[list[str]]) -> tuple[float, ...]:
    """Per-tag probability over all tokens of a language's corpus."""
    counts = {tag: 0 for tag in UPOS_TAGS}
    total = 0
    for sent in sentences:
        for tag in sent:
            counts[tag] += 1
            total += 1
    if total == 0:
        raise PosQualityError("empty corpus")
    return tuple(counts[tag] / total for tag in UPOS_TAGS)


def swadesh_agreement(swadesh: SwadeshList, code: str,
                      english_reference: dict[str, str]) -> float | None:
    """Percentage of a language's Swadesh entries whose tag matches the
    English entry for the same concept; None when nothing aligns."""
    entries = swadesh.for_language(code)
    aligned = [e for e in entries if e.concept_id in english_reference]
    if not aligned:
        return None
    hits = sum(1 for e in aligned if e.upos == english_reference[e.concept_id])
    return 100.0 * hits / len(aligned)


def compute_quality_features(stats: dict[str, TaggerStats], corpus: PosCorpus,
                             swadesh: SwadeshList,
                             english_reference: dict[str, str] | None = None,
                             ) -> list[PosQualityFeatures]:
    """Quality features for every language with both a corpus and tagger stats.

    Languages missing from the stats file are excluded with a warning; a
    language without aligned Swadesh entries gets agreement 0.
    """
    if english_reference is None:
        english_reference = swadesh.english_reference()
    out: list[PosQualityFeatures] = []
    for code in sorted(corpus):
        if not corpus[code]:
            continue
        stat = stats.get(code)
        if stat is None:
            logger.warning("%s: no tagger stats, excluded from quality features", code)
            continue
        agreement = swadesh_agreement(swadesh, code, english_reference)
        out.append(PosQualityFeatures(
            code=code,
            tag_freqs=tag_frequencies(corpus[code]),
            avg_confidence=stat.avg_confidence,
            pct_unk_subwords=stat.pct_unk_subwords,
            avg_word_len_subwords=stat.avg_word_len_subwords,
            avg_word_len_chars=stat.avg_word_len_chars,
            swadesh_agreement_pct=agreement if agreement is not None else 0.0,
        ))
    return out


@dataclass
class QualityRegressor:
    forest: RegressionForest
    held_out_mae: float

    def predict(self, features: list[PosQualityFeatures]) -> list[QualityEstimate]:
        if not features:
            return []
        rows = np.stack([f.to_vector() for f in features])
        preds = np.clip(self.forest.predict(rows), 0.0, 100.0)
        return [QualityEstimate(f.code, float(p)) for f, p in zip(features, preds)]


def fit_quality_regressor(features: list[PosQualityFeatures], recalls,
                          seed: int, *, n_estimators: int = 200,
                          folds: int = 5) -> QualityRegressor:
    """Regression forest (variance-reduction splits, mean leaves) from quality
    features to gold recall, with held-out MAE from seeded k-fold refits."""
    recalls = np.asarray(recalls, dtype=np.float64)
    if len(features) != len(recalls):
        raise PosQualityError("features and recalls length mismatch")
    if len(features) < 10:
        raise PosQualityError(f"need >= 10 labelled languages, got {len(features)}")
    rows = np.stack([f.to_vector() for f in features])
    errors = []
    for fold_idx, (train_idx, test_idx) in enumerate(
            k_fold_split(len(recalls), folds, child_seed(seed, "quality-folds"))):
        forest = RegressionForest.fit(rows[train_idx], recalls[train_idx],
                                      n_estimators=n_estimators,
                                      seed=child_seed(seed, "quality-fold", fold_idx))
        preds = forest.predict(rows[test_idx])
        errors.extend(np.abs(preds - recalls[test_idx]))
    final = RegressionForest.fit(rows, recalls, n_estimators=n_estimators,
                                 seed=child_seed(seed, "quality-final"))
    return QualityRegressor(final, float(np.mean(errors)))


def filter_languages(estimates: list[QualityEstimate], threshold: float) -> set[str]:
    """Languages whose estimated recall strictly exceeds the threshold."""
    return {e.code for e in estimates if e.estimated_recall > threshold}


def save_quality(estimates: list[QualityEstimate], kept: set[str],
                 path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iso639_3", "estimated_recall", "kept"])
        for e in sorted(estimates, key=lambda e: e.code):
            writer.writerow([e.code, f"{e.estimated_recall:.4f}", int(e.code in kept)])


def load_kept_languages(path: str | Path) -> set[str]:
    kept = set()
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row and row[2] == "1":
                kept.add(row[0])
    return kept
