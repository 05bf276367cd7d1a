"""Assemble numeric feature vectors for (language, target-feature) pairs.

Blocks appear in a fixed, documented order (``BLOCK_ORDER``); disabling a
group removes exactly its block. All fitted state — vocabularies,
standardization statistics, PCA models — comes from training data only, so a
fixed row's vector never depends on what ends up in a test fold.

Continuous metadata is z-standardized with mean imputation plus a 0/1
missing-indicator; ``wiki_size`` and ``num_speakers`` are log1p-transformed
first since both span several orders of magnitude. POS n-gram counts are
L1-normalized per language before PCA so the block encodes tag-sequence
distribution, not corpus length.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy import sparse

from .corpus import (
    AES_LEVELS,
    LANG_GROUPS,
    PHYLO_DIM,
    FeatDescriptor,
    LanguageMeta,
    PhylogenyVector,
    PosCorpus,
)
from .mlcore import PcaModel, fit_pca

BLOCK_ORDER = (
    "lang_id", "feat_id", "geo_lat", "geo_long", "wiki_size", "num_speakers",
    "aes_status", "lang_group", "lang_fam", "scripts", "feat_name",
    "phylogeny", "pos_ngrams",
)

# FeatureConfig flag order; also the column order of selection reports.
GROUP_FLAGS = (
    "use_lang_id", "use_feat_id", "use_geo_lat", "use_geo_long",
    "use_lang_group", "use_aes_status", "use_wiki_size", "use_num_speakers",
    "use_lang_fam", "use_scripts", "use_feat_name", "use_phylogeny",
    "use_pos_ngrams",
)

NGRAM_RANGE = (3, 4, 5)


class FeaturizeError(ValueError):
    """Contract violation while fitting encoders or assembling vectors."""


@dataclass(frozen=True)
class FeatureConfig:
    """Which feature groups are active, plus PCA component counts."""

    use_lang_id: bool = True
    use_feat_id: bool = True
    use_geo_lat: bool = True
    use_geo_long: bool = True
    use_lang_group: bool = True
    use_aes_status: bool = True
    use_wiki_size: bool = True
    use_num_speakers: bool = True
    use_lang_fam: bool = True
    use_scripts: bool = True
    use_feat_name: bool = True
    use_phylogeny: bool = True
    use_pos_ngrams: bool = False
    phylo_n_comp: int = 32
    ngram_n_comp: int = 32

    def __post_init__(self):
        if self.phylo_n_comp < 1 or self.phylo_n_comp > PHYLO_DIM:
            raise FeaturizeError(f"phylo_n_comp must be in [1, {PHYLO_DIM}]")
        if self.ngram_n_comp < 1:
            raise FeaturizeError("ngram_n_comp must be >= 1")

    def flags(self) -> dict[str, bool]:
        return {name: getattr(self, name) for name in GROUP_FLAGS}

    def any_enabled(self) -> bool:
        return any(self.flags().values())

    @classmethod
    def from_assignment(cls, assignment: dict) -> "FeatureConfig":
        """Build from an HPO assignment; unrelated keys are ignored."""
        kwargs = {}
        for f in fields(cls):
            if f.name in assignment:
                kwargs[f.name] = assignment[f.name]
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class FeatureSchema:
    """Ordered (block name, width) pairs; widths sum to the total.

    ``meta`` carries sizes that widths alone cannot show (e.g. the observed
    n-gram vocabulary behind a truncated PCA block).
    """

    blocks: list[tuple[str, int]]
    meta: dict = None

    @property
    def total(self) -> int:
        return sum(w for _, w in self.blocks)

    def fingerprint(self) -> str:
        digest = hashlib.sha256(json.dumps(self.blocks).encode()).hexdigest()
        return f"{self.total}:{digest[:12]}"

    def to_dict(self) -> dict:
        return {"blocks": [{"name": n, "width": w} for n, w in self.blocks],
                "total": self.total, "meta": self.meta or {}}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureSchema":
        return cls([(b["name"], b["width"]) for b in data["blocks"]])


@dataclass
class NGramCounts:
    """Per-language sparse POS n-gram counts, n in {3, 4, 5}."""

    per_lang: dict[str, Counter]

    def vocabulary(self) -> list[tuple[str, ...]]:
        vocab = set()
        for counts in self.per_lang.values():
            vocab.update(counts)
        return sorted(vocab)

    def restrict(self, keep: set[str]) -> "NGramCounts":
        """Drop languages outside ``keep`` (quality filtering)."""
        return NGramCounts({c: v for c, v in self.per_lang.items() if c in keep})


def extract_pos_ngrams(corpus: PosCorpus) -> NGramCounts:
    """Count contiguous tag n-grams of length 3-5 within each sentence."""
    per_lang: dict[str, Counter] = {}
    for code, sentences in corpus.items():
        counts: Counter = Counter()
        for sent in sentences:
            for n in NGRAM_RANGE:
                for i in range(len(sent) - n + 1):
                    counts[tuple(sent[i:i + n])] += 1
        per_lang[code] = counts
    return NGramCounts(per_lang)


def encode_feat_name(feat_id: str) -> set[str]:
    """Word unigrams of a feature id: its '_'-separated pieces."""
    if not feat_id:
        raise FeaturizeError("empty feature id")
    return {piece for piece in feat_id.split("_") if piece}


def _log1p_or_none(value):
    return None if value is None else float(np.log1p(value))


_CONT_FIELDS = {
    "geo_lat": lambda m: m.geo_lat,
    "geo_long": lambda m: m.geo_long,
    "wiki_size": lambda m: _log1p_or_none(m.wiki_size),
    "num_speakers": lambda m: _log1p_or_none(m.num_speakers),
}


class EncoderContext:
    """Config-independent fitted state for one training split.

    PCA models are fitted once at a cap and truncated per config, so a search
    over component counts reuses one decomposition (truncation of a top-k
    eigenbasis is exact). Everything here is immutable after ``fit``.
    """

    def __init__(self):
        self.lang_vocab: dict[str, int] = {}
        self.feat_vocab: dict[str, int] = {}
        self.fam_vocab: dict[str, int] = {}
        self.script_vocab: dict[str, int] = {}
        self.token_vocab: dict[str, int] = {}
        self.cont_stats: dict[str, tuple[float, float]] = {}
        self.meta: dict[str, LanguageMeta] = {}
        self.phylo: dict[str, PhylogenyVector] = {}
        self.phylo_pca: PcaModel | None = None
        self.ngram_pca: PcaModel | None = None
        self.ngram_vocab: dict[tuple[str, ...], int] = {}
        self.ngram_rows: dict[str, np.ndarray] = {}

    @classmethod
    def fit(cls, train_langs, meta: list[LanguageMeta],
            features: list[FeatDescriptor], *,
            phylo: dict[str, PhylogenyVector] | None = None,
            ngrams: NGramCounts | None = None,
            phylo_cap: int = 128, ngram_cap: int = 512) -> "EncoderContext":
        ctx = cls()
        train_langs = sorted(set(train_langs))
        ctx.meta = {m.code: m for m in meta}
        ctx.phylo = dict(phylo) if phylo else {}
        ctx.lang_vocab = {c: i for i, c in enumerate(train_langs)}

        target_feats = [f.feat_id for f in features if f.is_target]
        ctx.feat_vocab = {f: i for i, f in enumerate(target_feats)}
        tokens = set()
        for feat in target_feats:
            tokens.update(encode_feat_name(feat))
        ctx.token_vocab = {t: i for i, t in enumerate(sorted(tokens))}

        fams = sorted({ctx.meta[c].family for c in train_langs
                       if c in ctx.meta and ctx.meta[c].family})
        ctx.fam_vocab = {f: i for i, f in enumerate(fams)}
        scripts = sorted({s for c in train_langs if c in ctx.meta
                          for s in ctx.meta[c].scripts})
        ctx.script_vocab = {s: i for i, s in enumerate(scripts)}

        for name, getter in _CONT_FIELDS.items():
            values = [getter(ctx.meta[c]) for c in train_langs if c in ctx.meta]
            values = [v for v in values if v is not None]
            if len(values) >= 2:
                mean = float(np.mean(values))
                sd = float(np.std(values, ddof=1))
            elif len(values) == 1:
                mean, sd = float(values[0]), 1.0
            else:
                mean, sd = 0.0, 1.0
            ctx.cont_stats[name] = (mean, sd if sd > 1e-12 else 1.0)

        if phylo is not None and train_langs:
            dense = np.stack([ctx._phylo_raw(c) for c in train_langs])
            k = min(phylo_cap, len(train_langs), PHYLO_DIM)
            ctx.phylo_pca = fit_pca(dense, k)

        if ngrams is not None:
            vocab = ngrams.vocabulary()
            ctx.ngram_vocab = {g: i for i, g in enumerate(vocab)}
            for code, counts in sorted(ngrams.per_lang.items()):
                ctx.ngram_rows[code] = _normalized_row(counts, ctx.ngram_vocab)
            with_corpus = [c for c in train_langs if c in ctx.ngram_rows]
            if with_corpus and vocab:
                mat = sparse.csr_matrix(
                    np.stack([ctx.ngram_rows[c] for c in with_corpus]))
                k = min(ngram_cap, len(with_corpus), len(vocab))
                ctx.ngram_pca = fit_pca(mat, k)
        return ctx

    def _phylo_raw(self, code: str) -> np.ndarray:
        vec = self.phylo.get(code)
        # A language absent from the phylogeny file has no memberships.
        return vec.dense() if vec is not None else np.zeros(PHYLO_DIM)

    def to_dict(self) -> dict:
        return {
            "lang_vocab": self.lang_vocab,
            "feat_vocab": self.feat_vocab,
            "fam_vocab": self.fam_vocab,
            "script_vocab": self.script_vocab,
            "token_vocab": self.token_vocab,
            "cont_stats": self.cont_stats,
            "meta": {c: _meta_to_dict(m) for c, m in self.meta.items()},
            "phylo": {c: list(v.ones) for c, v in self.phylo.items()},
            "phylo_pca": self.phylo_pca.to_dict() if self.phylo_pca else None,
            "ngram_pca": self.ngram_pca.to_dict() if self.ngram_pca else None,
            "ngram_vocab": {"|".join(g): i for g, i in self.ngram_vocab.items()},
            "ngram_rows": {c: row.tolist() for c, row in self.ngram_rows.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderContext":
        ctx = cls()
        ctx.lang_vocab = dict(data["lang_vocab"])
        ctx.feat_vocab = dict(data["feat_vocab"])
        ctx.fam_vocab = dict(data["fam_vocab"])
        ctx.script_vocab = dict(data["script_vocab"])
        ctx.token_vocab = dict(data["token_vocab"])
        ctx.cont_stats = {k: tuple(v) for k, v in data["cont_stats"].items()}
        ctx.meta = {c: _meta_from_dict(m) for c, m in data["meta"].items()}
        ctx.phylo = {c: PhylogenyVector(c, tuple(v)) for c, v in data["phylo"].items()}
        ctx.phylo_pca = PcaModel.from_dict(data["phylo_pca"]) if data["phylo_pca"] else None
        ctx.ngram_pca = PcaModel.from_dict(data["ngram_pca"]) if data["ngram_pca"] else None
        ctx.ngram_vocab = {tuple(k.split("|")): i for k, i in data["ngram_vocab"].items()}
        ctx.ngram_rows = {c: np.array(r, dtype=np.float64)
                          for c, r in data["ngram_rows"].items()}
        return ctx


def _normalized_row(counts: Counter, vocab: dict[tuple[str, ...], int]) -> np.ndarray:
    row = np.zeros(len(vocab))
    for gram, count in counts.items():
        idx = vocab.get(gram)
        if idx is not None:
            row[idx] = count
    total = row.sum()
    return row / total if total > 0 else row


def _meta_to_dict(m: LanguageMeta) -> dict:
    return {"code": m.code, "family": m.family, "geo_lat": m.geo_lat,
            "geo_long": m.geo_long, "wiki_size": m.wiki_size,
            "num_speakers": m.num_speakers, "aes_status": m.aes_status,
            "lang_group": m.lang_group, "scripts": sorted(m.scripts)}


def _meta_from_dict(d: dict) -> LanguageMeta:
    d = dict(d)
    d["scripts"] = frozenset(d["scripts"])
    return LanguageMeta(**d)


class FeatureEncoders:
    """A config bound to a fitted context; assembles vectors in schema order."""

    def __init__(self, context: EncoderContext, config: FeatureConfig):
        if not config.any_enabled():
            raise FeaturizeError("no feature groups enabled")
        self.context = context
        self.config = config
        self.phylo_k = 0
        self.ngram_k = 0
        if config.use_phylogeny:
            if context.phylo_pca is None:
                raise FeaturizeError("phylogeny block requested but no phylogeny was fitted")
            self.phylo_k = min(config.phylo_n_comp, context.phylo_pca.n_components)
        if config.use_pos_ngrams:
            # A corpus-free dataset still admits the block: it is all zeros.
            if context.ngram_pca is not None:
                self.ngram_k = min(config.ngram_n_comp, context.ngram_pca.n_components)
        self.schema = self._build_schema()
        self._lang_cache: dict[str, np.ndarray] = {}
        self._feat_cache: dict[str, np.ndarray] = {}

    def _build_schema(self) -> FeatureSchema:
        ctx, cfg = self.context, self.config
        widths = {
            "lang_id": len(ctx.lang_vocab),
            "feat_id": len(ctx.feat_vocab),
            "geo_lat": 2, "geo_long": 2, "wiki_size": 2, "num_speakers": 2,
            "aes_status": len(AES_LEVELS),
            "lang_group": len(LANG_GROUPS),
            "lang_fam": len(ctx.fam_vocab),
            "scripts": len(ctx.script_vocab),
            "feat_name": len(ctx.token_vocab),
            "phylogeny": self.phylo_k,
            "pos_ngrams": self.ngram_k + 1,
        }
        blocks = [(name, widths[name]) for name in BLOCK_ORDER
                  if getattr(cfg, f"use_{name}")]
        return FeatureSchema(blocks)

    def _lang_blocks(self, code: str) -> np.ndarray:
        cached = self._lang_cache.get(code)
        if cached is not None:
            return cached
        ctx, cfg = self.context, self.config
        meta = ctx.meta.get(code)
        parts: list[np.ndarray] = []
        if cfg.use_lang_id:
            block = np.zeros(len(ctx.lang_vocab))
            idx = ctx.lang_vocab.get(code)
            if idx is not None:
                block[idx] = 1.0
            parts.append(block)
        for name in ("geo_lat", "geo_long", "wiki_size", "num_speakers"):
            if not getattr(cfg, f"use_{name}"):
                continue
            value = _CONT_FIELDS[name](meta) if meta is not None else None
            mean, sd = ctx.cont_stats[name]
            if value is None:
                parts.append(np.array([0.0, 1.0]))
            else:
                parts.append(np.array([(value - mean) / sd, 0.0]))
        if cfg.use_aes_status:
            block = np.zeros(len(AES_LEVELS))
            if meta is not None and meta.aes_status is not None:
                block[meta.aes_status - 1] = 1.0
            parts.append(block)
        if cfg.use_lang_group:
            block = np.zeros(len(LANG_GROUPS))
            if meta is not None and meta.lang_group is not None:
                block[meta.lang_group] = 1.0
            parts.append(block)
        if cfg.use_lang_fam:
            block = np.zeros(len(ctx.fam_vocab))
            if meta is not None and meta.family in ctx.fam_vocab:
                block[ctx.fam_vocab[meta.family]] = 1.0
            parts.append(block)
        if cfg.use_scripts:
            block = np.zeros(len(ctx.script_vocab))
            if meta is not None:
                for script in meta.scripts:
                    idx = ctx.script_vocab.get(script)
                    if idx is not None:
                        block[idx] = 1.0
            parts.append(block)
        if cfg.use_phylogeny:
            raw = ctx._phylo_raw(code)
            proj = ctx.phylo_pca.transform(raw[None, :])[0][:self.phylo_k]
            parts.append(proj)
        if cfg.use_pos_ngrams:
            row = ctx.ngram_rows.get(code)
            if row is None or ctx.ngram_pca is None:
                parts.append(np.zeros(self.ngram_k + 1))
            else:
                proj = ctx.ngram_pca.transform(row[None, :])[0][:self.ngram_k]
                parts.append(np.concatenate([proj, [1.0]]))
        vec = np.concatenate(parts) if parts else np.zeros(0)
        self._lang_cache[code] = vec
        return vec

    def _feat_blocks(self, feat_id: str) -> np.ndarray:
        cached = self._feat_cache.get(feat_id)
        if cached is not None:
            return cached
        ctx, cfg = self.context, self.config
        parts: list[np.ndarray] = []
        if cfg.use_feat_id:
            block = np.zeros(len(ctx.feat_vocab))
            idx = ctx.feat_vocab.get(feat_id)
            if idx is not None:
                block[idx] = 1.0
            parts.append(block)
        if cfg.use_feat_name:
            block = np.zeros(len(ctx.token_vocab))
            for token in encode_feat_name(feat_id):
                idx = ctx.token_vocab.get(token)
                if idx is not None:
                    block[idx] = 1.0
            parts.append(block)
        vec = np.concatenate(parts) if parts else np.zeros(0)
        self._feat_cache[feat_id] = vec
        return vec

    def assemble(self, code: str, feat_id: str) -> np.ndarray:
        """Feature vector for one (language, feature) pair, in schema order."""
        lang_parts = self._lang_blocks(code)
        feat_parts = self._feat_blocks(feat_id)
        ctx, cfg = self.context, self.config
        # Interleave per BLOCK_ORDER: lang_id, feat blocks sit at fixed offsets.
        out = np.empty(self.schema.total)
        pos = 0
        lang_pos = 0
        feat_pos = 0
        for name, width in self.schema.blocks:
            if name in ("feat_id", "feat_name"):
                out[pos:pos + width] = feat_parts[feat_pos:feat_pos + width]
                feat_pos += width
            else:
                out[pos:pos + width] = lang_parts[lang_pos:lang_pos + width]
                lang_pos += width
            pos += width
        return out

    def matrix(self, keys: list[tuple[str, str]]) -> np.ndarray:
        """Stacked vectors for many (language, feature) keys."""
        if not keys:
            return np.zeros((0, self.schema.total))
        return np.stack([self.assemble(code, feat) for code, feat in keys])
