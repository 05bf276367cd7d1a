"""Input data: language metadata, typology matrix, phylogeny, POS corpora, Swadesh lists.

All loaders validate eagerly and raise :class:`CorpusError` with file/line
coordinates on malformed input; they never return a partially populated
structure. Loaded objects are immutable (or treated as such) and safe to
share across threads.

File formats
------------
``languages.tsv``   TSV, header ``iso639_3 family latitude longitude wiki_size
                    num_speakers aes_status lang_group scripts``; empty fields
                    mean "missing"; scripts are ';'-separated ISO 15924 codes.
``typology.csv``    CSV, first column ``iso639_3``, remaining columns feature
                    ids; cells are ``0``, ``1`` or ``--`` (missing).
``phylogeny.txt``   lines ``iso639_3<TAB>i,j,k`` giving the 0-based indices of
                    the 1-entries of the 3719-dim family-membership vector.
``pos/<iso>.pos``   one sentence per line, space-separated UPOS tags.
``swadesh.tsv``     lines ``concept_id<TAB>iso639_3<TAB>word<TAB>upos``.
``targets.txt``     one target feature id per line.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MISSING = -1
PHYLO_DIM = 3719

UPOS_TAGS = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
)
UPOS_SET = frozenset(UPOS_TAGS)

# Agglomerated Endangerment Status: six ordered vitality levels, 1..6.
AES_LEVELS = (1, 2, 3, 4, 5, 6)
# Resource-availability taxonomy: six classes, 0..5.
LANG_GROUPS = (0, 1, 2, 3, 4, 5)

REJECTED_SCRIPTS = frozenset({"Brai"})

META_COLUMNS = (
    "iso639_3", "family", "latitude", "longitude", "wiki_size",
    "num_speakers", "aes_status", "lang_group", "scripts",
)


class CorpusError(ValueError):
    """Malformed input data; carries the offending location when known."""

    def __init__(self, message: str, *, path: str | Path | None = None,
                 line: int | None = None, column: str | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        self.column = column
        loc = []
        if self.path is not None:
            loc.append(self.path)
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column!r}")
        prefix = ":".join(loc)
        super().__init__(f"{prefix}: {message}" if prefix else message)


def is_lang_code(code: str) -> bool:
    """True for a 3-letter lowercase ISO 639-3 code."""
    return len(code) == 3 and all("a" <= c <= "z" for c in code)


def _require_lang_code(code: str, *, path=None, line=None) -> str:
    if not is_lang_code(code):
        raise CorpusError(f"invalid ISO 639-3 code {code!r}", path=path, line=line,
                          column="iso639_3")
    return code


@dataclass(frozen=True)
class LanguageMeta:
    """Per-language metadata; None means the value is missing."""

    code: str
    family: str | None = None
    geo_lat: float | None = None
    geo_long: float | None = None
    wiki_size: int | None = None
    num_speakers: int | None = None
    aes_status: int | None = None   # 1..6
    lang_group: int | None = None   # 0..5
    scripts: frozenset[str] = frozenset()

    def __post_init__(self):
        if not is_lang_code(self.code):
            raise CorpusError(f"invalid ISO 639-3 code {self.code!r}")
        if self.geo_lat is not None and not -90.0 <= self.geo_lat <= 90.0:
            raise CorpusError(f"{self.code}: latitude {self.geo_lat} out of [-90, 90]")
        if self.geo_long is not None and not -180.0 <= self.geo_long <= 180.0:
            raise CorpusError(f"{self.code}: longitude {self.geo_long} out of [-180, 180]")
        if self.wiki_size is not None and self.wiki_size < 0:
            raise CorpusError(f"{self.code}: negative wiki_size")
        if self.num_speakers is not None and self.num_speakers < 0:
            raise CorpusError(f"{self.code}: negative num_speakers")
        if self.aes_status is not None and self.aes_status not in AES_LEVELS:
            raise CorpusError(f"{self.code}: aes_status {self.aes_status} not in {AES_LEVELS}")
        if self.lang_group is not None and self.lang_group not in LANG_GROUPS:
            raise CorpusError(f"{self.code}: lang_group {self.lang_group} not in {LANG_GROUPS}")
        if self.scripts & REJECTED_SCRIPTS:
            raise CorpusError(f"{self.code}: rejected script in {sorted(self.scripts)}")


@dataclass(frozen=True)
class PhylogenyVector:
    """Sparse binary family-membership vector: sorted indices of the 1-entries."""

    code: str
    ones: tuple[int, ...]

    def __post_init__(self):
        prev = -1
        for i in self.ones:
            if not 0 <= i < PHYLO_DIM:
                raise CorpusError(f"{self.code}: phylogeny index {i} out of [0, {PHYLO_DIM - 1}]")
            if i <= prev:
                raise CorpusError(f"{self.code}: phylogeny indices not strictly increasing")
            prev = i

    def dense(self) -> np.ndarray:
        vec = np.zeros(PHYLO_DIM, dtype=np.float64)
        if self.ones:
            vec[list(self.ones)] = 1.0
        return vec


@dataclass(frozen=True)
class FeatDescriptor:
    feat_id: str
    is_target: bool

    def __post_init__(self):
        if not self.feat_id:
            raise CorpusError("empty feature id")


class TypologyMatrix:
    """Languages x features grid of {0, 1, MISSING} cells.

    Cells are stored as an int8 array (`MISSING` = -1) indexed by the order of
    `languages` and `features`; the mapping view required by callers is exposed
    through :meth:`cell`.
    """

    def __init__(self, languages: list[str], features: list[FeatDescriptor],
                 values: np.ndarray):
        if values.shape != (len(languages), len(features)):
            raise CorpusError("typology value grid shape mismatch")
        bad = ~np.isin(values, (0, 1, MISSING))
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise CorpusError(f"cell ({languages[i]}, {features[j].feat_id}) outside {{0, 1, --}}")
        self.languages = list(languages)
        self.features = list(features)
        self.values = values.astype(np.int8)
        self.values.setflags(write=False)
        self.lang_index = {c: i for i, c in enumerate(self.languages)}
        self.feat_index = {f.feat_id: j for j, f in enumerate(self.features)}
        if len(self.lang_index) != len(self.languages):
            raise CorpusError("duplicate language row")
        if len(self.feat_index) != len(self.features):
            raise CorpusError("duplicate feature column")

    @property
    def target_features(self) -> list[str]:
        return [f.feat_id for f in self.features if f.is_target]

    def cell(self, code: str, feat_id: str) -> int:
        return int(self.values[self.lang_index[code], self.feat_index[feat_id]])

    def observed_fraction(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float((self.values != MISSING).sum()) / self.values.size

    def present_languages(self, feat_id: str) -> list[str]:
        j = self.feat_index[feat_id]
        return [self.languages[i] for i in np.nonzero(self.values[:, j] != MISSING)[0]]

    def masked(self, cells: list[tuple[str, str]]) -> "TypologyMatrix":
        """Copy with the given (language, feature) cells set to MISSING."""
        values = self.values.copy()
        for code, feat_id in cells:
            values[self.lang_index[code], self.feat_index[feat_id]] = MISSING
        return TypologyMatrix(self.languages, self.features, values)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iso639_3"] + [f.feat_id for f in self.features])
            for i, code in enumerate(self.languages):
                row = ["--" if v == MISSING else str(int(v)) for v in self.values[i]]
                writer.writerow([code] + row)


@dataclass(frozen=True)
class SwadeshEntry:
    concept_id: str
    code: str
    word: str
    upos: str

    def __post_init__(self):
        if not self.concept_id or not self.word:
            raise CorpusError("swadesh entry with empty concept or word")
        if not is_lang_code(self.code):
            raise CorpusError(f"swadesh entry with invalid code {self.code!r}")
        if self.upos not in UPOS_SET:
            raise CorpusError(f"swadesh entry with unknown UPOS {self.upos!r}")


@dataclass
class SwadeshList:
    entries: list[SwadeshEntry] = field(default_factory=list)

    def for_language(self, code: str) -> list[SwadeshEntry]:
        return [e for e in self.entries if e.code == code]

    def english_reference(self, english_code: str = "eng") -> dict[str, str]:
        """concept_id -> UPOS tag of the English entry for that concept."""
        return {e.concept_id: e.upos for e in self.entries if e.code == english_code}


# PosCorpus: code -> list of sentences, each a list of UPOS tags.
PosCorpus = dict[str, list[list[str]]]


def _parse_optional(raw: str, kind, column: str, *, path, line):
    if raw == "":
        return None
    try:
        value = kind(raw)
    except ValueError:
        raise CorpusError(f"cannot parse {raw!r} as {kind.__name__}",
                          path=path, line=line, column=column) from None
    return value


def load_language_meta(path: str | Path) -> list[LanguageMeta]:
    """Parse ``languages.tsv``; one record per data line.

    Empty fields become missing; the scripts field is split on ';' and the
    inconsistently annotated Braille code ``Brai`` is dropped with a warning.
    """
    path = Path(path)
    records: list[LanguageMeta] = []
    seen: set[str] = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusError("empty file", path=path) from None
        if tuple(header) != META_COLUMNS:
            raise CorpusError(f"header {header!r} != {list(META_COLUMNS)}", path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(META_COLUMNS):
                raise CorpusError(f"expected {len(META_COLUMNS)} fields, got {len(row)}",
                                  path=path, line=lineno, column=META_COLUMNS[min(len(row), 8)])
            code = _require_lang_code(row[0], path=path, line=lineno)
            if code in seen:
                raise CorpusError(f"duplicate language {code!r}", path=path, line=lineno,
                                  column="iso639_3")
            seen.add(code)
            scripts = set()
            for script in filter(None, row[8].split(";")):
                if script in REJECTED_SCRIPTS:
                    logger.warning("%s:%d: dropping rejected script %r for %s",
                                   path, lineno, script, code)
                    continue
                if len(script) != 4:
                    raise CorpusError(f"script {script!r} is not a 4-letter ISO 15924 code",
                                      path=path, line=lineno, column="scripts")
                scripts.add(script)
            try:
                records.append(LanguageMeta(
                    code=code,
                    family=row[1] or None,
                    geo_lat=_parse_optional(row[2], float, "latitude", path=path, line=lineno),
                    geo_long=_parse_optional(row[3], float, "longitude", path=path, line=lineno),
                    wiki_size=_parse_optional(row[4], int, "wiki_size", path=path, line=lineno),
                    num_speakers=_parse_optional(row[5], int, "num_speakers", path=path, line=lineno),
                    aes_status=_parse_optional(row[6], int, "aes_status", path=path, line=lineno),
                    lang_group=_parse_optional(row[7], int, "lang_group", path=path, line=lineno),
                    scripts=frozenset(scripts),
                ))
            except CorpusError as err:
                raise CorpusError(str(err), path=path, line=lineno) from None
    return records


def load_targets(path: str | Path) -> set[str]:
    """Read the target-feature manifest: one feature id per line."""
    path = Path(path)
    targets = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        feat = line.strip()
        if not feat:
            continue
        targets.add(feat)
    if not targets:
        raise CorpusError("no target features listed", path=path)
    return targets


def load_typology(path: str | Path, targets: set[str] | None = None) -> TypologyMatrix:
    """Parse ``typology.csv`` into a TypologyMatrix.

    ``--`` cells map to MISSING. A feature is a prediction target when listed
    in the manifest; without a manifest the ``S_``/``P_`` prefix rule applies.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusError("empty file", path=path) from None
        if not header or header[0] != "iso639_3":
            raise CorpusError(f"first column must be 'iso639_3', got {header[:1]!r}",
                              path=path, line=1)
        feat_ids = header[1:]
        languages: list[str] = []
        rows: list[list[int]] = []
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CorpusError(f"expected {len(header)} fields, got {len(row)}",
                                  path=path, line=lineno)
            code = _require_lang_code(row[0], path=path, line=lineno)
            if code in seen:
                raise CorpusError(f"duplicate language row {code!r}", path=path, line=lineno)
            seen.add(code)
            cells = []
            for feat, raw in zip(feat_ids, row[1:]):
                if raw == "--":
                    cells.append(MISSING)
                elif raw in ("0", "1"):
                    cells.append(int(raw))
                else:
                    raise CorpusError(f"cell value {raw!r} outside {{0, 1, --}} at ({code}, {feat})",
                                      path=path, line=lineno, column=feat)
            languages.append(code)
            rows.append(cells)

    def is_target(feat: str) -> bool:
        if targets is not None:
            return feat in targets
        return feat.startswith(("S_", "P_"))

    features = [FeatDescriptor(f, is_target(f)) for f in feat_ids]
    values = (np.array(rows, dtype=np.int8) if rows
              else np.zeros((0, len(features)), dtype=np.int8))
    return TypologyMatrix(languages, features, values)


def load_phylogeny(path: str | Path) -> dict[str, PhylogenyVector]:
    """Parse ``phylogeny.txt`` sparse vectors, one language per line."""
    path = Path(path)
    vectors: dict[str, PhylogenyVector] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusError("expected 'iso639_3<TAB>indices'", path=path, line=lineno)
        code = _require_lang_code(parts[0], path=path, line=lineno)
        if code in vectors:
            raise CorpusError(f"duplicate phylogeny line for {code!r}", path=path, line=lineno)
        ones: list[int] = []
        if parts[1].strip():
            for tok in parts[1].split(","):
                try:
                    ones.append(int(tok))
                except ValueError:
                    raise CorpusError(f"bad index {tok!r}", path=path, line=lineno) from None
        try:
            vectors[code] = PhylogenyVector(code, tuple(sorted(set(ones))))
        except CorpusError as err:
            raise CorpusError(str(err), path=path, line=lineno) from None
        if len(set(ones)) != len(ones):
            raise CorpusError(f"duplicate phylogeny index for {code!r}", path=path, line=lineno)
    return vectors


def load_pos_corpus(directory: str | Path) -> PosCorpus:
    """Read every ``<iso639_3>.pos`` file in a directory.

    Files whose stem is not a valid language code are skipped with a warning;
    an unknown tag token is a hard error naming the file and line.
    """
    directory = Path(directory)
    corpus: PosCorpus = {}
    for path in sorted(directory.glob("*.pos")):
        code = path.stem
        if not is_lang_code(code):
            logger.warning("%s: filename is not a valid ISO 639-3 code, skipping", path)
            continue
        sentences: list[list[str]] = []
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            tags = line.split()
            if not tags:
                continue
            for tag in tags:
                if tag not in UPOS_SET:
                    raise CorpusError(f"unknown UPOS tag {tag!r}", path=path, line=lineno)
            sentences.append(tags)
        corpus[code] = sentences
    return corpus


def load_swadesh(path: str | Path) -> SwadeshList:
    """Parse ``swadesh.tsv`` entries."""
    path = Path(path)
    entries: list[SwadeshEntry] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 4:
                raise CorpusError(f"expected 4 fields, got {len(row)}", path=path, line=lineno)
            try:
                entries.append(SwadeshEntry(row[0], row[1], row[2], row[3]))
            except CorpusError as err:
                raise CorpusError(str(err), path=path, line=lineno) from None
    return SwadeshList(entries)
