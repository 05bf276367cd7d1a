"""Synthetic dataset generator with known ground-truth mechanisms.

Each scenario writes a full input-file set (languages.tsv, typology.csv,
phylogeny.txt, targets.txt, plus POS files where relevant) and a
``synth_manifest.json`` documenting the planted mechanism:

``fam_determined``    one feature is a deterministic function of the language
                      family and independent of every other typology cell.
``wiki_missingness``  cell missingness is decided by a wiki_size threshold.
``iid_noise``         every cell is an independent coin; no method can beat
                      the base-rate predictor.
``pos_order``         one word-order feature follows the language's POS
                      trigram distribution (verb-final vs verb-medial
                      corpora), exercising the n-gram path.
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path

import numpy as np

from .corpus import MISSING
from .mlcore import child_rng

SCENARIOS = ("fam_determined", "wiki_missingness", "iid_noise", "pos_order")

_SCRIPT_POOL = ("Latn", "Cyrl", "Arab", "Deva")
_PREFIX_TAGS = ("NOUN", "DET", "ADJ", "PRON", "ADV", "ADP")


class SynthError(ValueError):
    pass


def _lang_codes(n: int) -> list[str]:
    codes = []
    for combo in itertools.product("abcdefghijklmnopqrstuvwxyz", repeat=3):
        codes.append("".join(combo))
        if len(codes) == n:
            return codes
    raise SynthError("too many languages requested")


def _write_languages(path: Path, codes, families, rng, *, wiki_sizes=None,
                     missing_rate=0.08) -> None:
    lines = ["\t".join(["iso639_3", "family", "latitude", "longitude", "wiki_size",
                        "num_speakers", "aes_status", "lang_group", "scripts"])]
    for i, code in enumerate(codes):
        def maybe(value: str) -> str:
            return "" if rng.random() < missing_rate else value
        wiki = wiki_sizes[i] if wiki_sizes is not None else int(np.expm1(rng.uniform(2, 16)))
        fields = [
            code,
            families[i],
            maybe(f"{rng.uniform(-60, 70):.2f}"),
            maybe(f"{rng.uniform(-180, 180):.2f}"),
            str(wiki),
            maybe(str(int(np.expm1(rng.uniform(4, 19))))),
            maybe(str(int(rng.integers(1, 7)))),
            maybe(str(int(rng.integers(0, 6)))),
            ";".join(sorted(rng.choice(_SCRIPT_POOL, size=int(rng.integers(1, 3)),
                                       replace=False))),
        ]
        lines.append("\t".join(fields))
    path.write_text("\n".join(lines) + "\n")


def _write_phylogeny(path: Path, codes, fam_indices, n_families) -> None:
    lines = []
    for i, code in enumerate(codes):
        ones = sorted({int(fam_indices[i]), n_families + i})
        lines.append(f"{code}\t{','.join(str(x) for x in ones)}")
    path.write_text("\n".join(lines) + "\n")


def _write_typology(path: Path, codes, feat_ids, cells: np.ndarray) -> None:
    lines = ["iso639_3," + ",".join(feat_ids)]
    for i, code in enumerate(codes):
        row = ["--" if v == MISSING else str(int(v)) for v in cells[i]]
        lines.append(code + "," + ",".join(row))
    path.write_text("\n".join(lines) + "\n")


def _noise_cells(rng, n_langs, n_feats, observed_fraction, value_rate) -> np.ndarray:
    values = (rng.random((n_langs, n_feats)) < value_rate).astype(np.int8)
    observed = rng.random((n_langs, n_feats)) < observed_fraction
    values[~observed] = MISSING
    return values


def _verb_final_sentence(rng) -> list[str]:
    length = int(rng.integers(4, 9))
    tags = [str(rng.choice(_PREFIX_TAGS)) for _ in range(length - 1)]
    return tags + ["VERB"]


def _verb_medial_sentence(rng) -> list[str]:
    length = int(rng.integers(4, 9))
    tags = [str(rng.choice(_PREFIX_TAGS)) for _ in range(length - 1)]
    tags.insert(length // 2, "VERB")
    return tags


def _write_pos_quality_files(out: Path, codes, rng) -> dict[str, float]:
    """Swadesh list, tagger stats, and gold recalls tied to pct_unk."""
    concepts = [f"c{i:03d}" for i in range(20)]
    eng_tags = [str(rng.choice(("NOUN", "VERB", "ADJ", "PRON"))) for _ in concepts]
    swadesh_lines = [f"{c}\teng\tword_{c}\t{t}" for c, t in zip(concepts, eng_tags)]
    stats_lines = ["\t".join(["iso639_3", "avg_confidence", "pct_unk",
                              "avg_len_subwords", "avg_len_chars"])]
    gold_lines = []
    recalls = {}
    for code in codes:
        agreement = rng.uniform(0.4, 1.0)
        for c, t in zip(concepts, eng_tags):
            tag = t if rng.random() < agreement else str(rng.choice(("ADV", "ADP", "DET")))
            swadesh_lines.append(f"{c}\t{code}\tword_{c}_{code}\t{tag}")
        pct_unk = round(float(rng.uniform(0.0, 60.0)), 4)  # as written to the file
        recall = 100.0 - pct_unk
        recalls[code] = recall
        stats_lines.append("\t".join([
            code, f"{rng.uniform(0.5, 0.99):.4f}", f"{pct_unk:.4f}",
            f"{rng.uniform(1.1, 3.0):.4f}", f"{rng.uniform(3.0, 9.0):.4f}"]))
        gold_lines.append(f"{code}\t{recall:.4f}")
    (out / "swadesh.tsv").write_text("\n".join(swadesh_lines) + "\n")
    (out / "pos_stats.tsv").write_text("\n".join(stats_lines) + "\n")
    (out / "gold_recalls.tsv").write_text("\n".join(gold_lines) + "\n")
    return recalls


def generate_synthetic(out_dir: str | Path, n_langs: int, n_feats: int, seed: int,
                       scenario: str, *, observed_fraction: float = 0.7,
                       n_families: int = 4, value_rate: float = 0.7) -> dict:
    """Write a synthetic input-file set; returns the ground-truth manifest."""
    if scenario not in SCENARIOS:
        raise SynthError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    if n_langs < 10:
        raise SynthError("need at least 10 languages")
    if n_feats < 2:
        raise SynthError("need at least 2 features")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = child_rng(seed, "synth", scenario)
    codes = _lang_codes(n_langs)
    fam_indices = np.array([i % n_families for i in range(n_langs)])
    perm = rng.permutation(n_langs)
    fam_indices = fam_indices[perm]
    families = [f"fam{fam_indices[i]}" for i in range(n_langs)]

    manifest: dict = {
        "scenario": scenario, "n_langs": n_langs, "n_feats": n_feats,
        "seed": seed, "n_families": n_families,
        "observed_fraction": observed_fraction, "value_rate": value_rate,
    }

    if scenario == "fam_determined":
        feat_ids = ["S_PLANTED_FAM"] + [f"S_NOISE_{i:02d}" for i in range(n_feats - 1)]
        cells = _noise_cells(rng, n_langs, n_feats, observed_fraction, value_rate)
        planted = (fam_indices % 2).astype(np.int8)
        cells[:, 0] = planted  # fully observed, family-determined
        manifest["planted_feature"] = feat_ids[0]
        manifest["mechanism"] = "cell = family_index % 2, independent of all other cells"
        manifest["planted_labels"] = {codes[i]: int(planted[i]) for i in range(n_langs)}
        wiki_sizes = None
    elif scenario == "wiki_missingness":
        feat_ids = [f"S_NOISE_{i:02d}" for i in range(n_feats)]
        wiki_sizes = [int(np.expm1(rng.uniform(2, 18))) for _ in range(n_langs)]
        threshold = float(np.median(wiki_sizes))
        values = (rng.random((n_langs, n_feats)) < value_rate).astype(np.int8)
        observed = np.array([w >= threshold for w in wiki_sizes])
        cells = values
        cells[~observed, :] = MISSING
        manifest["wiki_threshold"] = threshold
        manifest["mechanism"] = "all cells of a language observed iff wiki_size >= threshold"
        manifest["observed_languages"] = [codes[i] for i in range(n_langs) if observed[i]]
    elif scenario == "iid_noise":
        feat_ids = [f"S_NOISE_{i:02d}" for i in range(n_feats)]
        cells = _noise_cells(rng, n_langs, n_feats, observed_fraction, value_rate)
        manifest["mechanism"] = "every cell an independent Bernoulli coin"
        wiki_sizes = None
    else:  # pos_order
        feat_ids = ["S_VERB_FINAL"] + [f"S_NOISE_{i:02d}" for i in range(n_feats - 1)]
        cells = _noise_cells(rng, n_langs, n_feats, observed_fraction, value_rate)
        order_label = (rng.permutation(n_langs) < n_langs // 2).astype(np.int8)
        cells[:, 0] = order_label
        pos_dir = out / "pos"
        pos_dir.mkdir(exist_ok=True)
        for i, code in enumerate(codes):
            lang_rng = child_rng(seed, "synth-pos", code)
            make = _verb_final_sentence if order_label[i] == 1 else _verb_medial_sentence
            sentences = [" ".join(make(lang_rng)) for _ in range(int(lang_rng.integers(40, 80)))]
            (pos_dir / f"{code}.pos").write_text("\n".join(sentences) + "\n")
        manifest["planted_feature"] = feat_ids[0]
        manifest["mechanism"] = ("cell = 1 iff the language's corpus is verb-final; "
                                 "metadata independent of the label")
        manifest["planted_labels"] = {codes[i]: int(order_label[i]) for i in range(n_langs)}
        manifest["recalls"] = _write_pos_quality_files(out, codes, rng)
        wiki_sizes = None

    _write_languages(out / "languages.tsv", codes, families, rng,
                     wiki_sizes=wiki_sizes,
                     missing_rate=0.0 if scenario == "wiki_missingness" else 0.08)
    _write_phylogeny(out / "phylogeny.txt", codes, fam_indices, n_families)
    _write_typology(out / "typology.csv", codes, feat_ids, cells)
    (out / "targets.txt").write_text("\n".join(feat_ids) + "\n")
    (out / "synth_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
