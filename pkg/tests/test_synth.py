import json

import pytest

from typofill.corpus import (
    MISSING,
    load_language_meta,
    load_phylogeny,
    load_pos_corpus,
    load_targets,
    load_typology,
)
from typofill.synth import SynthError, generate_synthetic


def load_all(path):
    targets = load_targets(path / "targets.txt")
    return (load_typology(path / "typology.csv", targets),
            load_language_meta(path / "languages.tsv"),
            load_phylogeny(path / "phylogeny.txt"))


class TestFamDetermined:
    def test_planted_feature_constant_within_family(self, tmp_path):
        generate_synthetic(tmp_path, 60, 6, seed=1, scenario="fam_determined",
                           n_families=3)
        matrix, meta, _ = load_all(tmp_path)
        manifest = json.loads((tmp_path / "synth_manifest.json").read_text())
        by_family = {}
        for m in meta:
            value = matrix.cell(m.code, manifest["planted_feature"])
            by_family.setdefault(m.family, set()).add(value)
        assert len(by_family) == 3
        assert all(len(values) == 1 for values in by_family.values())

    def test_planted_labels_recorded(self, tmp_path):
        manifest = generate_synthetic(tmp_path, 30, 4, seed=2,
                                      scenario="fam_determined")
        matrix, _, _ = load_all(tmp_path)
        for code, label in manifest["planted_labels"].items():
            assert matrix.cell(code, manifest["planted_feature"]) == label

    def test_phylogeny_encodes_family(self, tmp_path):
        generate_synthetic(tmp_path, 30, 4, seed=3, scenario="fam_determined",
                           n_families=4)
        matrix, meta, phylo = load_all(tmp_path)
        fams = {}
        for m in meta:
            fams.setdefault(m.family, set()).add(phylo[m.code].ones[0])
        # one shared leading index per family
        assert all(len(v) == 1 for v in fams.values())
        assert len({next(iter(v)) for v in fams.values()}) == 4


class TestWikiMissingness:
    def test_missingness_follows_wiki_threshold(self, tmp_path):
        manifest = generate_synthetic(tmp_path, 40, 5, seed=4,
                                      scenario="wiki_missingness")
        matrix, meta, _ = load_all(tmp_path)
        threshold = manifest["wiki_threshold"]
        for m in meta:
            observed = all(matrix.cell(m.code, f.feat_id) != MISSING
                           for f in matrix.features)
            missing = all(matrix.cell(m.code, f.feat_id) == MISSING
                          for f in matrix.features)
            assert m.wiki_size is not None
            if m.wiki_size >= threshold:
                assert observed
            else:
                assert missing


class TestIidNoise:
    def test_observed_fraction_close_to_request(self, tmp_path):
        generate_synthetic(tmp_path, 100, 20, seed=5, scenario="iid_noise",
                           observed_fraction=0.289)
        matrix, _, _ = load_all(tmp_path)
        assert abs(matrix.observed_fraction() - 0.289) <= 0.02


class TestPosOrder:
    def test_verb_final_trigrams_dominate_for_label_one(self, tmp_path):
        manifest = generate_synthetic(tmp_path, 24, 4, seed=6, scenario="pos_order")
        corpus = load_pos_corpus(tmp_path / "pos")
        assert set(corpus) == set(manifest["planted_labels"])

        def verb_final_share(code):
            """Among VERB-containing trigrams, the share with VERB in final slot."""
            final = containing = 0
            for sent in corpus[code]:
                for i in range(len(sent) - 2):
                    gram = sent[i:i + 3]
                    if "VERB" in gram:
                        containing += 1
                        if gram[2] == "VERB":
                            final += 1
            return final / containing

        shares = {code: verb_final_share(code)
                  for code in manifest["planted_labels"]}
        ones = [shares[c] for c, v in manifest["planted_labels"].items() if v == 1]
        zeros = [shares[c] for c, v in manifest["planted_labels"].items() if v == 0]
        assert min(ones) > max(zeros)
        assert min(ones) == 1.0  # verb-final corpora have no medial-VERB trigrams
        for code, label in manifest["planted_labels"].items():
            for sent in corpus[code]:
                assert (sent[-1] == "VERB") == (label == 1)

    def test_quality_files_written_with_recall_rule(self, tmp_path):
        manifest = generate_synthetic(tmp_path, 20, 3, seed=7, scenario="pos_order")
        stats_lines = (tmp_path / "pos_stats.tsv").read_text().splitlines()[1:]
        for line in stats_lines:
            code, _, pct_unk, _, _ = line.split("\t")
            assert manifest["recalls"][code] == pytest.approx(100.0 - float(pct_unk))
        assert (tmp_path / "swadesh.tsv").exists()
        assert (tmp_path / "gold_recalls.tsv").exists()


class TestGeneratorContract:
    def test_same_seed_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_synthetic(a, 25, 5, seed=9, scenario="pos_order")
        generate_synthetic(b, 25, 5, seed=9, scenario="pos_order")
        files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_invalid_scenario(self, tmp_path):
        with pytest.raises(SynthError, match="scenario"):
            generate_synthetic(tmp_path, 20, 4, seed=0, scenario="nope")

    def test_minimum_size(self, tmp_path):
        with pytest.raises(SynthError):
            generate_synthetic(tmp_path, 5, 4, seed=0, scenario="iid_noise")

    def test_outputs_load_cleanly(self, tmp_path):
        for scenario in ("fam_determined", "wiki_missingness", "iid_noise",
                         "pos_order"):
            out = tmp_path / scenario
            generate_synthetic(out, 15, 3, seed=11, scenario=scenario)
            matrix, meta, phylo = load_all(out)
            assert len(matrix.languages) == 15
            assert len(matrix.features) == 3
            assert len(meta) == 15
            assert len(phylo) == 15
            assert len(matrix.target_features) == 3
