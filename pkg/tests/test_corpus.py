import numpy as np
import pytest

from typofill.corpus import (
    MISSING,
    CorpusError,
    FeatDescriptor,
    LanguageMeta,
    PhylogenyVector,
    TypologyMatrix,
    is_lang_code,
    load_language_meta,
    load_phylogeny,
    load_pos_corpus,
    load_swadesh,
    load_targets,
    load_typology,
)

META_HEADER = "iso639_3\tfamily\tlatitude\tlongitude\twiki_size\tnum_speakers\taes_status\tlang_group\tscripts\n"


def write(path, text):
    path.write_text(text)
    return path


class TestLanguageMeta:
    def test_direct_field_mapping(self, tmp_path):
        p = write(tmp_path / "languages.tsv",
                  META_HEADER + "eng\tIndo-European\t53.0\t-1.0\t6900000\t380000000\t6\t5\tLatn\n")
        (rec,) = load_language_meta(p)
        assert rec.code == "eng"
        assert rec.family == "Indo-European"
        assert rec.geo_lat == 53.0
        assert rec.geo_long == -1.0
        assert rec.wiki_size == 6900000
        assert rec.num_speakers == 380000000
        assert rec.aes_status == 6
        assert rec.lang_group == 5
        assert rec.scripts == {"Latn"}

    def test_empty_field_is_missing(self, tmp_path):
        p = write(tmp_path / "languages.tsv",
                  META_HEADER + "deu\tIndo-European\t52.0\t10.0\t\t\t\t\tLatn\n")
        (rec,) = load_language_meta(p)
        assert rec.wiki_size is None
        assert rec.num_speakers is None
        assert rec.aes_status is None
        assert rec.lang_group is None

    def test_braille_script_dropped_with_warning(self, tmp_path, caplog):
        p = write(tmp_path / "languages.tsv",
                  META_HEADER + "eng\tIndo-European\t53.0\t-1.0\t100\t200\t6\t5\tLatn;Brai\n")
        with caplog.at_level("WARNING"):
            (rec,) = load_language_meta(p)
        assert rec.scripts == {"Latn"}
        assert any("Brai" in r.message for r in caplog.records)

    def test_out_of_range_latitude(self, tmp_path):
        p = write(tmp_path / "languages.tsv",
                  META_HEADER + "abc\tFam\t95.0\t0.0\t\t\t\t\tLatn\n")
        with pytest.raises(CorpusError, match="latitude"):
            load_language_meta(p)

    def test_malformed_row_names_location(self, tmp_path):
        p = write(tmp_path / "languages.tsv",
                  META_HEADER + "abc\tFam\t1.0\t2.0\tnotanumber\t\t\t\tLatn\n")
        with pytest.raises(CorpusError, match="line 2") as err:
            load_language_meta(p)
        assert "wiki_size" in str(err.value)

    def test_wrong_field_count(self, tmp_path):
        p = write(tmp_path / "languages.tsv", META_HEADER + "abc\tFam\t1.0\n")
        with pytest.raises(CorpusError, match="line 2"):
            load_language_meta(p)

    def test_duplicate_language(self, tmp_path):
        row = "abc\tFam\t1.0\t2.0\t\t\t\t\tLatn\n"
        p = write(tmp_path / "languages.tsv", META_HEADER + row + row)
        with pytest.raises(CorpusError, match="duplicate"):
            load_language_meta(p)

    def test_invalid_code_rejected(self):
        assert is_lang_code("eng")
        assert not is_lang_code("en")
        assert not is_lang_code("Eng")
        assert not is_lang_code("e1g")
        with pytest.raises(CorpusError):
            LanguageMeta(code="EN")


class TestTypology:
    def test_two_by_two_one_missing(self, tmp_path):
        p = write(tmp_path / "typology.csv",
                  "iso639_3,S_A,S_B\naaa,1,--\nbbb,0,1\n")
        matrix = load_typology(p)
        assert matrix.cell("aaa", "S_A") == 1
        assert matrix.cell("aaa", "S_B") == MISSING
        assert matrix.cell("bbb", "S_A") == 0
        assert matrix.cell("bbb", "S_B") == 1
        assert int((matrix.values == MISSING).sum()) == 1

    def test_header_only_is_empty_matrix(self, tmp_path):
        p = write(tmp_path / "typology.csv", "iso639_3,S_A,S_B\n")
        matrix = load_typology(p)
        assert matrix.languages == []
        assert len(matrix.features) == 2
        assert matrix.observed_fraction() == 0.0

    def test_duplicate_language_row(self, tmp_path):
        p = write(tmp_path / "typology.csv", "iso639_3,S_A\naaa,1\naaa,0\n")
        with pytest.raises(CorpusError, match="duplicate"):
            load_typology(p)

    def test_bad_cell_names_coordinates(self, tmp_path):
        p = write(tmp_path / "typology.csv", "iso639_3,S_A,S_B\naaa,1,2\n")
        with pytest.raises(CorpusError) as err:
            load_typology(p)
        assert "aaa" in str(err.value) and "S_B" in str(err.value)

    def test_target_manifest_controls_is_target(self, tmp_path):
        p = write(tmp_path / "typology.csv", "iso639_3,S_A,S_B,X_C\naaa,1,0,1\n")
        matrix = load_typology(p, targets={"S_A"})
        assert matrix.target_features == ["S_A"]
        # without a manifest, the S_/P_ prefix rule applies
        matrix = load_typology(p)
        assert matrix.target_features == ["S_A", "S_B"]

    def test_round_trip_is_cell_identical(self, tmp_path):
        p = write(tmp_path / "typology.csv",
                  "iso639_3,S_A,S_B,P_C\naaa,1,--,0\nbbb,--,1,1\nccc,0,0,--\n")
        matrix = load_typology(p)
        out = tmp_path / "again.csv"
        matrix.save(out)
        again = load_typology(out)
        assert again.languages == matrix.languages
        assert [f.feat_id for f in again.features] == [f.feat_id for f in matrix.features]
        assert np.array_equal(again.values, matrix.values)

    def test_observed_fraction_matches_brute_force(self, tmp_path):
        rng = np.random.default_rng(5)
        langs = ["aaa", "bbb", "ccc", "ddd"]
        lines = ["iso639_3," + ",".join(f"S_F{i}" for i in range(7))]
        for code in langs:
            cells = rng.choice(["0", "1", "--"], size=7)
            lines.append(code + "," + ",".join(cells))
        p = write(tmp_path / "typology.csv", "\n".join(lines) + "\n")
        matrix = load_typology(p)
        brute = sum(1 for c in langs for f in matrix.features
                    if matrix.cell(c, f.feat_id) != MISSING)
        assert matrix.observed_fraction() == brute / (len(langs) * 7)

    def test_loader_never_returns_partial_matrix(self, tmp_path):
        p = write(tmp_path / "typology.csv", "iso639_3,S_A\naaa,1\nbbb,bad\n")
        with pytest.raises(CorpusError):
            load_typology(p)


class TestPhylogeny:
    def test_parse_sparse_lines(self, tmp_path):
        p = write(tmp_path / "phylogeny.txt", "aaa\t0,5,17\nbbb\t\n")
        vecs = load_phylogeny(p)
        assert vecs["aaa"].ones == (0, 5, 17)
        assert vecs["bbb"].ones == ()
        dense = vecs["aaa"].dense()
        assert dense.shape == (3719,)
        assert dense.sum() == 3.0

    def test_out_of_range_index(self, tmp_path):
        p = write(tmp_path / "phylogeny.txt", "aaa\t3719\n")
        with pytest.raises(CorpusError, match="3719"):
            load_phylogeny(p)

    def test_strictly_increasing_invariant(self):
        with pytest.raises(CorpusError):
            PhylogenyVector("aaa", (3, 3))
        with pytest.raises(CorpusError):
            PhylogenyVector("aaa", (5, 2))


class TestPosCorpus:
    def test_one_sentence(self, tmp_path):
        (tmp_path / "deu.pos").write_text("DET NOUN VERB\n")
        corpus = load_pos_corpus(tmp_path)
        assert corpus["deu"] == [["DET", "NOUN", "VERB"]]

    def test_invalid_filename_skipped_with_warning(self, tmp_path, caplog):
        (tmp_path / "invalid1.pos").write_text("DET NOUN VERB\n")
        with caplog.at_level("WARNING"):
            corpus = load_pos_corpus(tmp_path)
        assert corpus == {}
        assert any("invalid1" in r.message for r in caplog.records)

    def test_unknown_tag_is_hard_error_with_location(self, tmp_path):
        (tmp_path / "deu.pos").write_text("DET NOUN VERB\nNOUNN VERB ADJ\n")
        with pytest.raises(CorpusError, match="line 2") as err:
            load_pos_corpus(tmp_path)
        assert "NOUNN" in str(err.value)
        assert "deu" in str(err.value)


class TestSwadeshAndTargets:
    def test_swadesh_entries(self, tmp_path):
        p = write(tmp_path / "swadesh.tsv",
                  "c001\teng\twater\tNOUN\nc001\tdeu\twasser\tNOUN\n")
        lst = load_swadesh(p)
        assert len(lst.entries) == 2
        assert lst.english_reference() == {"c001": "NOUN"}
        assert [e.word for e in lst.for_language("deu")] == ["wasser"]

    def test_swadesh_bad_tag(self, tmp_path):
        p = write(tmp_path / "swadesh.tsv", "c001\teng\twater\tNOUNN\n")
        with pytest.raises(CorpusError, match="line 1"):
            load_swadesh(p)

    def test_targets_file(self, tmp_path):
        p = write(tmp_path / "targets.txt", "S_A\n\nS_B\n")
        assert load_targets(p) == {"S_A", "S_B"}

    def test_feat_descriptor_nonempty(self):
        with pytest.raises(CorpusError):
            FeatDescriptor("", True)


def test_matrix_rejects_bad_values():
    with pytest.raises(CorpusError):
        TypologyMatrix(["aaa"], [FeatDescriptor("S_A", True)],
                       np.array([[7]], dtype=np.int8))
