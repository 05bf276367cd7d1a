import json

import pytest

from typofill.cli import main

COMMON = ["--seed", "3", "--presence-trials", "2", "--presence-folds", "3"]
TYPO = ["--typology-trials", "3", "--typology-folds", "2"]


@pytest.fixture(scope="module")
def pipeline_dirs(tmp_path_factory):
    """One full staged run on a small fam_determined dataset."""
    base = tmp_path_factory.mktemp("pipeline")
    data = base / "data"
    out = base / "out"
    assert main(["synth", "--out", str(data), "--langs", "24", "--feats", "3",
                 "--seed", "5", "--scenario", "fam_determined"]) == 0
    args = ["--data", str(data), "--out", str(out)]
    assert main(["validate", *args]) == 0
    assert main(["presence", *args, *COMMON, "--sampler", "random"]) == 0
    assert main(["rank", *args]) == 0
    assert main(["eval-kfold", *args, "--seed", "3", *TYPO, "--sampler", "random"]) == 0
    assert main(["eval-missing", *args, "--seed", "3", "--typology-trials", "3",
                 "--ratio-threshold", "0.0", "--sampler", "random"]) == 0
    assert main(["impute", *args, "--seed", "3", *TYPO, "--sampler", "random"]) == 0
    assert main(["report", *args]) == 0
    return data, out


class TestPipeline:
    def test_stage_artifacts_exist(self, pipeline_dirs):
        _, out = pipeline_dirs
        for name in ("validate.json", "presence_model.json", "ranking.csv",
                     "missing_ratio.csv", "missing_ratio_hist.csv", "table1.csv",
                     "table2.csv", "completed.csv", "provenance.csv",
                     "report.json", "manifest.json"):
            assert (out / name).exists(), name

    def test_manifest_records_all_stages(self, pipeline_dirs):
        data, out = pipeline_dirs
        manifest = json.loads((out / "manifest.json").read_text())
        stages = manifest["stages"]
        for stage in ("validate", "presence", "rank", "eval-kfold",
                      "eval-missing", "impute", "report"):
            assert stage in stages
            assert stages[stage]["versions"]["typofill"]
        inputs = stages["presence"]["inputs"]
        assert any(path.endswith("typology.csv") for path in inputs)
        for digest in inputs.values():
            assert len(digest) == 64

    def test_validate_summary(self, pipeline_dirs):
        _, out = pipeline_dirs
        summary = json.loads((out / "validate.json").read_text())
        assert summary["languages"] == 24
        assert summary["features"] == 3
        assert 0.0 < summary["observed_fraction"] <= 1.0

    def test_report_aggregates_tables(self, pipeline_dirs):
        _, out = pipeline_dirs
        report = json.loads((out / "report.json").read_text())
        assert "kfold" in report and report["kfold"]["knn_avg"] is not None
        assert "missing_ratio_histogram" in report

    def test_studies_written_per_feature(self, pipeline_dirs):
        _, out = pipeline_dirs
        studies = list((out / "studies").glob("study_*.json"))
        assert studies
        data = json.loads(studies[0].read_text())
        assert "best_assignment" in data

    def test_rerun_is_idempotent(self, pipeline_dirs):
        data, out = pipeline_dirs
        before = (out / "ranking.csv").read_bytes()
        assert main(["rank", "--data", str(data), "--out", str(out)]) == 0
        assert (out / "ranking.csv").read_bytes() == before


class TestErrors:
    def test_missing_prerequisite_names_stage(self, tmp_path, capsys):
        data = tmp_path / "data"
        out = tmp_path / "out"
        main(["synth", "--out", str(data), "--langs", "12", "--feats", "2",
              "--seed", "1", "--scenario", "iid_noise"])
        code = main(["rank", "--data", str(data), "--out", str(out)])
        assert code == 2
        err = capsys.readouterr().err
        assert "presence" in err

    def test_missing_input_file(self, tmp_path, capsys):
        code = main(["validate", "--data", str(tmp_path), "--out",
                     str(tmp_path / "out")])
        assert code == 2
        assert "languages.tsv" in capsys.readouterr().err

    def test_corrupt_input_exits_nonzero(self, tmp_path, capsys):
        data = tmp_path / "data"
        data.mkdir()
        (data / "languages.tsv").write_text("bad header\n")
        (data / "typology.csv").write_text("iso639_3,S_A\naaa,1\n")
        code = main(["validate", "--data", str(data), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_invalid_fraction_rejected(self, tmp_path, capsys):
        data = tmp_path / "data"
        main(["synth", "--out", str(data), "--langs", "12", "--feats", "2",
              "--seed", "1", "--scenario", "iid_noise"])
        code = main(["rank", "--data", str(data), "--out", str(tmp_path / "o"),
                     "--fraction", "1.5"])
        assert code == 1


class TestPosQualityStage:
    def test_quality_csv_written(self, tmp_path):
        data = tmp_path / "data"
        out = tmp_path / "out"
        assert main(["synth", "--out", str(data), "--langs", "30", "--feats", "2",
                     "--seed", "2", "--scenario", "pos_order"]) == 0
        assert main(["pos-quality", "--data", str(data), "--out", str(out),
                     "--seed", "2", "--quality-threshold", "70"]) == 0
        lines = (out / "quality.csv").read_text().splitlines()
        assert lines[0] == "iso639_3,estimated_recall,kept"
        assert len(lines) == 31


class TestConfigFile:
    def test_key_value_file_supplies_defaults(self, tmp_path):
        data = tmp_path / "data"
        out = tmp_path / "out"
        main(["synth", "--out", str(data), "--langs", "12", "--feats", "2",
              "--seed", "1", "--scenario", "iid_noise"])
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"# comment\ndata={data}\nout={out}\nseed=9\n")
        assert main(["validate", "--config", str(cfg)]) == 0
        assert (out / "validate.json").exists()

    def test_flags_override_config_file(self, tmp_path):
        data = tmp_path / "data"
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        main(["synth", "--out", str(data), "--langs", "12", "--feats", "2",
              "--seed", "1", "--scenario", "iid_noise"])
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"data={data}\nout={out_a}\n")
        assert main(["validate", "--config", str(cfg), "--out", str(out_b)]) == 0
        assert (out_b / "validate.json").exists()
        assert not (out_a / "validate.json").exists()


def test_synth_byte_identical_across_invocations(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["--langs", "15", "--feats", "3", "--seed", "7", "--scenario",
            "wiki_missingness"]
    assert main(["synth", "--out", str(a), *args]) == 0
    assert main(["synth", "--out", str(b), *args]) == 0
    for rel in sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file()):
        assert (a / rel).read_bytes() == (b / rel).read_bytes()
