"""Command-line pipeline: staged artifacts with a reproducibility manifest.

Each subcommand reads its inputs from ``--data`` (and prior stage outputs from
``--out``), writes its module's CSV/JSON artifacts into ``--out``, and records
config, seed, library versions, and input checksums under its stage key in
``manifest.json``. Outputs contain no timestamps: two runs with the same
manifest inputs are byte-identical, and reruns overwrite in place.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    CorpusError,
    load_language_meta,
    load_phylogeny,
    load_pos_corpus,
    load_swadesh,
    load_targets,
    load_typology,
)
from .featurize import FeatureConfig, extract_pos_ngrams
from .hpo import HpoError
from .mlcore import MlError
from .posquality import (
    PosQualityError,
    compute_quality_features,
    filter_languages,
    fit_quality_regressor,
    load_kept_languages,
    load_pos_stats,
    save_quality,
)
from .presence import (
    MissingRanking,
    PresenceError,
    PresenceModel,
    PresenceSettings,
    build_presence_dataset,
    missing_ratio,
    rank_missing,
    train_presence,
)
from .synth import SCENARIOS, SynthError, generate_synthetic
from .typology import (
    KnnBaselineConfig,
    TypologyError,
    TypologySettings,
    evaluate_kfold,
    evaluate_likely_missing,
    impute_all,
)

logger = logging.getLogger(__name__)

PIPELINE_ERRORS = (CorpusError, MlError, HpoError, PresenceError, TypologyError,
                   PosQualityError, SynthError, ValueError, FileNotFoundError)


class StageError(RuntimeError):
    """A prerequisite artifact is missing; names the stage to run first."""


@dataclass
class RunConfig:
    data_dir: Path
    out_dir: Path
    seed: int = 0
    threads: int = 1
    presence_trials: int = 10
    presence_folds: int = 5
    presence_kinds: tuple[str, ...] = ("gradient_boosting",)
    presence_sample: int | None = None
    typology_trials: int = 30
    typology_folds: int = 10
    fraction: float = 0.2
    ratio_threshold: float = 0.5
    quality_threshold: float = 80.0
    hpo_mode: str = "outer"
    sampler: str = "tpe_like"
    knn_k: int = 5

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must be in (0, 1]")
        if not 0.0 <= self.ratio_threshold <= 1.0:
            raise ValueError("ratio-threshold must be in [0, 1]")
        if not 0.0 <= self.quality_threshold <= 100.0:
            raise ValueError("quality-threshold must be in [0, 100]")
        if self.presence_folds < 2 or self.typology_folds < 2:
            raise ValueError("fold counts must be >= 2")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def typology_settings(self) -> TypologySettings:
        return TypologySettings(n_trials=self.typology_trials, folds=self.typology_folds,
                                seed=self.seed, sampler=self.sampler,
                                hpo_mode=self.hpo_mode, threads=self.threads,
                                knn=KnnBaselineConfig(self.knn_k))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, stage: str, config: dict, inputs: list[Path],
                    outputs: list[str]) -> None:
    path = out_dir / "manifest.json"
    manifest = {"stages": {}}
    if path.exists():
        try:
            manifest = json.loads(path.read_text())
        except json.JSONDecodeError:
            manifest = {"stages": {}}
    manifest.setdefault("stages", {})
    manifest["stages"][stage] = {
        "config": config,
        "versions": {
            "typofill": __version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
            "numpy": np.__version__,
        },
        "inputs": {str(p): _sha256(p) for p in sorted(set(inputs)) if p.exists()},
        "outputs": sorted(outputs),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))


@dataclass
class Inputs:
    matrix: object
    meta: list
    phylo: dict | None
    ngrams: object | None
    paths: list[Path]


def _load_inputs(data_dir: Path, *, need_pos: bool = False,
                 quality_csv: Path | None = None) -> Inputs:
    languages = data_dir / "languages.tsv"
    typology = data_dir / "typology.csv"
    for required in (languages, typology):
        if not required.exists():
            raise StageError(f"missing input file {required}")
    paths = [languages, typology]
    targets_path = data_dir / "targets.txt"
    targets = None
    if targets_path.exists():
        targets = load_targets(targets_path)
        paths.append(targets_path)
    matrix = load_typology(typology, targets)
    meta = load_language_meta(languages)
    phylo_path = data_dir / "phylogeny.txt"
    phylo = None
    if phylo_path.exists():
        phylo = load_phylogeny(phylo_path)
        paths.append(phylo_path)
    ngrams = None
    pos_dir = data_dir / "pos"
    if need_pos and pos_dir.is_dir():
        corpus = load_pos_corpus(pos_dir)
        ngrams = extract_pos_ngrams(corpus)
        paths.extend(sorted(pos_dir.glob("*.pos")))
        if quality_csv is not None and quality_csv.exists():
            kept = load_kept_languages(quality_csv)
            ngrams = ngrams.restrict(kept)
            paths.append(quality_csv)
    return Inputs(matrix, meta, phylo, ngrams, paths)


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(f"missing artifact {path.name}; run the '{stage}' stage first")
    return path


def cmd_validate(cfg: RunConfig) -> int:
    inputs = _load_inputs(cfg.data_dir, need_pos=True)
    matrix = inputs.matrix
    summary = {
        "languages": len(matrix.languages),
        "features": len(matrix.features),
        "target_features": len(matrix.target_features),
        "observed_fraction": round(matrix.observed_fraction(), 6),
        "languages_with_metadata": len(inputs.meta),
        "languages_with_phylogeny": len(inputs.phylo) if inputs.phylo else 0,
        "languages_with_pos": len(inputs.ngrams.per_lang) if inputs.ngrams else 0,
    }
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "validate.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    for key, value in summary.items():
        print(f"{key}: {value}")
    _write_manifest(cfg.out_dir, "validate", {"seed": cfg.seed}, inputs.paths,
                    ["validate.json"])
    return 0


def cmd_presence(cfg: RunConfig) -> int:
    inputs = _load_inputs(cfg.data_dir)
    config = FeatureConfig(use_pos_ngrams=False,
                           use_phylogeny=inputs.phylo is not None)
    sample = (cfg.presence_sample, cfg.seed) if cfg.presence_sample else None
    dataset = build_presence_dataset(inputs.matrix, inputs.meta, config, sample)
    settings = PresenceSettings(kinds=cfg.presence_kinds, n_trials=cfg.presence_trials,
                                folds=cfg.presence_folds, seed=cfg.seed,
                                sampler=cfg.sampler, threads=cfg.threads)
    bundle, studies = train_presence(inputs.matrix, inputs.meta, inputs.phylo,
                                     dataset, settings)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    bundle.save(cfg.out_dir / "presence_model.json")
    outputs = ["presence_model.json"]
    for kind, study in studies.items():
        name = f"study_presence_{kind}.json"
        study.save(cfg.out_dir / name)
        outputs.append(name)
    print(f"presence model: {bundle.kind}, "
          f"cv_f1={studies[bundle.kind].best.score:.2f}")
    _write_manifest(cfg.out_dir, "presence",
                    {"seed": cfg.seed, "trials": cfg.presence_trials,
                     "folds": cfg.presence_folds, "kinds": list(cfg.presence_kinds),
                     "sample": cfg.presence_sample, "threads": cfg.threads},
                    inputs.paths, outputs)
    return 0


def cmd_rank(cfg: RunConfig) -> int:
    inputs = _load_inputs(cfg.data_dir)
    bundle = PresenceModel.load(_require(cfg.out_dir / "presence_model.json", "presence"))
    ranking = rank_missing(bundle, inputs.matrix, cfg.fraction)
    report = missing_ratio(ranking, inputs.matrix)
    ranking.save(cfg.out_dir / "ranking.csv")
    report.save(cfg.out_dir / "missing_ratio.csv")
    report.save_histogram(cfg.out_dir / "missing_ratio_hist.csv")
    print(f"flagged {ranking.flagged_count} of {len(ranking.cells)} present cells")
    _write_manifest(cfg.out_dir, "rank", {"seed": cfg.seed, "fraction": cfg.fraction},
                    inputs.paths + [cfg.out_dir / "presence_model.json"],
                    ["ranking.csv", "missing_ratio.csv", "missing_ratio_hist.csv"])
    return 0


def cmd_eval_kfold(cfg: RunConfig) -> int:
    quality = cfg.out_dir / "quality.csv"
    inputs = _load_inputs(cfg.data_dir, need_pos=True,
                          quality_csv=quality if quality.exists() else None)
    report = evaluate_kfold(inputs.matrix, inputs.meta, inputs.phylo, inputs.ngrams,
                            cfg.typology_settings())
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    report.save_table1(cfg.out_dir / "table1.csv")
    report.save_skipped(cfg.out_dir / "skipped_kfold.csv")
    outputs = ["table1.csv", "skipped_kfold.csv"]
    studies_dir = cfg.out_dir / "studies"
    studies_dir.mkdir(exist_ok=True)
    for feat_id, study in report.studies.items():
        study.save(studies_dir / f"study_{feat_id}.json")
        outputs.append(f"studies/study_{feat_id}.json")
    print(f"k-fold ({report.mode}): knn_avg={report.knn_avg:.2f} "
          f"ours_avg={report.ours_avg:.2f} over {len(report.rows)} features "
          f"({len(report.skipped)} skipped)")
    _write_manifest(cfg.out_dir, "eval-kfold",
                    {"seed": cfg.seed, "folds": cfg.typology_folds,
                     "trials": cfg.typology_trials, "hpo_mode": cfg.hpo_mode,
                     "knn_k": cfg.knn_k, "threads": cfg.threads},
                    inputs.paths, outputs)
    return 0


def cmd_eval_missing(cfg: RunConfig) -> int:
    quality = cfg.out_dir / "quality.csv"
    inputs = _load_inputs(cfg.data_dir, need_pos=True,
                          quality_csv=quality if quality.exists() else None)
    ranking = MissingRanking.load(_require(cfg.out_dir / "ranking.csv", "rank"),
                                  cfg.fraction)
    report = evaluate_likely_missing(inputs.matrix, inputs.meta, inputs.phylo,
                                     inputs.ngrams, ranking, cfg.typology_settings(),
                                     cfg.ratio_threshold)
    report.save_table2(cfg.out_dir / "table2.csv")
    report.save_skipped(cfg.out_dir / "skipped_missing.csv")
    print(f"likely-missing: knn_avg={report.knn_avg:.2f} ours_avg={report.ours_avg:.2f} "
          f"over {len(report.rows)} features")
    _write_manifest(cfg.out_dir, "eval-missing",
                    {"seed": cfg.seed, "trials": cfg.typology_trials,
                     "ratio_threshold": cfg.ratio_threshold, "threads": cfg.threads},
                    inputs.paths + [cfg.out_dir / "ranking.csv"],
                    ["table2.csv", "skipped_missing.csv"])
    return 0


def cmd_impute(cfg: RunConfig) -> int:
    quality = cfg.out_dir / "quality.csv"
    inputs = _load_inputs(cfg.data_dir, need_pos=True,
                          quality_csv=quality if quality.exists() else None)
    assignments = {}
    studies_dir = cfg.out_dir / "studies"
    if studies_dir.is_dir():
        for path in sorted(studies_dir.glob("study_*.json")):
            data = json.loads(path.read_text())
            assignments[path.stem.removeprefix("study_")] = data["best_assignment"]
    imputed = impute_all(inputs.matrix, inputs.meta, inputs.phylo, inputs.ngrams,
                         cfg.typology_settings(), assignments or None)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    imputed.save(cfg.out_dir / "completed.csv", cfg.out_dir / "provenance.csv")
    filled = sum(1 for row in imputed.provenance for p in row if p.startswith("IMPUTED"))
    print(f"imputed {filled} cells ({len(assignments)} configs reused)")
    _write_manifest(cfg.out_dir, "impute",
                    {"seed": cfg.seed, "trials": cfg.typology_trials,
                     "threads": cfg.threads},
                    inputs.paths, ["completed.csv", "provenance.csv"])
    return 0


def cmd_pos_quality(cfg: RunConfig) -> int:
    pos_dir = cfg.data_dir / "pos"
    stats_path = cfg.data_dir / "pos_stats.tsv"
    swadesh_path = cfg.data_dir / "swadesh.tsv"
    gold_path = cfg.data_dir / "gold_recalls.tsv"
    for required in (stats_path, swadesh_path, gold_path):
        if not required.exists():
            raise StageError(f"missing input file {required}")
    if not pos_dir.is_dir():
        raise StageError(f"missing POS directory {pos_dir}")
    corpus = load_pos_corpus(pos_dir)
    stats = load_pos_stats(stats_path)
    swadesh = load_swadesh(swadesh_path)
    features = compute_quality_features(stats, corpus, swadesh)
    gold = {}
    for lineno, line in enumerate(gold_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        code, recall = line.split("\t")
        gold[code] = float(recall)
    labelled = [f for f in features if f.code in gold]
    regressor = fit_quality_regressor(labelled, [gold[f.code] for f in labelled],
                                      cfg.seed)
    estimates = regressor.predict(features)
    kept = filter_languages(estimates, cfg.quality_threshold)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_quality(estimates, kept, cfg.out_dir / "quality.csv")
    print(f"quality regressor held-out MAE = {regressor.held_out_mae:.2f}; "
          f"{len(kept)} of {len(estimates)} languages kept at threshold "
          f"{cfg.quality_threshold}")
    _write_manifest(cfg.out_dir, "pos-quality",
                    {"seed": cfg.seed, "threshold": cfg.quality_threshold},
                    [stats_path, swadesh_path, gold_path], ["quality.csv"])
    return 0


def _read_csv(path: Path) -> list[list[str]]:
    with path.open(newline="") as fh:
        return list(csv.reader(fh))


def cmd_report(cfg: RunConfig) -> int:
    report: dict = {}
    table1 = cfg.out_dir / "table1.csv"
    table2 = cfg.out_dir / "table2.csv"
    hist = cfg.out_dir / "missing_ratio_hist.csv"
    _require(table1, "eval-kfold")
    rows = _read_csv(table1)
    averages = [r for r in rows[1:] if r[0] == "AVERAGE"]
    report["kfold"] = {
        "features": len(rows) - 1 - len(averages),
        "knn_avg": float(averages[0][1]) if averages else None,
        "ours_avg": float(averages[0][2]) if averages else None,
    }
    if table2.exists():
        rows = _read_csv(table2)
        averages = [r for r in rows[1:] if r[0] == "AVERAGE"]
        report["likely_missing"] = {
            "features": len(rows) - 1 - len(averages),
            "knn_avg": float(averages[0][2]) if averages else None,
            "ours_avg": float(averages[0][3]) if averages else None,
        }
    if hist.exists():
        rows = _read_csv(hist)
        report["missing_ratio_histogram"] = {r[0]: int(r[2]) for r in rows[1:]}
    (cfg.out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    print(json.dumps(report, indent=2, sort_keys=True))
    _write_manifest(cfg.out_dir, "report", {"seed": cfg.seed},
                    [table1, table2, hist], ["report.json"])
    return 0


def _parse_config_file(path: Path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_INT_KEYS = {"seed", "threads", "presence_trials", "presence_folds", "presence_sample",
             "typology_trials", "typology_folds", "knn_k"}
_FLOAT_KEYS = {"fraction", "ratio_threshold", "quality_threshold"}


def _build_run_config(args: argparse.Namespace) -> RunConfig:
    file_values: dict = {}
    if args.config:
        file_values = _parse_config_file(Path(args.config))

    def pick(name: str, default):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        if name in file_values:
            raw = file_values[name]
            if name in _INT_KEYS:
                return int(raw)
            if name in _FLOAT_KEYS:
                return float(raw)
            return raw
        return default

    kinds = pick("presence_kinds", "gradient_boosting")
    if isinstance(kinds, str):
        kinds = tuple(k.strip() for k in kinds.split(",") if k.strip())
    return RunConfig(
        data_dir=Path(pick("data", ".")),
        out_dir=Path(pick("out", "out")),
        seed=pick("seed", 0),
        threads=pick("threads", 1),
        presence_trials=pick("presence_trials", 10),
        presence_folds=pick("presence_folds", 5),
        presence_kinds=kinds,
        presence_sample=pick("presence_sample", None),
        typology_trials=pick("typology_trials", 30),
        typology_folds=pick("typology_folds", 10),
        fraction=pick("fraction", 0.2),
        ratio_threshold=pick("ratio_threshold", 0.5),
        quality_threshold=pick("quality_threshold", 80.0),
        hpo_mode=pick("hpo_mode", "outer"),
        sampler=pick("sampler", "tpe_like"),
        knn_k=pick("knn_k", 5),
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="input dataset directory")
    parser.add_argument("--out", help="output directory for stage artifacts")
    parser.add_argument("--seed", type=int, help="master seed (default 0)")
    parser.add_argument("--threads", type=int, help="worker-thread cap (default 1)")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--sampler", choices=("random", "tpe_like"),
                        help="search sampler (default tpe_like)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="typofill",
                                     description="Typological feature imputation pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, extra in {
        "validate": [],
        "presence": ["presence_trials", "presence_folds", "presence_kinds",
                     "presence_sample"],
        "rank": ["fraction"],
        "eval-kfold": ["typology_trials", "typology_folds", "hpo_mode", "knn_k"],
        "eval-missing": ["typology_trials", "ratio_threshold", "fraction", "knn_k"],
        "impute": ["typology_trials", "typology_folds", "knn_k"],
        "pos-quality": ["quality_threshold"],
        "report": [],
    }.items():
        p = sub.add_parser(name)
        _add_common(p)
        for opt in extra:
            flag = "--" + opt.replace("_", "-")
            if opt in _INT_KEYS:
                p.add_argument(flag, type=int, dest=opt)
            elif opt in _FLOAT_KEYS:
                p.add_argument(flag, type=float, dest=opt)
            else:
                p.add_argument(flag, dest=opt)

    p = sub.add_parser("synth")
    p.add_argument("--out", required=True)
    p.add_argument("--langs", type=int, default=60)
    p.add_argument("--feats", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", required=True, choices=SCENARIOS)
    p.add_argument("--observed-fraction", type=float, default=0.7)
    p.add_argument("--families", type=int, default=4)
    p.add_argument("--value-rate", type=float, default=0.7)
    return parser


_HANDLERS = {
    "validate": cmd_validate,
    "presence": cmd_presence,
    "rank": cmd_rank,
    "eval-kfold": cmd_eval_kfold,
    "eval-missing": cmd_eval_missing,
    "impute": cmd_impute,
    "pos-quality": cmd_pos_quality,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            manifest = generate_synthetic(args.out, args.langs, args.feats, args.seed,
                                          args.scenario,
                                          observed_fraction=args.observed_fraction,
                                          n_families=args.families,
                                          value_rate=args.value_rate)
            print(f"wrote {args.scenario} dataset to {args.out} "
                  f"({manifest['n_langs']} languages, {manifest['n_feats']} features)")
            return 0
        cfg = _build_run_config(args)
        return _HANDLERS[args.command](cfg)
    except StageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except PIPELINE_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
