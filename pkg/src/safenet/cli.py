"""Command-line interface.

Subcommands cover the pipeline end to end: generate synthetic company
files, prepare (clean/balance/split) them, pretrain, fine-tune with a
paired from-scratch comparison, run a sweep or a whole experiment matrix,
and re-emit plot data from logged pairs. Every run writes a manifest with
the resolved config, seed, and artifact hashes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    apply_overrides,
    build_experiments,
    build_finetune_cfg,
    build_generator_spec,
    build_pretrain_cfg,
    config_hash,
    load_config,
)
from .harness import (
    MatrixCell,
    MatrixResult,
    assemble_source,
    curve_rows,
    emit_plot_data,
    run_experiment,
    run_matrix,
    write_pairs_csv,
    write_scores_csv,
)
from .metrics import PairedAccuracy, accuracy, difference_accuracy
from .model import load_params, predict, save_params
from .pipeline import (
    Dataset,
    StandardizationStats,
    clean,
    load_dataset,
    load_records,
    sample_training_subset,
    smote_balance,
    split_company,
    write_dataset,
    write_records,
)
from .seeding import derive_seed
from .synthetic import generate
from .training import finetune, pretrain, train_from_scratch, write_history

DEFAULT_OUT_ENV = "SAFENET_OUT"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safenet",
        description="pretrain-then-fine-tune accident prediction pipeline",
    )
    parser.add_argument("--config", type=Path, default=None, help="YAML config file")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="global seed (overrides config)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="config override with a dotted key, repeatable",
    )
    parser.add_argument("--jobs", type=int, default=1, help="parallel experiment jobs")
    parser.add_argument(
        "command",
        choices=["generate", "prepare", "pretrain", "finetune", "sweep", "matrix", "report"],
    )
    return parser


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, cfg: dict, seed: int, artifacts: list[Path]) -> Path:
    manifest = {
        "command": command,
        "seed": seed,
        "config_sha256": config_hash(cfg),
        "config": cfg,
        "artifacts": {
            str(p.relative_to(out)): _sha256(p) for p in sorted(artifacts)
        },
    }
    path = out / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _company_files(directory: Path) -> dict[int, Path]:
    pattern = re.compile(r"company_(\d+)\.csv$")
    found = {}
    for p in sorted(directory.glob("company_*.csv")):
        m = pattern.match(p.name)
        if m:
            found[int(m.group(1))] = p
    if not found:
        raise FileNotFoundError(f"no company_<id>.csv files in {directory}")
    return found


def _load_prepared(out: Path) -> dict[int, Dataset]:
    return {cid: load_dataset(p) for cid, p in _company_files(out / "prepared").items()}


def _cmd_generate(cfg: dict, seed: int, out: Path) -> list[Path]:
    spec = build_generator_spec(cfg)
    companies = generate(spec, seed)
    paths = []
    for i, records in enumerate(companies, start=1):
        path = out / "companies" / f"company_{i}.csv"
        write_records(records, path)
        paths.append(path)
    return paths


def _cmd_prepare(cfg: dict, seed: int, out: Path) -> list[Path]:
    raw_dir = Path(cfg["data"]["dir"]) if cfg["data"]["dir"] else out / "companies"
    d = int(cfg["data"]["feature_dim"])
    balance_first = bool(cfg["data"]["smote_before_split"])
    paths = []
    for cid, path in _company_files(raw_dir).items():
        records = load_records(path, feature_dim=d)
        data = clean(records, float(cfg["data"]["missing_threshold"]))
        if balance_first:
            data = smote_balance(data, int(cfg["data"]["smote_k"]), derive_seed(seed, "smote", cid))
        prepared = out / "prepared" / f"company_{cid}.csv"
        write_dataset(data, prepared)
        paths.append(prepared)

        split = split_company(data, derive_seed(seed, "prepare-split", cid), cfg["data"]["rounding"])
        for name, part in (("test", split.test_set), ("pool", split.train_pool)):
            p = out / "prepared" / f"company_{cid}_{name}.csv"
            write_dataset(part, p)
            paths.append(p)
    return paths


def _first_experiment(cfg: dict, seed: int):
    return build_experiments(cfg, seed)[0]


def _cmd_pretrain(cfg: dict, seed: int, out: Path) -> list[Path]:
    exp = _first_experiment(cfg, seed)
    datasets = _load_prepared(out)
    source = assemble_source(datasets, exp.source_company_ids)
    model = pretrain(source, build_pretrain_cfg(cfg), derive_seed(exp.seed, "pretrain"))

    model_path = out / "pretrained.safenet"
    save_params(model.params, model_path, extras={"mu": model.stats.mu, "sigma": model.stats.sigma})
    history_path = out / "pretrain_history.csv"
    write_history(model.history, history_path)
    return [model_path, history_path]


def _cmd_finetune(cfg: dict, seed: int, out: Path) -> list[Path]:
    exp = _first_experiment(cfg, seed)
    datasets = _load_prepared(out)
    model_path = cfg["finetune"].get("model_path") or out / "pretrained.safenet"
    params, extras = load_params(model_path)
    stats = StandardizationStats(mu=extras["mu"], sigma=extras["sigma"])

    target = datasets[exp.target_company_id]
    split = split_company(target, derive_seed(exp.seed, "target-split"), exp.rounding)
    pool, test = split.train_pool, split.test_set
    per_class_n = cfg["finetune"]["per_class_n"] or min(pool.class_counts())
    subset = sample_training_subset(pool, int(per_class_n), derive_seed(exp.seed, "finetune-subset"))

    train_s = stats.apply(subset)
    test_s = stats.apply(test)
    run_cfg = build_finetune_cfg(cfg)
    train_seed = derive_seed(exp.seed, "finetune-train")
    ft = finetune(params, train_s, test_s, run_cfg, train_seed)
    st = train_from_scratch(train_s, test_s, run_cfg, train_seed)

    a_pt = accuracy(predict(ft.params, test_s.features), test_s.labels)
    a_st = accuracy(predict(st.params, test_s.features), test_s.labels)

    ft_path = out / "finetuned.safenet"
    save_params(ft.params, ft_path, extras={"mu": stats.mu, "sigma": stats.sigma})
    history_path = out / "finetune_history.csv"
    write_history(ft.history, history_path)
    comparison = out / "comparison.csv"
    with comparison.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "per_class_n", "a_pt", "a_st", "da"])
        writer.writerow(
            [
                exp.target_company_id,
                int(per_class_n),
                repr(a_pt),
                repr(a_st),
                repr(difference_accuracy(a_pt, a_st)),
            ]
        )
    return [ft_path, history_path, comparison]


def _cmd_sweep(cfg: dict, seed: int, out: Path) -> list[Path]:
    exp = _first_experiment(cfg, seed)
    datasets = _load_prepared(out)
    result = run_experiment(exp, datasets)
    cell = MatrixCell(config=exp, result=result)

    scores = out / "scores.csv"
    pairs = out / "pairs.csv"
    write_scores_csv(MatrixResult([cell]), scores)
    write_pairs_csv([cell], pairs)
    curve_paths = emit_plot_data(result, out / f"curve_{exp.name()}.csv")
    return [scores, pairs, *curve_paths]


def _cmd_matrix(cfg: dict, seed: int, out: Path, jobs: int) -> list[Path]:
    experiments = build_experiments(cfg, seed)
    datasets = _load_prepared(out)
    matrix = run_matrix(experiments, datasets, jobs=jobs)
    scores = out / "scores.csv"
    pairs = out / "pairs.csv"
    write_scores_csv(matrix, scores)
    write_pairs_csv(matrix.cells, pairs)
    return [scores, pairs]


def _cmd_report(cfg: dict, seed: int, out: Path) -> list[Path]:
    pairs_path = out / "pairs.csv"
    if not pairs_path.exists():
        raise FileNotFoundError(f"{pairs_path} not found; run sweep or matrix first")
    groups: dict[tuple[str, str], list[PairedAccuracy]] = {}
    with pairs_path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["target"], row["source_set"])
            groups.setdefault(key, []).append(
                PairedAccuracy(
                    per_class_n=int(row["per_class_n"]),
                    a_pt=float(row["a_pt"]),
                    a_st=float(row["a_st"]),
                    repeat_index=int(row["repeat"]),
                )
            )

    paths = []
    for (target, source_set), pairs in sorted(groups.items()):
        path = out / f"curve_{source_set}-to-{target}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["per_class_n", "mean_a_pt", "std_a_pt", "mean_a_st", "std_a_st", "n_pairs"]
            )
            for row in curve_rows(pairs):
                writer.writerow(
                    [
                        row["per_class_n"],
                        repr(row["mean_a_pt"]),
                        repr(row["std_a_pt"]),
                        repr(row["mean_a_st"]),
                        repr(row["std_a_st"]),
                        row["n_pairs"],
                    ]
                )
        paths.append(path)

    # mean accuracy gap by number of source companies
    by_size: dict[int, list[float]] = {}
    for (_, source_set), pairs in groups.items():
        size = len(source_set.split("+"))
        by_size.setdefault(size, []).extend(p.a_pt - p.a_st for p in pairs)
    da_path = out / "da_by_source_size.csv"
    with da_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_source_companies", "mean_da", "std_da", "n_pairs"])
        for size in sorted(by_size):
            gaps = np.array(by_size[size])
            writer.writerow([size, repr(float(gaps.mean())), repr(float(gaps.std())), len(gaps)])
    paths.append(da_path)
    return paths


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, args.overrides)
        seed = args.seed if args.seed is not None else int(cfg["seed"])
        out = args.out or Path(os.environ.get(DEFAULT_OUT_ENV, "safenet-run"))
        out.mkdir(parents=True, exist_ok=True)

        if args.command == "generate":
            artifacts = _cmd_generate(cfg, seed, out)
        elif args.command == "prepare":
            artifacts = _cmd_prepare(cfg, seed, out)
        elif args.command == "pretrain":
            artifacts = _cmd_pretrain(cfg, seed, out)
        elif args.command == "finetune":
            artifacts = _cmd_finetune(cfg, seed, out)
        elif args.command == "sweep":
            artifacts = _cmd_sweep(cfg, seed, out)
        elif args.command == "matrix":
            artifacts = _cmd_matrix(cfg, seed, out, jobs=args.jobs)
        else:
            artifacts = _cmd_report(cfg, seed, out)

        _write_manifest(out, args.command, cfg, seed, artifacts)
    except ConfigError as exc:
        print(f"safenet: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"safenet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
