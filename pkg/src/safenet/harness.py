"""Experiment orchestration: source assembly, disjointness, sweeps, tables.

One experiment pretrains once on an assembled source, fixes the target
test set, then walks a schedule of per-class training sizes. At every
(size, repeat) it draws one training subset and trains the fine-tuned and
the from-scratch model on identical data with identical batch order, so
the accuracy gap is attributable to initialization alone.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import PairedAccuracy, TransferScore, accuracy, transfer_score
from .model import predict
from .pipeline import (
    DataError,
    Dataset,
    concat_datasets,
    fit_standardization,
    sample_training_subset,
    smote_balance,
    split_company,
)
from .seeding import derive_rng, derive_seed
from .training import (
    TrainRunConfig,
    finetune,
    finetune_config,
    pretrain,
    pretrain_config,
    train_from_scratch,
)

SAME_COMPANY_PRETRAIN_FRACTION = 0.6


class DisjointnessError(RuntimeError):
    """Source and target share a company without an overlap protocol."""


@dataclass
class SweepSchedule:
    start: int = 1
    stop: int | None = None  # None: largest per_class_n the pool affords
    step: int = 1

    def validate(self) -> None:
        if self.start < 1 or self.step < 1:
            raise ValueError("sweep start and step must be at least 1")
        if self.stop is not None and self.stop < self.start:
            raise ValueError("sweep stop must be >= start")

    def points(self, pool_limit: int) -> list[int]:
        stop = self.stop if self.stop is not None else pool_limit
        if stop > pool_limit:
            raise DataError(
                f"sweep stop {stop} exceeds the training pool (per-class limit {pool_limit})"
            )
        return list(range(self.start, stop + 1, self.step))


@dataclass
class ExperimentConfig:
    source_company_ids: tuple
    target_company_id: int
    sweep: SweepSchedule = field(default_factory=SweepSchedule)
    repeats_per_point: int = 5
    allow_overlap: bool = False
    same_company_disjoint: bool = False
    standardize_on_target: bool = False
    smote_after_split: bool = False  # expects cleaned (unbalanced) datasets
    smote_k: int = 5
    rounding: str = "nearest"
    seed: int = 0
    pretrain_cfg: TrainRunConfig = field(default_factory=pretrain_config)
    finetune_cfg: TrainRunConfig = field(default_factory=finetune_config)
    label: str = ""

    def validate(self) -> None:
        if not self.source_company_ids:
            raise ValueError("need at least one source company")
        if self.repeats_per_point < 1:
            raise ValueError("repeats_per_point must be at least 1")
        self.sweep.validate()
        self.pretrain_cfg.validate()
        self.finetune_cfg.validate()

    def name(self) -> str:
        if self.label:
            return self.label
        src = "+".join(str(s) for s in self.source_company_ids)
        return f"{src}-to-{self.target_company_id}"


@dataclass
class SweepResult:
    config: ExperimentConfig
    pretrain_accuracy: float  # percent, best epoch on the source held-out split
    pairs: list[PairedAccuracy]
    score: TransferScore
    test_size: int
    pool_size: int


def assemble_source(datasets: dict, ids) -> Dataset:
    """Row-concatenate the named company datasets, keeping provenance."""
    ids = list(ids)
    if not ids:
        raise DataError("empty source id set")
    missing = [i for i in ids if i not in datasets]
    if missing:
        raise DataError(f"unknown company ids: {missing}")
    return concat_datasets([datasets[i] for i in ids])


def check_disjoint(source: Dataset, target: Dataset, cfg: ExperimentConfig) -> str:
    """Verdict "ok" or "violation" for the source/target company overlap rule.

    Overlap passes when allow_overlap is set, or under the same-company
    protocol (which hands the caller row-disjoint halves of one company).
    """
    overlap = np.intersect1d(np.unique(source.company_ids), np.unique(target.company_ids))
    if overlap.size == 0 or cfg.allow_overlap or cfg.same_company_disjoint:
        return "ok"
    return "violation"


def disjoint_partition(
    data: Dataset, seed: int, fraction: float = SAME_COMPANY_PRETRAIN_FRACTION
) -> tuple[Dataset, Dataset]:
    """Split one company into row-disjoint pretraining/fine-tuning parts.

    Both parts must contain both classes.
    """
    n = len(data)
    n_first = int(round(fraction * n))
    if n_first < 2 or n - n_first < 2:
        raise DataError("dataset too small for a 60/40 partition")
    rng = derive_rng(seed, "partition")
    for _ in range(100):
        perm = rng.permutation(n)
        first, second = perm[:n_first], perm[n_first:]
        if (
            data.labels[first].min() != data.labels[first].max()
            and data.labels[second].min() != data.labels[second].max()
        ):
            return data.subset(np.sort(first)), data.subset(np.sort(second))
    raise DataError("could not partition with both classes on both sides")


def run_experiment(cfg: ExperimentConfig, datasets: dict) -> SweepResult:
    """Pretrain, then sweep fine-tune/from-scratch pairs over training sizes."""
    cfg.validate()
    target_id = cfg.target_company_id
    if target_id not in datasets:
        raise DataError(f"unknown target company {target_id}")

    if cfg.same_company_disjoint and target_id in cfg.source_company_ids:
        pre_part, target_data = disjoint_partition(
            datasets[target_id], derive_seed(cfg.seed, "protocol-split")
        )
        parts = [datasets[i] for i in cfg.source_company_ids if i != target_id]
        source = concat_datasets(parts + [pre_part])
    else:
        source = assemble_source(datasets, cfg.source_company_ids)
        target_data = datasets[target_id]
        if check_disjoint(source, target_data, cfg) == "violation":
            raise DisjointnessError(
                f"target company {target_id} appears in the source set "
                f"{tuple(cfg.source_company_ids)}; set allow_overlap or "
                "same_company_disjoint to run anyway"
            )

    if cfg.smote_after_split:
        # leakage-free variant: inputs are cleaned, balancing happens after
        # the target split so no synthetic row can straddle pool and test
        source = smote_balance(source, cfg.smote_k, derive_seed(cfg.seed, "smote", "source"))
        split = split_company(target_data, derive_seed(cfg.seed, "target-split"), cfg.rounding)
        pool = smote_balance(
            split.train_pool, cfg.smote_k, derive_seed(cfg.seed, "smote", "pool")
        )
        test = split.test_set
    else:
        split = split_company(target_data, derive_seed(cfg.seed, "target-split"), cfg.rounding)
        pool, test = split.train_pool, split.test_set
    pretrained = pretrain(source, cfg.pretrain_cfg, derive_seed(cfg.seed, "pretrain"))

    pool_limit = min(pool.class_counts())
    points = cfg.sweep.points(pool_limit)

    pairs = []
    for point in points:
        for rep in range(cfg.repeats_per_point):
            subset = sample_training_subset(
                pool, point, derive_seed(cfg.seed, "sweep", point, rep)
            )
            stats = (
                fit_standardization(subset)
                if cfg.standardize_on_target
                else pretrained.stats
            )
            train_s = stats.apply(subset)
            test_s = stats.apply(test)

            train_seed = derive_seed(cfg.seed, "train", point, rep)
            ft = finetune(pretrained.params, train_s, test_s, cfg.finetune_cfg, train_seed)
            st = train_from_scratch(train_s, test_s, cfg.finetune_cfg, train_seed)
            pairs.append(
                PairedAccuracy(
                    per_class_n=point,
                    a_pt=accuracy(predict(ft.params, test_s.features), test_s.labels),
                    a_st=accuracy(predict(st.params, test_s.features), test_s.labels),
                    repeat_index=rep,
                )
            )

    return SweepResult(
        config=cfg,
        pretrain_accuracy=pretrained.best_accuracy(),
        pairs=pairs,
        score=transfer_score(pairs),
        test_size=len(test),
        pool_size=len(pool),
    )


# ---------------------------------------------------------------------------
# Experiment matrices
# ---------------------------------------------------------------------------


@dataclass
class MatrixCell:
    config: ExperimentConfig
    result: SweepResult | None = None
    error: str | None = None


@dataclass
class MatrixResult:
    cells: list[MatrixCell]

    def score_matrix(self, attribute: str) -> dict:
        """Nested {target: {source_set: value}} for ep / me / nme."""
        table: dict = {}
        for cell in self.cells:
            if cell.result is None:
                continue
            src = "+".join(str(s) for s in cell.config.source_company_ids)
            table.setdefault(cell.config.target_company_id, {})[src] = getattr(
                cell.result.score, attribute
            )
        return table

    def pretrain_accuracies(self) -> dict:
        row = {}
        for cell in self.cells:
            if cell.result is None:
                continue
            src = "+".join(str(s) for s in cell.config.source_company_ids)
            row[src] = cell.result.pretrain_accuracy
        return row


def _run_cell(args) -> MatrixCell:
    cfg, datasets = args
    try:
        return MatrixCell(config=cfg, result=run_experiment(cfg, datasets))
    except Exception as exc:  # cell failures never abort the matrix
        return MatrixCell(config=cfg, error=f"{type(exc).__name__}: {exc}")


def run_matrix(configs: list[ExperimentConfig], datasets: dict, jobs: int = 1) -> MatrixResult:
    """Run every experiment; failed cells carry their error, others the result."""
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, [(cfg, datasets) for cfg in configs]))
    else:
        cells = [_run_cell((cfg, datasets)) for cfg in configs]
    return MatrixResult(cells=cells)


# ---------------------------------------------------------------------------
# Result files
# ---------------------------------------------------------------------------


def write_scores_csv(matrix: MatrixResult, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "source_set", "pretrain_acc", "ep", "me", "nme", "status"])
        for cell in matrix.cells:
            src = "+".join(str(s) for s in cell.config.source_company_ids)
            if cell.result is None:
                writer.writerow(
                    [cell.config.target_company_id, src, "", "", "", "", f"failed: {cell.error}"]
                )
            else:
                r = cell.result
                writer.writerow(
                    [
                        cell.config.target_company_id,
                        src,
                        repr(r.pretrain_accuracy),
                        repr(r.score.ep),
                        repr(r.score.me),
                        repr(r.score.nme),
                        "ok",
                    ]
                )


def write_pairs_csv(cells: list[MatrixCell], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "source_set", "per_class_n", "repeat", "a_pt", "a_st"])
        for cell in cells:
            if cell.result is None:
                continue
            src = "+".join(str(s) for s in cell.config.source_company_ids)
            for p in cell.result.pairs:
                writer.writerow(
                    [
                        cell.config.target_company_id,
                        src,
                        p.per_class_n,
                        p.repeat_index,
                        repr(p.a_pt),
                        repr(p.a_st),
                    ]
                )


def curve_rows(pairs: list[PairedAccuracy]) -> list[dict]:
    """Per sweep point: mean/std accuracy of both models over repeats."""
    by_point: dict = {}
    for p in pairs:
        by_point.setdefault(p.per_class_n, []).append(p)
    rows = []
    for point in sorted(by_point):
        pts = by_point[point]
        a_pt = np.array([p.a_pt for p in pts])
        a_st = np.array([p.a_st for p in pts])
        rows.append(
            {
                "per_class_n": point,
                "mean_a_pt": float(a_pt.mean()),
                "std_a_pt": float(a_pt.std()),
                "mean_a_st": float(a_st.mean()),
                "std_a_st": float(a_st.std()),
                "n_pairs": len(pts),
            }
        )
    return rows


def emit_plot_data(result: SweepResult, path) -> list[Path]:
    """Write the accuracy-vs-size curve table and a mean-gap summary.

    Returns the written paths. Floats are written with repr so parsing the
    file back reproduces the aggregates exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["per_class_n", "mean_a_pt", "std_a_pt", "mean_a_st", "std_a_st", "n_pairs"]
        )
        for row in curve_rows(result.pairs):
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

    gaps = np.array([p.a_pt - p.a_st for p in result.pairs])
    summary = path.with_name(path.stem + "_da" + path.suffix)
    with summary.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_source_companies", "mean_da", "std_da", "n_pairs"])
        writer.writerow(
            [
                len(result.config.source_company_ids),
                repr(float(gaps.mean())),
                repr(float(gaps.std())),
                len(gaps),
            ]
        )
    return [path, summary]
