"""Run configuration: YAML file, dotted overrides, built-in defaults.

Precedence, lowest to highest: built-in defaults, config file values,
--set key=value overrides. The resolved dict is what lands in the run
manifest.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .harness import ExperimentConfig, SweepSchedule
from .optim import OptimizerConfig
from .seeding import derive_seed
from .synthetic import CompanySpec, GeneratorSpec
from .training import TrainRunConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "data": {
        "dir": None,  # defaults to <out>/companies
        "feature_dim": 42,
        "missing_threshold": 0.10,
        "smote_k": 5,
        "smote_before_split": True,
        "rounding": "nearest",
    },
    "synthetic": {
        "shared_weights_seed": 1,
        "feature_dim": 42,
        "companies": [],
    },
    "model": {
        "init_scheme": "paper",
    },
    "optimizer": {
        "base_lr": 3.0e-4,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1.0e-8,
        "weight_decay": 0.01,
        "step_size": 30,
        "gamma": 0.1,
    },
    "pretrain": {
        "epochs": 100,
        "batch_size": 32,
    },
    "finetune": {
        "epochs": 20,
        "batch_size": 4,
        "base_lr": 1.0e-3,
        "per_class_n": None,
    },
    "sweep": {
        "start": 1,
        "stop": None,
        "step": 1,
        "repeats": 5,
    },
    "experiments": [],
    "standardize_on_target": False,
}


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path=None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    return _deep_merge(DEFAULTS, raw)


def apply_overrides(cfg: dict, assignments: list[str]) -> dict:
    """Apply repeatable --set key=value pairs; keys are dotted paths."""
    cfg = copy.deepcopy(cfg)
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"override {assignment!r} is not of the form key=value")
        key, _, raw_value = assignment.partition("=")
        try:
            value = yaml.safe_load(raw_value)
        except yaml.YAMLError:
            value = raw_value
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()


# ---------------------------------------------------------------------------
# Builders from the resolved dict
# ---------------------------------------------------------------------------


def build_generator_spec(cfg: dict) -> GeneratorSpec:
    syn = cfg["synthetic"]
    if not syn["companies"]:
        raise ConfigError("synthetic.companies is empty; nothing to generate")
    companies = []
    for i, entry in enumerate(syn["companies"]):
        try:
            companies.append(
                CompanySpec(
                    n_rows=int(entry["n_rows"]),
                    minority_fraction=float(entry["minority_fraction"]),
                    weight_perturbation=float(entry.get("weight_perturbation", 0.0)),
                    noise_level=float(entry.get("noise_level", 0.0)),
                    missing_rate=float(entry.get("missing_rate", 0.0)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"synthetic.companies[{i}]: {exc}") from exc
    return GeneratorSpec(
        shared_weights_seed=int(syn["shared_weights_seed"]),
        companies=companies,
        feature_dim=int(syn["feature_dim"]),
    )


def _optimizer_config(cfg: dict, base_lr: float) -> OptimizerConfig:
    opt = cfg["optimizer"]
    return OptimizerConfig(
        base_lr=float(base_lr),
        beta1=float(opt["beta1"]),
        beta2=float(opt["beta2"]),
        eps=float(opt["eps"]),
        weight_decay=float(opt["weight_decay"]),
        step_size=int(opt["step_size"]),
        gamma=float(opt["gamma"]),
    )


def build_pretrain_cfg(cfg: dict) -> TrainRunConfig:
    return TrainRunConfig(
        epochs=int(cfg["pretrain"]["epochs"]),
        batch_size=int(cfg["pretrain"]["batch_size"]),
        optimizer=_optimizer_config(cfg, cfg["optimizer"]["base_lr"]),
        use_lr_schedule=True,
        init_scheme=cfg["model"]["init_scheme"],
    )


def build_finetune_cfg(cfg: dict) -> TrainRunConfig:
    return TrainRunConfig(
        epochs=int(cfg["finetune"]["epochs"]),
        batch_size=int(cfg["finetune"]["batch_size"]),
        optimizer=_optimizer_config(cfg, cfg["finetune"]["base_lr"]),
        use_lr_schedule=False,
        init_scheme=cfg["model"]["init_scheme"],
    )


def build_sweep(cfg: dict) -> SweepSchedule:
    sw = cfg["sweep"]
    return SweepSchedule(
        start=int(sw["start"]),
        stop=None if sw["stop"] is None else int(sw["stop"]),
        step=int(sw["step"]),
    )


def build_experiments(cfg: dict, seed: int) -> list[ExperimentConfig]:
    entries = cfg["experiments"]
    if not entries:
        raise ConfigError("experiments list is empty")
    out = []
    for i, entry in enumerate(entries):
        try:
            sources = tuple(int(s) for s in entry["sources"])
            target = int(entry["target"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"experiments[{i}]: {exc}") from exc
        out.append(
            ExperimentConfig(
                source_company_ids=sources,
                target_company_id=target,
                sweep=build_sweep(cfg),
                repeats_per_point=int(cfg["sweep"]["repeats"]),
                allow_overlap=bool(entry.get("allow_overlap", False)),
                same_company_disjoint=bool(entry.get("same_company_disjoint", False)),
                standardize_on_target=bool(cfg["standardize_on_target"]),
                smote_after_split=not bool(cfg["data"]["smote_before_split"]),
                smote_k=int(cfg["data"]["smote_k"]),
                rounding=cfg["data"]["rounding"],
                seed=derive_seed(seed, "experiment", i),
                pretrain_cfg=build_pretrain_cfg(cfg),
                finetune_cfg=build_finetune_cfg(cfg),
                label=str(entry.get("label", "")),
            )
        )
    return out
