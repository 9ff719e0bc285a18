"""INI run configuration with documented defaults.

Every key is listed in ``DEFAULTS``; unknown sections or keys are rejected and
missing keys take the default. See README for the meaning of each key.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .art import PipelineConfig
from .data import BlobSpec, Dataset, SplitPlan, Splits, generate_blobs, read_idx, split_dataset
from .errors import ConfigError, HyperSparseError
from .nn import ModelSpec
from .regularization import RegKind, RegularizerSpec

DEFAULTS = {
    "run": {
        "seed": "0",
        "seeds": "0,1,2,3,4",
        "output_dir": "runs/default",
        "batch_size": "64",
        "max_reg_epochs": "500",
        "tau_rel": "1e-3",
    },
    "data": {
        "source": "blobs",
        "dims": "16",
        "classes": "8",
        "samples_per_class": "500",
        "center_spread": "5.0",
        "noise_sigma": "1.0",
        "data_seed": "0",
        "images_path": "",
        "labels_path": "",
        "train_fraction": "0.8",
        "val_fraction": "0.1",
        "test_fraction": "0.1",
        "split_seed": "0",
    },
    "model": {
        "hidden_dims": "64,64",
    },
    "pretrain": {
        "epochs": "60",
        "learning_rate": "0.1",
    },
    "regularization": {
        "kind": "hypersparse",
        "lambda_init": "5e-6",
        "eta": "1.05",
        "pruning_rate": "0.9",
    },
    "finetune": {
        "epochs": "160",
        "learning_rate": "0.1",
        "weight_decay": "1e-4",
        "lr_decay_factor": "0.1",
        "lr_decay_epochs": "",
    },
}


@dataclass
class RunConfig:
    pipeline: PipelineConfig
    hidden_dims: tuple
    source: str = "blobs"
    blobs: BlobSpec = field(default_factory=BlobSpec)
    images_path: str = ""
    labels_path: str = ""
    split: SplitPlan = field(default_factory=SplitPlan)
    seeds: tuple = (0, 1, 2, 3, 4)
    output_dir: Path = Path("runs/default")

    @property
    def seed(self) -> int:
        return self.pipeline.seed

    def load_data(self) -> Dataset:
        if self.source == "idx":
            return read_idx(self.images_path, self.labels_path)
        return generate_blobs(self.blobs)

    def splits(self) -> Splits:
        return split_dataset(self.load_data(), self.split)

    def model_spec(self, data: Dataset) -> ModelSpec:
        return ModelSpec(data.dims, self.hidden_dims, data.num_classes)


def _parse(section, key, raw, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "ints":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return raw.strip()
    except ValueError:
        raise ConfigError(key, f"[{section}] cannot parse {raw!r}") from None


def load_config(path) -> RunConfig:
    """Read and validate an INI file. Raises ConfigError naming the offending key."""
    parser = configparser.ConfigParser(interpolation=None)
    with open(path) as f:
        text = f.read()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc)) from None
    return config_from_mapping({s: dict(parser[s]) for s in parser.sections()})


def config_from_mapping(sections: dict) -> RunConfig:
    values = {s: dict(keys) for s, keys in DEFAULTS.items()}
    for section, keys in sections.items():
        if section not in DEFAULTS:
            raise ConfigError(section, "unknown section")
        for key, raw in keys.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(key, f"unknown key in [{section}]")
            values[section][key] = str(raw)

    def get(section, key, kind=str):
        return _parse(section, key, values[section][key], kind)

    try:
        return _build(get)
    except ConfigError:
        raise
    except HyperSparseError as exc:
        raise ConfigError(_guess_key(str(exc)), str(exc)) from None


def _guess_key(message: str) -> str:
    for keys in DEFAULTS.values():
        for key in keys:
            if key in message:
                return key
    return "<config>"


def _check(cond, key, message):
    if not cond:
        raise ConfigError(key, message)


def _build(get) -> RunConfig:
    kappa = get("regularization", "pruning_rate", float)
    _check(0 <= kappa < 1, "pruning_rate", f"{kappa} outside [0, 1)")
    kind = get("regularization", "kind")
    _check(kind.lower() in {k.value for k in RegKind}, "kind", f"unknown regularizer {kind!r}")
    eta = get("regularization", "eta", float)
    _check(eta > 1, "eta", "must be > 1")
    lam = get("regularization", "lambda_init", float)
    _check(lam > 0, "lambda_init", "must be positive")
    source = get("data", "source").lower()
    _check(source in ("blobs", "idx"), "source", f"unknown data source {source!r}")
    if source == "idx":
        _check(get("data", "images_path"), "images_path", "required for idx source")
        _check(get("data", "labels_path"), "labels_path", "required for idx source")
    for sec, key in [("pretrain", "epochs"), ("finetune", "epochs")]:
        _check(get(sec, key, int) >= 0, key, "must be nonnegative")
    _check(get("run", "batch_size", int) >= 1, "batch_size", "must be >= 1")
    _check(get("run", "max_reg_epochs", int) >= 1, "max_reg_epochs", "must be >= 1")
    _check(get("run", "tau_rel", float) > 0, "tau_rel", "must be positive")
    hidden = get("model", "hidden_dims", "ints")
    _check(all(h > 0 for h in hidden), "hidden_dims", "must be positive integers")
    seeds = get("run", "seeds", "ints")
    _check(len(seeds) >= 1, "seeds", "need at least one seed")
    decay = get("finetune", "lr_decay_epochs", "ints")

    pipeline = PipelineConfig(
        pretrain_epochs=get("pretrain", "epochs", int),
        pretrain_lr=get("pretrain", "learning_rate", float),
        batch_size=get("run", "batch_size", int),
        reg=RegularizerSpec(kind=kind, lambda_init=lam, eta=eta, pruning_rate=kappa),
        max_reg_epochs=get("run", "max_reg_epochs", int),
        finetune_epochs=get("finetune", "epochs", int),
        finetune_lr=get("finetune", "learning_rate", float),
        finetune_weight_decay=get("finetune", "weight_decay", float),
        lr_decay_factor=get("finetune", "lr_decay_factor", float),
        lr_decay_epochs=decay or None,
        tau_rel=get("run", "tau_rel", float),
        seed=get("run", "seed", int),
    )
    pipeline.finetune_sgd()  # validates the schedule
    return RunConfig(
        pipeline=pipeline,
        hidden_dims=hidden,
        source=source,
        blobs=BlobSpec(
            dims=get("data", "dims", int),
            classes=get("data", "classes", int),
            samples_per_class=get("data", "samples_per_class", int),
            center_spread=get("data", "center_spread", float),
            noise_sigma=get("data", "noise_sigma", float),
            seed=get("data", "data_seed", int),
        ),
        images_path=get("data", "images_path"),
        labels_path=get("data", "labels_path"),
        split=SplitPlan(
            train_fraction=get("data", "train_fraction", float),
            val_fraction=get("data", "val_fraction", float),
            test_fraction=get("data", "test_fraction", float),
            seed=get("data", "split_seed", int),
        ),
        seeds=seeds,
        output_dir=Path(get("run", "output_dir")),
    )


def write_default_config(path, overrides: Optional[dict] = None) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    for section, keys in DEFAULTS.items():
        parser[section] = dict(keys)
        parser[section].update({k: str(v) for k, v in (overrides or {}).get(section, {}).items()})
    with open(path, "w") as f:
        parser.write(f)
