"""Training loop: mixed rating/ranking batches, per-epoch dev selection, multi-seed runs."""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, build_vocabulary
from .errors import ConfigError, DataError, UndefinedMetricError
from .evaluation import MetricReport, pearson, ranking_accuracy, rating_report, ranking_report
from .model import QEModel
from .nn.autodiff import Tape, backward
from .nn.optim import AdamState, adam_step

log = logging.getLogger(__name__)

SELECTION_METRICS = ("auto", "pearson", "accuracy")


@dataclass
class TrainConfig:
    width: int = 50
    keep_rate: float = 0.8
    batch_size: int = 50
    learning_rate: float = 1e-4
    dense_layers: int = 1
    max_epochs: int = 100
    synthetic_epochs: int = 50
    selection_metric: str = "auto"
    activation: str = "tanh"
    seed: int = 0
    clamp: bool = False
    min_count: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("width", "batch_size", "max_epochs", "min_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.keep_rate <= 1:
            raise ConfigError("keep_rate must be in (0, 1]")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.dense_layers != 1:
            raise ConfigError("only one fully connected layer is supported")
        if not 0 <= self.synthetic_epochs <= self.max_epochs:
            raise ConfigError("synthetic_epochs must lie in [0, max_epochs]")
        if self.selection_metric not in SELECTION_METRICS:
            raise ConfigError(f"selection_metric must be one of {SELECTION_METRICS}")
        if self.activation not in ("tanh", "identity"):
            raise ConfigError("activation must be tanh or identity")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**{k: coerce_value(known[k], v) for k, v in values.items()})

    @classmethod
    def read(cls, path, **overrides) -> "TrainConfig":
        """Read ``key = value`` lines (``#`` comments allowed); ``overrides`` win."""
        values = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        values.update(overrides)
        return cls.from_dict(values)

    def write(self, path) -> None:
        Path(path).write_text("".join(f"{k} = {v}\n" for k, v in self.to_dict().items()), encoding="utf-8")


def coerce_value(f: dataclasses.Field, value):
    if not isinstance(value, str):
        return value
    kind = f.type if isinstance(f.type, type) else {"int": int, "float": float, "bool": bool, "str": str}[f.type]
    try:
        if kind is bool:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        return kind(value)
    except ValueError:
        raise ConfigError(f"bad value for {f.name}: {value!r}") from None


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    n_train: int
    dev_metrics: dict
    selection_value: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    selected_epoch: int = 0
    selection_metric: str = ""

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.selected_epoch - 1]

    def comparable(self) -> list:
        """Epoch records without wall-clock times (for determinism checks)."""
        return [dataclasses.replace(e, seconds=0.0) for e in self.epochs]


def resolve_selection_metric(config: TrainConfig, dev_set: Dataset) -> str:
    if config.selection_metric != "auto":
        return config.selection_metric
    return "pearson" if dev_set.has_ratings else "accuracy"


def evaluate(model: QEModel, dataset: Dataset) -> dict[str, MetricReport]:
    """Rating and/or ranking reports for the instances of ``dataset``."""
    insts = list(dataset)
    scores, margins = model.predict_instances(insts)
    reports = {}
    rate = [i for i, inst in enumerate(insts) if not inst.is_ranking]
    rank = [i for i, inst in enumerate(insts) if inst.is_ranking]
    if rate:
        reports["rating"] = rating_report(scores[rate], [insts[i].rating for i in rate])
    if rank:
        reports["ranking"] = ranking_report(margins[rank])
    return reports


def _selection_value(model, dev_set, metric) -> tuple[float, dict]:
    insts = list(dev_set)
    scores, margins = model.predict_instances(insts)
    flat = {}
    if metric == "pearson":
        idx = [i for i, inst in enumerate(insts) if not inst.is_ranking]
        try:
            value = pearson(scores[idx], [insts[i].rating for i in idx])
        except UndefinedMetricError:
            value = float("-inf")
        flat["pearson"] = value
    else:
        idx = [i for i, inst in enumerate(insts) if inst.is_ranking]
        value = ranking_accuracy(margins[idx])
        flat["accuracy"] = value
    return value, flat


def train(train_set: Dataset, dev_set: Dataset, config: TrainConfig = None, vocab=None, delex_rules=None):
    """Train a model and return ``(model at best dev epoch, history)``.

    Synthetic instances take part only in the first ``synthetic_epochs``
    epochs. Each batch takes one Adam step on its mean per-instance loss.
    """
    config = config or TrainConfig()
    if len(train_set) == 0:
        raise DataError("empty training set")
    if len(dev_set) == 0:
        raise DataError("empty development set")
    if any(inst.is_synthetic for inst in dev_set):
        raise DataError("development set contains synthetic instances")
    metric = resolve_selection_metric(config, dev_set)
    if metric == "pearson" and not dev_set.has_ratings or metric == "accuracy" and not dev_set.has_rankings:
        raise DataError(f"development set has no instances for selection metric {metric}")

    init_seq, shuffle_seq, dropout_seq = np.random.SeedSequence(config.seed).spawn(3)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)

    vocab = vocab or build_vocabulary([train_set], config.min_count)
    model = QEModel.create(
        vocab, config.width, seed=init_seq, activation=config.activation, keep_rate=config.keep_rate,
        clamp=config.clamp, delex_rules=delex_rules, config=config.to_dict(),
    )
    params = model.params.tensors()
    state = AdamState()
    all_insts = list(train_set)
    real_insts = [i for i in all_insts if not i.is_synthetic]
    if not real_insts and config.max_epochs > config.synthetic_epochs:
        raise DataError("training set has no non-synthetic instances for the later epochs")

    history = TrainHistory(selection_metric=metric)
    best_value, best_arrays = float("-inf"), None
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        pool = all_insts if epoch <= config.synthetic_epochs else real_insts
        order = shuffle_rng.permutation(len(pool))
        loss_sum = 0.0
        for start in range(0, len(pool), config.batch_size):
            batch = [pool[i] for i in order[start : start + config.batch_size]]
            with Tape() as tape:
                loss = model.batch_loss(batch, train_mode=True, rng=dropout_rng)
            grads = backward(tape, loss, params=params)
            adam_step(params, grads, state, config.learning_rate)
            loss_sum += loss.item() * len(batch)
        value, dev_metrics = _selection_value(model, dev_set, metric)
        record = EpochRecord(epoch, loss_sum / len(pool), len(pool), dev_metrics, value, time.perf_counter() - t0)
        history.epochs.append(record)
        log.debug("epoch %d loss %.4f dev %s %.4f", epoch, record.train_loss, metric, value)
        if value > best_value or best_arrays is None:
            best_value = value
            best_arrays = [p.value.copy() for p in params]
            history.selected_epoch = epoch

    for p, arr in zip(params, best_arrays):
        p.value = arr
    model.metadata = {
        "epoch": history.selected_epoch,
        "selection_metric": metric,
        "dev_metric": best_value,
        "seed": config.seed,
    }
    return model, history


@dataclass
class MultiSeedResult:
    mean: MetricReport
    per_seed: list
    std: dict
    models: list = field(default_factory=list, repr=False)
    histories: list = field(default_factory=list, repr=False)


def multi_seed_run(train_set, dev_set, test_set, config: TrainConfig = None, seeds=(1, 2, 3, 4, 5),
                   keep_models: bool = False) -> MultiSeedResult:
    """Train once per seed, evaluate each selected model on ``test_set`` and average."""
    config = config or TrainConfig()
    seeds = list(seeds)
    if not seeds or len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct and nonempty")
    if any(inst.is_synthetic for inst in test_set):
        raise DataError("test set contains synthetic instances")
    task = "rating" if test_set.has_ratings else "ranking"
    reports, models, histories = [], [], []
    for seed in seeds:
        model, history = train(train_set, dev_set, config.replace(seed=seed))
        reports.append(evaluate(model, test_set)[task])
        histories.append(history)
        if keep_models:
            models.append(model)
    names = sorted(set.intersection(*(set(r.metrics) for r in reports)))
    mean = MetricReport({k: float(np.mean([r.metrics[k] for r in reports])) for k in names}, reports[0].n, task)
    std = {k: float(np.std([r.metrics[k] for r in reports])) for k in names}
    return MultiSeedResult(mean, reports, std, models, histories)
