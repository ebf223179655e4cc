"""Optimizers and Lai Training.

Lai Training pretrains with the plain loss, then runs epochs in which a random
``alpha`` share of the mini-batches (rounded up) is trained on the Lai loss and
the rest on the plain loss. Every source of randomness is a separate stream
keyed on the root seed, so a run with ``alpha = 0`` repeats the control run
bit for bit.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datasets import Dataset, load_csv, split, standardize
from .errors import ConfigError, DivergenceError
from .lai_loss import LaiSpec, base_loss_and_grad, batch_lai_loss_and_grad
from .metrics import output_variance, rmse
from .mlp import MlpModel, init_model, predict_batch
from .seeding import stream


@dataclass
class OptimizerConfig:
    name: str = "Adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.name not in ("Adam", "SGD"):
            raise ConfigError(f"optimizer must be 'Adam' or 'SGD', got {self.name!r}")
        if not self.lr > 0 or not self.eps > 0:
            raise ConfigError("learning rate and eps must be > 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("betas must lie in [0, 1)")


@dataclass
class TrainConfig:
    pretrain_epochs: int = 100
    lai_epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    hidden: tuple[int, ...] = (32, 32)
    activation: str = "tanh"
    val_fraction: float = 0.2
    alpha_unit: str = "batch"
    baseline_mode: bool = False
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    lai: LaiSpec = field(default_factory=LaiSpec)

    def __post_init__(self):
        if isinstance(self.optimizer, dict):
            self.optimizer = OptimizerConfig(**self.optimizer)
        if isinstance(self.lai, dict):
            self.lai = LaiSpec(**self.lai)
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.pretrain_epochs < 0 or self.lai_epochs < 0:
            raise ConfigError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.alpha_unit not in ("batch", "point"):
            raise ConfigError(f"alpha_unit must be 'batch' or 'point', got {self.alpha_unit!r}")

    @property
    def alpha(self) -> float:
        return 0.0 if self.baseline_mode else self.lai.alpha

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        return _strict(cls, data, {"optimizer": OptimizerConfig, "lai": LaiSpec})

    @classmethod
    def from_json(cls, path) -> TrainConfig:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["lai"]["lambdas"] = list(self.lai.lambdas)
        return d


def _strict(cls, data: dict, nested: dict):
    known = set(cls.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = dict(data)
    for key, sub in nested.items():
        if key in kwargs:
            if not isinstance(kwargs[key], dict):
                raise ConfigError(f"{key!r} must be an object")
            kwargs[key] = _strict(sub, kwargs[key], {})
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# --- optimizers -------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> AdamState:
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, hyper: OptimizerConfig) -> np.ndarray:
    """Bias-corrected Adam update; mutates ``state`` and returns new params."""
    state.t += 1
    state.m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grads
    state.v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grads * grads
    m_hat = state.m / (1.0 - hyper.beta1**state.t)
    v_hat = state.v / (1.0 - hyper.beta2**state.t)
    return params - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)


def sgd_step(params: np.ndarray, grads: np.ndarray, hyper: OptimizerConfig) -> np.ndarray:
    return params - hyper.lr * grads


class Optimizer:
    def __init__(self, hyper: OptimizerConfig, n_params: int):
        self.hyper = hyper
        self.state = AdamState.zeros(n_params)

    def step(self, model: MlpModel, grads: np.ndarray) -> None:
        p = model.get_params()
        if self.hyper.name == "Adam":
            p = adam_step(p, grads, self.state, self.hyper)
        else:
            p = sgd_step(p, grads, self.hyper)
        model.set_params(p)


# --- epochs -----------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_rmse: float
    seconds: float
    lai_batches: tuple[int, ...] = ()


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    seed: int = 0
    checkpoint: str | None = None

    @property
    def val_rmse(self) -> np.ndarray:
        return np.array([r.val_rmse for r in self.records])

    def write_csv(self, path) -> None:
        """Deterministic per-epoch report (epoch, train_loss, val_rmse)."""
        lines = ["epoch,train_loss,val_rmse"]
        lines += [f"{r.epoch},{r.train_loss!r},{r.val_rmse!r}" for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n")

    def write_timing_csv(self, path) -> None:
        lines = ["epoch,seconds"] + [f"{r.epoch},{r.seconds:.6f}" for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n")

    def write_batch_trail(self, path) -> None:
        """Which batch positions used the Lai loss in each epoch."""
        lines = ["epoch,lai_batches"] + [f"{r.epoch},{' '.join(map(str, r.lai_batches))}" for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n")


def epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    perm = stream(seed, "shuffle", epoch).permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def n_lai_batches(alpha: float, n_batches: int) -> int:
    # round() guards against 0.07 * 100 == 7.000000000000001
    return min(n_batches, math.ceil(round(alpha * n_batches, 9)))


def select_lai_batches(alpha: float, n_batches: int, seed: int, epoch: int) -> np.ndarray:
    count = n_lai_batches(alpha, n_batches)
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    return np.sort(stream(seed, "lai_select", epoch).choice(n_batches, size=count, replace=False))


def _mixed_loss_and_grad(model, Xb, yb, lai_mask, spec: LaiSpec):
    """Per-point mixing: Lai loss on masked rows, plain loss on the rest, one mean."""
    B = len(yb)
    n_lai = int(lai_mask.sum())
    loss = 0.0
    grad = np.zeros(model.n_params)
    if n_lai:
        l, g = batch_lai_loss_and_grad(model, Xb[lai_mask], yb[lai_mask], spec)
        loss += l * n_lai / B
        grad += g * (n_lai / B)
    if n_lai < B:
        keep = ~lai_mask
        l, g = base_loss_and_grad(model, Xb[keep], yb[keep], spec.base)
        loss += l * (B - n_lai) / B
        grad += g * ((B - n_lai) / B)
    return loss, grad


def _run_epoch(model, opt, train: Dataset, val: Dataset | None, config: TrainConfig, epoch: int, alpha: float):
    t0 = time.perf_counter()
    batches = epoch_batches(len(train), config.batch_size, config.seed, epoch)
    point_mode = config.alpha_unit == "point" and alpha > 0
    if point_mode:
        chosen = select_lai_batches(alpha, len(train), config.seed, epoch)  # sample indices
        is_lai = np.zeros(len(train), dtype=bool)
        is_lai[chosen] = True
        lai_set: set[int] = set()
    else:
        chosen = select_lai_batches(alpha, len(batches), config.seed, epoch)
        lai_set = set(chosen.tolist())
    spec = config.lai
    total = 0.0
    for b, rows in enumerate(batches):
        Xb, yb = train.X[rows], train.y[rows]
        if point_mode and is_lai[rows].any():
            loss, g = _mixed_loss_and_grad(model, Xb, yb, is_lai[rows], spec)
        elif b in lai_set:
            loss, g = batch_lai_loss_and_grad(model, Xb, yb, spec)
        else:
            loss, g = base_loss_and_grad(model, Xb, yb, spec.base)
        if not (math.isfinite(loss) and np.all(np.isfinite(g))):
            raise DivergenceError(epoch, loss)
        opt.step(model, g)
        total += loss
    train_loss = total / len(batches)
    val_score = rmse(predict_batch(model, val.X), val.y) if val is not None and len(val) else float("nan")
    if not math.isfinite(train_loss):
        raise DivergenceError(epoch, train_loss)
    return EpochRecord(epoch, train_loss, val_score, time.perf_counter() - t0, tuple(chosen.tolist()))


def pretrain(model: MlpModel, train: Dataset, config: TrainConfig, val: Dataset | None = None, opt: Optimizer | None = None):
    """Plain-loss mini-batch epochs ``0 .. pretrain_epochs-1``."""
    opt = opt or Optimizer(config.optimizer, model.n_params)
    records = [_run_epoch(model, opt, train, val, config, e, 0.0) for e in range(config.pretrain_epochs)]
    return records, opt


def lai_train_epoch(model: MlpModel, train: Dataset, config: TrainConfig, epoch: int, opt: Optimizer, val: Dataset | None = None):
    return _run_epoch(model, opt, train, val, config, epoch, config.alpha)


def train(model: MlpModel, train_set: Dataset, val: Dataset | None, config: TrainConfig) -> TrainReport:
    """Pretraining followed by Lai (or, in baseline mode, plain) epochs."""
    records, opt = pretrain(model, train_set, config, val)
    start = config.pretrain_epochs
    for e in range(start, start + config.lai_epochs):
        records.append(lai_train_epoch(model, train_set, config, e, opt, val))
    return TrainReport(records, config.seed)


@dataclass
class ExperimentResult:
    model: MlpModel
    report: TrainReport
    train: Dataset
    val: Dataset

    def summary(self) -> dict:
        return {
            "final_val_rmse": self.report.records[-1].val_rmse if self.report.records else None,
            "output_variance": output_variance(self.model, self.val.X),
            "epochs": len(self.report.records),
        }


def prepare_data(data: Dataset, config: TrainConfig) -> tuple[Dataset, Dataset]:
    tr, va = split(data, config.val_fraction, config.seed)
    return standardize(tr, va)


def run_experiment(config: TrainConfig, data, drop_id: bool = False) -> ExperimentResult:
    """Split, standardize, initialise, pretrain, then Lai or control epochs.

    ``data`` is a Dataset or a CSV path. Runs that share ``config.seed`` see
    the same split, initial weights and batch order, so a Lai run and its
    ``baseline_mode`` twin differ only in the loss.
    """
    if not isinstance(data, Dataset):
        data = load_csv(data, drop_id=drop_id)
    tr, va = prepare_data(data, config)
    config.lai.lambdas_for(tr.n_features)
    model = init_model([tr.n_features, *config.hidden, 1], config.activation, config.seed)
    report = train(model, tr, va, config)
    return ExperimentResult(model, report, tr, va)
