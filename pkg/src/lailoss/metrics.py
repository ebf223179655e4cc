"""Evaluation metrics: RMSE, output variance, per-feature noise sensitivity."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import add_gaussian_noise
from .errors import ConfigError, DimensionError, EmptyBatch, ParseError
from .mlp import MlpModel, predict_batch


def rmse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.size != target.size:
        raise DimensionError(f"length mismatch: {pred.size} vs {target.size}")
    if pred.size == 0:
        raise EmptyBatch("rmse of empty vectors")
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def output_variance(model: MlpModel, X) -> float:
    """Population variance of the model's predictions over the rows of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        raise EmptyBatch("output variance of an empty input set")
    return float(np.var(predict_batch(model, X)))


def sensitivity(model: MlpModel, X, feature_index: int, sigma: float = 1.0, seed: int = 0, repeats: int = 1) -> float:
    """Mean |f(x + eps e_j) - f(x)| with one N(0, sigma^2) draw per row.

    ``repeats > 1`` averages over independent noise streams.
    """
    if not sigma > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyBatch("sensitivity needs a non-empty 2-D input set")
    base = predict_batch(model, X)
    total = 0.0
    for r in range(repeats):
        noisy = add_gaussian_noise(X, feature_index, sigma, seed + r)
        total += float(np.mean(np.abs(predict_batch(model, noisy) - base)))
    return total / repeats


@dataclass
class SensitivityReport:
    feature_names: list[str]
    values: np.ndarray
    sigma: float
    seed: int
    n_samples: int
    baseline: np.ndarray | None = field(default=None)

    def percent_change(self) -> np.ndarray | None:
        if self.baseline is None:
            return None
        return 100.0 * (self.values - self.baseline) / self.baseline


def sensitivity_report(
    model: MlpModel, X, feature_names=None, sigma: float = 1.0, seed: int = 0, repeats: int = 1
) -> SensitivityReport:
    X = np.asarray(X, dtype=np.float64)
    names = list(feature_names) if feature_names is not None else [f"X_{j + 1}" for j in range(X.shape[1])]
    vals = np.array([sensitivity(model, X, j, sigma, seed, repeats) for j in range(X.shape[1])])
    return SensitivityReport(names, vals, sigma, seed, X.shape[0])


def write_sensitivity_csv(report: SensitivityReport, path, baseline: SensitivityReport | None = None) -> None:
    """CSV with feature_name, sensitivity and percent change vs ``baseline``."""
    if baseline is not None:
        if baseline.feature_names != report.feature_names:
            raise DimensionError("baseline report has different features")
        report.baseline = baseline.values
    change = report.percent_change()
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feature_name", "sensitivity", "percent_change"])
        for j, name in enumerate(report.feature_names):
            pct = "" if change is None else f"{change[j]:.6g}"
            w.writerow([name, repr(float(report.values[j])), pct])


def read_sensitivity_csv(path) -> SensitivityReport:
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0][:2] != ["feature_name", "sensitivity"]:
        raise ParseError(f"{path}: not a sensitivity report")
    names = [r[0] for r in rows[1:]]
    try:
        vals = np.array([float(r[1]) for r in rows[1:]])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: bad sensitivity value") from exc
    return SensitivityReport(names, vals, sigma=float("nan"), seed=-1, n_samples=0)
