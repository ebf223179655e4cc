"""CSV loading, seeded splits, standardization and synthetic generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, ParseError
from .seeding import stream


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    standardization: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.X.shape[0] != self.y.size:
            raise DimensionError(f"{self.X.shape[0]} rows but {self.y.size} targets")
        if not self.feature_names:
            self.feature_names = [f"X_{j + 1}" for j in range(self.X.shape[1])]
        if len(self.feature_names) != self.X.shape[1]:
            raise DimensionError("feature_names length does not match column count")

    def __len__(self) -> int:
        return self.y.size

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> Dataset:
        return replace(self, X=self.X[rows], y=self.y[rows], feature_names=list(self.feature_names))


def load_csv(path, drop_id: bool = False) -> Dataset:
    """Read a numeric CSV with a header row; the last column is the target.

    ``drop_id`` discards the first column (e.g. an ``id`` column in
    competition exports).
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if drop_id:
        header, body = header[1:], [r[1:] for r in body]
    if len(header) < 2:
        raise ParseError(f"{path}: need at least one feature column and a target column")
    if not body:
        raise ParseError(f"{path}: no data rows")
    data = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        lineno = i + 2
        if len(row) != len(header):
            raise ParseError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise ParseError(f"{path}: row {lineno}, column {header[j]!r}: bad value {cell!r}")
            data[i, j] = v
    return Dataset(data[:, :-1], data[:, -1], [h.strip() for h in header[:-1]])


def save_csv(dataset: Dataset, path, target_name: str = "target") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*dataset.feature_names, target_name])
        for x, t in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(t))])


def split(dataset: Dataset, val_fraction: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first ``round(n*val_fraction)`` rows go to validation."""
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    n = len(dataset)
    perm = stream(seed, "split").permutation(n)
    n_val = int(round(n * val_fraction))
    return dataset.subset(np.sort(perm[n_val:])), dataset.subset(np.sort(perm[:n_val]))


def standardize(train: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    """Scale features with train mean/std (population); targets untouched."""
    if len(train) == 0:
        raise ConfigError("cannot standardize an empty training set")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    for j, s in enumerate(std):
        if not s > 0:
            raise ConfigError(f"feature {train.feature_names[j]!r} has zero variance")
    return tuple(apply_standardization(d, mean, std) for d in (train, *others))


def apply_standardization(dataset: Dataset, mean, std) -> Dataset:
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if mean.shape != (dataset.n_features,) or std.shape != (dataset.n_features,):
        raise DimensionError("standardization statistics do not match feature count")
    return replace(dataset, X=(dataset.X - mean) / std, standardization=(mean, std))


def gen_linear_band(
    n: int = 2000,
    slope: float = 3.0,
    intercept: float = 4.0,
    x_half_range: float = 1.0,
    band_half_width: float = 5.0,
    seed: int = 0,
    symmetric: bool = True,
) -> Dataset:
    """Points scattered uniformly in a vertical band around a line.

    With ``symmetric`` every draw (x, u) is paired with its reflection
    (-x, -u) through (0, intercept), so the cloud is balanced on either side of
    the line; an odd ``n`` puts the extra point at (0, intercept). Each point
    still has the uniform marginal distribution.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if not x_half_range > 0 or band_half_width < 0:
        raise ConfigError("x_half_range must be > 0 and band_half_width >= 0")
    rng = stream(seed, "data", 0)
    m = n // 2 if symmetric else n
    x = rng.uniform(-x_half_range, x_half_range, size=m)
    noise = rng.uniform(-band_half_width, band_half_width, size=m)
    if symmetric:
        x = np.concatenate([x, -x, np.zeros(n - 2 * m)])
        noise = np.concatenate([noise, -noise, np.zeros(n - 2 * m)])
    return Dataset(x[:, None], slope * x + intercept + noise, ["x"])


def nonlinear_target(X: np.ndarray) -> np.ndarray:
    x = X.T
    return np.sin(2.0 * x[0]) + 0.5 * x[1] ** 2 + x[2] * x[3] + 3.0 * x[7]


def gen_nonlinear(n: int = 5000, seed: int = 0, noise: float = 0.1) -> Dataset:
    """Eight standard-normal features; feature 8 enters with coefficient 3.

    Features 5-7 are nuisance inputs that do not affect the target.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = stream(seed, "data", 1)
    X = rng.standard_normal((n, 8))
    y = nonlinear_target(X)
    if noise > 0:
        y = y + noise * rng.standard_normal(n)
    return Dataset(X, y)


def add_gaussian_noise(X, feature_index: int, sigma: float, seed: int = 0) -> np.ndarray:
    """Copy of ``X`` with N(0, sigma^2) added to one column.

    Draw ``i`` of the stream for (seed, feature) always lands on row ``i``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or not 0 <= feature_index < X.shape[1]:
        raise DimensionError(f"feature index {feature_index} out of range for shape {X.shape}")
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    out = X.copy()
    if sigma > 0:
        out[:, feature_index] += sigma * stream(seed, "noise", feature_index).standard_normal(X.shape[0])
    return out
