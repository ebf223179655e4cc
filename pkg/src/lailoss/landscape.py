"""Brute-force loss surfaces of the line y = m*x + b over a (slope, intercept) grid.

For a straight line the input slope is ``m`` at every point, so Lai losses are
evaluated with ``k = m`` directly; no differentiation is involved, which makes
the grid an independent check on the model-based path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .errors import ConfigError, DimensionError, IoError, ParseError
from .lai_loss import lai_point_loss

LOSS_KINDS = ("MAE", "MSE", "LaiMAE", "LaiMSE")

DEFAULT_SLOPE_AXIS = (-1.0, 12.0, 400)
DEFAULT_INTERCEPT_AXIS = (0.0, 8.0, 400)


@dataclass
class LandscapeGrid:
    slopes: np.ndarray
    intercepts: np.ndarray
    loss: np.ndarray  # loss[i, j] at (slopes[i], intercepts[j])
    kind: str
    lam: float | None = None

    @property
    def slope_step(self) -> float:
        return float(self.slopes[1] - self.slopes[0]) if self.slopes.size > 1 else 0.0

    @property
    def intercept_step(self) -> float:
        return float(self.intercepts[1] - self.intercepts[0]) if self.intercepts.size > 1 else 0.0


def make_axis(lo: float, hi: float, steps: int) -> np.ndarray:
    if steps < 1 or (steps > 1 and not hi > lo):
        raise ConfigError(f"bad axis ({lo}, {hi}, {steps})")
    return np.linspace(lo, hi, int(steps))


def grid_eval(
    dataset: Dataset,
    slope_axis=DEFAULT_SLOPE_AXIS,
    intercept_axis=DEFAULT_INTERCEPT_AXIS,
    loss: str = "LaiMAE",
    lam: float | None = 1.0,
) -> LandscapeGrid:
    """Mean pointwise loss of every line on the grid.

    Axes are ``(min, max, steps)`` triples or explicit coordinate arrays.
    """
    if dataset.n_features != 1:
        raise DimensionError(f"landscape needs a 1-feature dataset, got {dataset.n_features}")
    if loss not in LOSS_KINDS:
        raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {loss!r}")
    lai = loss.startswith("Lai")
    if lai and (lam is None or not lam > 0):
        raise ConfigError("Lai losses need lambda > 0")
    slopes = make_axis(*slope_axis) if isinstance(slope_axis, tuple) else np.asarray(slope_axis, dtype=np.float64)
    intercepts = (
        make_axis(*intercept_axis) if isinstance(intercept_axis, tuple) else np.asarray(intercept_axis, dtype=np.float64)
    )
    x = dataset.X[:, 0]
    y = dataset.y
    base = "MAE" if loss.endswith("MAE") else "MSE"
    out = np.empty((slopes.size, intercepts.size))
    for i, m in enumerate(slopes):
        e = (m * x - y)[None, :] + intercepts[:, None]
        if lai:
            pointwise = lai_point_loss(e, float(m), lam, base)
        else:
            pointwise = np.abs(e) if base == "MAE" else e * e
        out[i] = pointwise.mean(axis=1)
    return LandscapeGrid(slopes, intercepts, out, loss, lam if lai else None)


def grid_argmin(grid: LandscapeGrid) -> tuple[float, float, float]:
    """Smallest cell; ties go to the smallest slope, then smallest intercept."""
    if grid.loss.size == 0:
        raise ConfigError("empty grid")
    flat = int(np.argmin(grid.loss))  # first occurrence in row-major order
    i, j = np.unravel_index(flat, grid.loss.shape)
    return float(grid.slopes[i]), float(grid.intercepts[j]), float(grid.loss[i, j])


def export_grid(grid: LandscapeGrid, path) -> None:
    try:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["slope", "intercept", "loss"])
            for i, m in enumerate(grid.slopes):
                for j, b in enumerate(grid.intercepts):
                    w.writerow([f"{m:.17g}", f"{b:.17g}", f"{grid.loss[i, j]:.17g}"])
    except OSError as exc:
        raise IoError(f"cannot write grid to {path}: {exc}") from exc


def load_grid(path, kind: str = "unknown", lam: float | None = None) -> LandscapeGrid:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read grid {path}: {exc}") from exc
    slopes = np.unique(data[:, 0])
    intercepts = np.unique(data[:, 1])
    if slopes.size * intercepts.size != data.shape[0]:
        raise ParseError(f"{path}: rows do not form a full grid")
    return LandscapeGrid(slopes, intercepts, data[:, 2].reshape(slopes.size, intercepts.size), kind, lam)
