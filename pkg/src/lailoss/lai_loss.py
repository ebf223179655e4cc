"""Lai loss: pointwise error scaled by a geometric factor of the input slope.

For a slope ``k`` the tangent makes an angle with ``sin = |k|/sqrt(1+k^2)`` and
``cos = 1/sqrt(1+k^2)``. The MAE factor is ``max(sin, lam*cos)`` for
``lam >= 1`` and ``max(sin, lam*cos)/lam`` for ``lam < 1``; the MSE factor is
the squared-trig analogue. Both are minimised where ``|k|`` sits on the
penalty boundary (``lam`` for MAE, ``sqrt(lam)`` for MSE).

The factor functions are written with the dispatching helpers from
:mod:`lailoss.diff_engine`, so they accept floats, numpy arrays and tape
variables alike.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import diff_engine as de
from .errors import ConfigError, DimensionError, EmptyBatch
from .mlp import MlpModel, forward_cache, forward_with_input_grad, param_grad, record_on_tape

BASES = ("MAE", "MSE")
NORMS = ("L1", "L2", "Elastic")


@dataclass
class LaiSpec:
    base: str = "MSE"
    lambdas: tuple[float, ...] = (1.0,)
    norm: str = "L2"
    rho: float = 0.5
    alpha: float = 0.01
    normalize: bool = False

    def __post_init__(self):
        self.base = str(self.base).upper()
        if self.base not in BASES:
            raise ConfigError(f"base must be one of {BASES}, got {self.base!r}")
        norm = {n.upper(): n for n in NORMS}.get(str(self.norm).upper())
        if norm is None:
            raise ConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")
        self.norm = norm
        lams = np.atleast_1d(np.asarray(self.lambdas, dtype=np.float64))
        if lams.ndim != 1 or lams.size == 0:
            raise ConfigError("lambdas must be a non-empty list")
        if not np.all(np.isfinite(lams)) or np.any(lams <= 0):
            raise ConfigError(f"every lambda must be finite and > 0, got {lams.tolist()}")
        self.lambdas = tuple(float(v) for v in lams)
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must lie in [0, 1], got {self.rho}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")

    def lambdas_for(self, n_features: int) -> np.ndarray:
        if len(self.lambdas) == 1:
            return np.full(n_features, self.lambdas[0])
        if len(self.lambdas) != n_features:
            raise ConfigError(f"{len(self.lambdas)} lambdas given for {n_features} features")
        return np.asarray(self.lambdas)


def _check_lambda(lam) -> None:
    if not (lam > 0):
        raise ConfigError(f"lambda must be > 0, got {lam!r}")


# Explicit branch formulas; ``factor_*`` picks one by lambda.


def mae_factor_upper(k, lam):
    """lam >= 1 branch: max(|k|, lam) / sqrt(1 + k^2)."""
    return de.maximum(de.absolute(k), lam) / de.sqrt(1.0 + k * k)


def mae_factor_lower(k, lam):
    """lam < 1 branch: max(|k|/lam, 1) / sqrt(1 + k^2)."""
    return de.maximum(de.absolute(k) / lam, 1.0) / de.sqrt(1.0 + k * k)


def mse_factor_upper(k, lam):
    return de.maximum(k * k, lam) / (1.0 + k * k)


def mse_factor_lower(k, lam):
    return de.maximum(k * k / lam, 1.0) / (1.0 + k * k)


def factor_mae(k, lam):
    _check_lambda(lam)
    return mae_factor_upper(k, lam) if lam >= 1.0 else mae_factor_lower(k, lam)


def factor_mse(k, lam):
    _check_lambda(lam)
    return mse_factor_upper(k, lam) if lam >= 1.0 else mse_factor_lower(k, lam)


def factor(base: str, k, lam):
    return factor_mae(k, lam) if base == "MAE" else factor_mse(k, lam)


def factor_dk(base: str, k: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """d factor / dk, elementwise; at |k| == boundary the first max operand is active."""
    k = np.asarray(k, dtype=np.float64)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), k.shape)
    upper = lam >= 1.0
    scale = np.where(upper, 1.0, 1.0 / lam)  # multiplier on the slope operand
    floor = np.where(upper, lam, 1.0)  # the constant operand
    q = 1.0 + k * k
    if base == "MAE":
        slope_active = np.abs(k) * scale >= floor
        return np.where(slope_active, np.sign(k) * scale, -floor * k) / q**1.5
    slope_active = k * k * scale >= floor
    return np.where(slope_active, scale, -floor) * 2.0 * k / (q * q)


def lai_point_loss(e, k, lam, base: str = "MAE"):
    """|e| * factor_mae(k) for MAE, e^2 * factor_mse(k) for MSE."""
    if base == "MAE":
        return de.absolute(e) * factor_mae(k, lam)
    if base == "MSE":
        return e * e * factor_mse(k, lam)
    raise ConfigError(f"unknown base {base!r}")


def chebyshev_form(e: float, theta: float) -> float:
    """Chebyshev length of the error after rotating into the tangent frame.

    The error is the vertical vector (0, e) from prediction to target. In the
    frame whose first axis runs along the tangent at angle ``theta``, its
    coordinates are (e sin theta, e cos theta).
    """
    c, s = math.cos(theta), math.sin(theta)
    rotation = np.array([[c, s], [-s, c]])
    along, across = rotation @ np.array([0.0, e])
    return max(abs(along), abs(across))


def _aggregate(v: list, norm: str, rho: float, normalize: bool):
    n = len(v)
    l1 = v[0]
    for t in v[1:]:
        l1 = l1 + t
    if norm == "L1":
        return l1 / n if normalize else l1
    ss = v[0] * v[0]
    for t in v[1:]:
        ss = ss + t * t
    l2 = de.sqrt(ss)
    if normalize:
        l1, l2 = l1 / n, l2 / math.sqrt(n)
    if norm == "L2":
        return l2
    return rho * l1 + (1.0 - rho) * l2


def lai_loss_highdim(e, k: Sequence, spec: LaiSpec):
    """Norm of the per-direction loss vector v_j = lai_point_loss(e, k_j, lam_j)."""
    k = list(k) if not isinstance(k, np.ndarray) else list(k.astype(np.float64))
    if len(k) == 0:
        raise DimensionError("empty slope vector")
    lams = spec.lambdas_for(len(k))
    v = [lai_point_loss(e, kj, float(lj), spec.base) for kj, lj in zip(k, lams)]
    out = _aggregate(v, spec.norm, spec.rho, spec.normalize)
    return float(out) if not isinstance(out, de.Var) else out


def _check_xy(model: MlpModel, X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0 or y.size == 0:
        raise EmptyBatch("batch has no samples")
    if X.shape[0] != y.size:
        raise DimensionError(f"{X.shape[0]} rows but {y.size} targets")
    return X, y


def _per_sample(spec: LaiSpec, r: np.ndarray, K: np.ndarray):
    """Per-sample losses and their partials w.r.t. residual and slopes."""
    n = K.shape[1]
    lams = spec.lambdas_for(n)[None, :]
    F = np.empty_like(K)
    for j in range(n):
        F[:, j] = factor(spec.base, K[:, j], float(lams[0, j]))
    dF = factor_dk(spec.base, K, lams)
    if spec.base == "MAE":
        p, dp = np.abs(r), np.sign(r)
    else:
        p, dp = r * r, 2.0 * r
    V = p[:, None] * F
    l1 = V.sum(axis=1)
    l2 = np.sqrt((V * V).sum(axis=1))
    safe = np.where(l2 > 0, l2, 1.0)
    dl2 = np.where(l2[:, None] > 0, V / safe[:, None], 0.0)
    c1, c2 = (1.0 / n, 1.0 / math.sqrt(n)) if spec.normalize else (1.0, 1.0)
    if spec.norm == "L1":
        loss, dV = c1 * l1, np.full_like(V, c1)
    elif spec.norm == "L2":
        loss, dV = c2 * l2, c2 * dl2
    else:
        loss = spec.rho * c1 * l1 + (1.0 - spec.rho) * c2 * l2
        dV = spec.rho * c1 + (1.0 - spec.rho) * c2 * dl2
    d_r = (dV * F).sum(axis=1) * dp
    d_K = dV * p[:, None] * dF
    return loss, d_r, d_K


def batch_lai_loss_and_grad(model: MlpModel, X, y, spec: LaiSpec) -> tuple[float, np.ndarray]:
    """Mean Lai loss over the batch and its gradient w.r.t. the flat parameters."""
    X, y = _check_xy(model, X, y)
    y_hat, K, cache = forward_with_input_grad(model, X)
    loss, d_r, d_K = _per_sample(spec, y_hat - y, K)
    B = X.shape[0]
    return float(loss.mean()), param_grad(model, cache, d_r / B, d_K / B)


def batch_lai_loss(model: MlpModel, X, y, spec: LaiSpec) -> float:
    X, y = _check_xy(model, X, y)
    y_hat, K, _ = forward_with_input_grad(model, X)
    return float(_per_sample(spec, y_hat - y, K)[0].mean())


def batch_lai_loss_tape(model: MlpModel, X, y, spec: LaiSpec) -> de.GradResult:
    """Same quantity as :func:`batch_lai_loss_and_grad`, built on the scalar tape."""
    X, y = _check_xy(model, X, y)
    tape = de.Tape()
    params, ys, ks = record_on_tape(model, tape, X)
    total = None
    for y_hat, k, target in zip(ys, ks, y):
        term = lai_loss_highdim(y_hat - float(target), k, spec)
        total = term if total is None else total + term
    mean = total / float(len(ys))
    return de.GradResult(mean.value, np.asarray(de.grad(mean, params), dtype=np.float64))


def base_loss_and_grad(model: MlpModel, X, y, base: str = "MSE") -> tuple[float, np.ndarray]:
    """Plain MSE or MAE and its parameter gradient (no input-gradient terms)."""
    X, y = _check_xy(model, X, y)
    y_hat, cache = forward_cache(model, X)
    r = y_hat - y
    B = X.shape[0]
    if base == "MSE":
        return float(np.mean(r * r)), param_grad(model, cache, 2.0 * r / B)
    if base == "MAE":
        return float(np.mean(np.abs(r))), param_grad(model, cache, np.sign(r) / B)
    raise ConfigError(f"unknown base {base!r}")
