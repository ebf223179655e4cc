"""Feed-forward scalar regressor with input gradients.

Two routes compute the same quantities:

* a vectorised numpy route (``forward_with_input_grad`` / ``param_grad``) that
  carries the input-gradient chain alongside the forward pass and
  back-propagates through both in closed form; training uses this one.
* a tape route (``record_on_tape``) that builds the network on a
  :class:`~lailoss.diff_engine.Tape`, takes the input gradient with
  ``create_graph=True`` and leaves everything differentiable. It is slow and
  exists as an independent check of the first route.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diff_engine as de
from .errors import ConfigError, DimensionError, IoError, NonFiniteValue, ParseError
from .seeding import stream

ACTIVATIONS = ("tanh", "identity")
MAX_HIDDEN_LAYERS = 3
MAX_WIDTH = 256


@dataclass
class MlpModel:
    layer_sizes: list[int]
    activation: str = "tanh"
    weights: list[np.ndarray] = field(default_factory=list)  # (fan_in, fan_out)
    biases: list[np.ndarray] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_params(self) -> np.ndarray:
        """Flat copy: each layer's weight matrix (row-major) then its bias."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise DimensionError(f"expected {self.n_params} parameters, got {flat.shape}")
        if not np.all(np.isfinite(flat)):
            raise NonFiniteValue("non-finite parameter value")
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos : pos + b.size].copy()
            pos += b.size

    def copy(self) -> MlpModel:
        return MlpModel(
            list(self.layer_sizes),
            self.activation,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


@dataclass(frozen=True)
class DualEvaluation:
    y_hat: float
    k: np.ndarray


def _validate_architecture(layer_sizes: Sequence[int], activation: str) -> list[int]:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ConfigError("layer_sizes needs at least an input and an output size")
    if any(s <= 0 for s in sizes):
        raise ConfigError(f"layer sizes must be positive, got {sizes}")
    if sizes[-1] != 1:
        raise ConfigError("output layer must have exactly one unit")
    if len(sizes) - 2 > MAX_HIDDEN_LAYERS or any(s > MAX_WIDTH for s in sizes[1:-1]):
        raise ConfigError(f"at most {MAX_HIDDEN_LAYERS} hidden layers of width <= {MAX_WIDTH}")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}; choose from {ACTIVATIONS}")
    return sizes


def init_model(layer_sizes: Sequence[int], activation: str = "tanh", seed: int = 0) -> MlpModel:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    sizes = _validate_architecture(layer_sizes, activation)
    rng = stream(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, activation, weights, biases)


def linear_model(weights: Sequence[float], bias: float = 0.0) -> MlpModel:
    """Single-layer identity model y = w.x + b."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    return MlpModel([w.shape[0], 1], "identity", [w], [np.array([float(bias)])])


def _act(name: str, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if name == "tanh" else z


def _dact(name: str, a: np.ndarray) -> np.ndarray:
    """Activation derivative expressed through the activation output."""
    return 1.0 - a * a if name == "tanh" else np.ones_like(a)


def _ddact(name: str, a: np.ndarray) -> np.ndarray:
    return -2.0 * a * (1.0 - a * a) if name == "tanh" else np.zeros_like(a)


def _check_batch(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_inputs:
        raise DimensionError(f"model expects {model.n_inputs} features, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteValue("input contains non-finite values")
    return X


def _forward(model: MlpModel, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    acts = [X]
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        acts.append(_act(model.activation, acts[-1] @ w + b))
    y = acts[-1] @ model.weights[-1][:, 0] + model.biases[-1][0]
    return y, acts


def predict_batch(model: MlpModel, X) -> np.ndarray:
    return _forward(model, _check_batch(model, X))[0]


def predict(model: MlpModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("predict takes a single feature vector")
    return float(predict_batch(model, x)[0])


@dataclass
class _Cache:
    acts: list[np.ndarray]
    deltas: list[np.ndarray]  # deltas[l] = dy/da_l, deltas[0] = K
    us: list[np.ndarray | None]  # us[l] = deltas[l] * act'(z_l)


def forward_with_input_grad(model: MlpModel, X) -> tuple[np.ndarray, np.ndarray, _Cache]:
    """Predictions and per-row input gradients K[i, j] = d y_i / d x_ij."""
    X = _check_batch(model, X)
    y, acts = _forward(model, X)
    H = model.n_hidden
    deltas: list = [None] * (H + 1)
    us: list = [None] * (H + 1)
    deltas[H] = np.broadcast_to(model.weights[-1][:, 0], (X.shape[0], model.layer_sizes[H]))
    for l in range(H, 0, -1):
        us[l] = deltas[l] * _dact(model.activation, acts[l])
        deltas[l - 1] = us[l] @ model.weights[l - 1].T
    K = np.array(deltas[0], dtype=np.float64)
    return y, K, _Cache(acts, deltas, us)


def forward_cache(model: MlpModel, X) -> tuple[np.ndarray, _Cache]:
    """Forward pass keeping only what :func:`param_grad` needs without ``d_K``."""
    y, acts = _forward(model, _check_batch(model, X))
    return y, _Cache(acts, [], [])


def predict_with_input_grad(model: MlpModel, x) -> DualEvaluation:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("predict_with_input_grad takes a single feature vector")
    y, K, _ = forward_with_input_grad(model, x)
    return DualEvaluation(float(y[0]), K[0].copy())


def param_grad(model: MlpModel, cache: _Cache, d_y, d_K=None) -> np.ndarray:
    """Back-propagate adjoints of predictions and input gradients to parameters.

    ``d_y`` has shape (B,), ``d_K`` (B, n_inputs) or None. The input-gradient
    chain is reversed first (it contributes to the pre-activation adjoints
    through act''), then the ordinary forward chain.
    """
    H = model.n_hidden
    name = model.activation
    acts, deltas, us = cache.acts, cache.deltas, cache.us
    gW = [np.zeros_like(w) for w in model.weights]
    gb = [np.zeros_like(b) for b in model.biases]
    dz = [None] + [np.zeros_like(a) for a in acts[1:]]

    if d_K is not None:
        dd = np.asarray(d_K, dtype=np.float64)
        for l in range(1, H + 1):
            w = model.weights[l - 1]
            du = dd @ w
            gW[l - 1] += dd.T @ us[l]
            dz[l] += du * deltas[l] * _ddact(name, acts[l])
            dd = du * _dact(name, acts[l])
        gW[H][:, 0] += dd.sum(axis=0)

    d_y = np.asarray(d_y, dtype=np.float64)
    gW[H][:, 0] += acts[H].T @ d_y
    gb[H][0] += d_y.sum()
    da = np.outer(d_y, model.weights[H][:, 0])
    for l in range(H, 0, -1):
        dzl = da * _dact(name, acts[l]) + dz[l]
        gW[l - 1] += acts[l - 1].T @ dzl
        gb[l - 1] += dzl.sum(axis=0)
        da = dzl @ model.weights[l - 1].T

    parts = []
    for w, b in zip(gW, gb):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


# --- tape route -------------------------------------------------------------


def _unflatten(model: MlpModel, flat: Sequence) -> tuple[list[list[list]], list[list]]:
    weights, biases = [], []
    pos = 0
    for w, b in zip(model.weights, model.biases):
        fan_in, fan_out = w.shape
        weights.append([list(flat[pos + r * fan_out : pos + (r + 1) * fan_out]) for r in range(fan_in)])
        pos += w.size
        biases.append(list(flat[pos : pos + fan_out]))
        pos += fan_out
    return weights, biases


def forward_scalar(model: MlpModel, params: Sequence, x: Sequence):
    """Forward pass over plain floats or tape variables.

    ``params`` is in :meth:`MlpModel.get_params` order; it may hold Vars.
    """
    weights, biases = _unflatten(model, params)
    a = list(x)
    last = len(weights) - 1
    for l, (w, b) in enumerate(zip(weights, biases)):
        out = []
        for q in range(len(b)):
            s = b[q]
            for p in range(len(a)):
                s = s + a[p] * w[p][q]
            out.append(de.tanh(s) if l < last and model.activation == "tanh" else s)
        a = out
    return a[0]


def record_on_tape(model: MlpModel, tape: de.Tape, X, params: Sequence[de.Var] | None = None):
    """Build predictions and recorded input gradients for each row of ``X``.

    Returns ``(params, ys, ks)`` where ``ys[i]`` is a Var and ``ks[i]`` a list of
    Vars that remain differentiable with respect to ``params``.
    """
    X = _check_batch(model, X)
    if params is None:
        params = tape.variables(model.get_params())
    ys, ks = [], []
    for row in X:
        xs = tape.variables(row)
        y = forward_scalar(model, params, xs)
        ys.append(y)
        ks.append(de.grad(y, xs, create_graph=True))
    return params, ys, ks


# --- checkpoints ------------------------------------------------------------


def _fmt(values) -> str:
    return ",".join(repr(float(v)) for v in np.asarray(values, dtype=np.float64).ravel())


def save_checkpoint(model: MlpModel, path, standardization: tuple[np.ndarray, np.ndarray] | None = None) -> None:
    """Write a flat ``key=value`` text checkpoint.

    Arrays are row-major decimal text with round-trip precision. Optional
    ``feature_mean``/``feature_std`` record the input standardization.
    """
    lines = [
        "format=lailoss-mlp-1",
        "layer_sizes=" + ",".join(str(s) for s in model.layer_sizes),
        f"activation={model.activation}",
    ]
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"W{i}={_fmt(w)}")
        lines.append(f"b{i}={_fmt(b)}")
    if standardization is not None:
        lines.append(f"feature_mean={_fmt(standardization[0])}")
        lines.append(f"feature_std={_fmt(standardization[1])}")
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> tuple[MlpModel, tuple[np.ndarray, np.ndarray] | None]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    kv = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{n}: expected key=value")
        key, value = line.split("=", 1)
        kv[key.strip()] = value.strip()

    def floats(key):
        try:
            return np.array([float(t) for t in kv[key].split(",")]) if kv[key] else np.zeros(0)
        except (KeyError, ValueError) as exc:
            raise ParseError(f"{path}: bad or missing entry {key!r}") from exc

    try:
        sizes = [int(t) for t in kv["layer_sizes"].split(",")]
        activation = kv["activation"]
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: bad or missing header entries") from exc
    sizes = _validate_architecture(sizes, activation)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w, b = floats(f"W{i}"), floats(f"b{i}")
        if w.size != fan_in * fan_out or b.size != fan_out:
            raise ParseError(f"{path}: layer {i} has wrong parameter count")
        weights.append(w.reshape(fan_in, fan_out))
        biases.append(b)
    stats = None
    if "feature_mean" in kv:
        stats = (floats("feature_mean"), floats("feature_std"))
    return MlpModel(sizes, activation, weights, biases), stats
