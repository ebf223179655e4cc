"""Scalar tape for reverse-mode differentiation with one recordable gradient pass.

Every arithmetic operation on a :class:`Var` appends a node to its :class:`Tape`.
:func:`grad` sweeps the tape backwards; with ``create_graph=True`` the sweep is
itself written onto the tape, so the resulting gradients are ordinary ``Var``
objects that can feed a second, outer loss (double backpropagation)::

    tape = Tape()
    w, x = tape.variable(3.0), tape.variable(2.0)
    y = w * x
    (k,) = grad(y, [x], create_graph=True)   # k = dy/dx, still on the tape
    outer = k * k
    grad(outer, [w])                         # -> [2 * w] == [6.0]

Only two levels are supported: a gradient that was recorded cannot be recorded
again.

The helpers ``maximum``, ``absolute``, ``tanh``, ``sqrt`` and friends dispatch on
their argument type, so code written with them runs unchanged on plain floats,
numpy arrays, or tape variables.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NonFiniteValue, UnsupportedDepth

__all__ = [
    "Tape",
    "Var",
    "GradResult",
    "evaluate",
    "gradient",
    "grad",
    "nested_gradient",
    "finite_diff",
    "maximum",
    "absolute",
    "square",
    "sqrt",
    "tanh",
    "sign",
    "step_ge",
]


def _sign(x: float) -> float:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


# Forward rules for replay. Arity is implied by the lambda signature.
_FORWARD: dict[str, Callable[..., float]] = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b if b != 0.0 else math.nan,
    "neg": lambda a: -a,
    "max": lambda a, b: a if a >= b else b,
    "abs": abs,
    "square": lambda a: a * a,
    "sqrt": lambda a: math.sqrt(a) if a >= 0.0 else math.nan,
    "tanh": math.tanh,
    "sign": _sign,
    "ge": lambda a, b: 1.0 if a >= b else 0.0,
}


class Tape:
    """Append-only record of scalar operations.

    Nodes are stored in parallel lists (``ops``, ``args``, ``values``,
    ``levels``); a node's operands always have smaller indices, so the list
    order is a topological order. ``levels`` is 0 for nodes built by ordinary
    evaluation and 1 for nodes derived from a recorded gradient pass.
    """

    def __init__(self) -> None:
        self.ops: list[str] = []
        self.args: list[tuple[int, ...]] = []
        self.values: list[float] = []
        self.levels: list[int] = []
        self.leaves: list[int] = []
        self._recording_level = 0

    def __len__(self) -> int:
        return len(self.ops)

    def variable(self, value: float) -> Var:
        """Create a leaf; leaves are numbered in creation order."""
        var = self._push("leaf", (), float(value), level=0)
        self.leaves.append(var.index)
        return var

    def variables(self, values: Iterable[float]) -> list[Var]:
        return [self.variable(v) for v in values]

    def constant(self, value: float) -> Var:
        return self._push("const", (), float(value), level=0)

    def _push(self, op: str, args: tuple[int, ...], value: float, level: int | None = None) -> Var:
        if not math.isfinite(value):
            raise NonFiniteValue(f"node {len(self.ops)} ({op}) produced {value!r}")
        if level is None:
            level = max([self.levels[a] for a in args] + [self._recording_level])
        self.ops.append(op)
        self.args.append(args)
        self.values.append(value)
        self.levels.append(level)
        return Var(self, len(self.ops) - 1)

    def apply(self, op: str, *operands: Var | float) -> Var:
        idx = tuple(self._as_index(o) for o in operands)
        value = _FORWARD[op](*(self.values[i] for i in idx))
        return self._push(op, idx, value)

    def _as_index(self, operand: Var | float) -> int:
        if isinstance(operand, Var):
            if operand.tape is not self:
                raise ValueError("cannot mix variables from different tapes")
            return operand.index
        return self.constant(operand).index


class Var:
    """Handle to one node of a :class:`Tape`."""

    __slots__ = ("tape", "index")
    __array_priority__ = 1000  # keep numpy scalars from swallowing Var operands

    def __init__(self, tape: Tape, index: int) -> None:
        self.tape = tape
        self.index = index

    @property
    def value(self) -> float:
        return self.tape.values[self.index]

    @property
    def level(self) -> int:
        return self.tape.levels[self.index]

    def __repr__(self) -> str:
        return f"Var(#{self.index} {self.tape.ops[self.index]} = {self.value!r})"

    def __float__(self) -> float:
        return self.value

    def __add__(self, other):
        return self.tape.apply("add", self, other)

    def __radd__(self, other):
        return self.tape.apply("add", other, self)

    def __sub__(self, other):
        return self.tape.apply("sub", self, other)

    def __rsub__(self, other):
        return self.tape.apply("sub", other, self)

    def __mul__(self, other):
        return self.tape.apply("mul", self, other)

    def __rmul__(self, other):
        return self.tape.apply("mul", other, self)

    def __truediv__(self, other):
        return self.tape.apply("div", self, other)

    def __rtruediv__(self, other):
        return self.tape.apply("div", other, self)

    def __neg__(self):
        return self.tape.apply("neg", self)

    def __abs__(self):
        return self.tape.apply("abs", self)


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def maximum(a, b):
    """max(a, b); ties resolve to ``a`` (gradient routed to the first operand)."""
    tape = _tape_of(a, b)
    if tape is not None:
        return tape.apply("max", a, b)
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.where(np.asarray(a) >= np.asarray(b), a, b)
    return a if a >= b else b


def absolute(x):
    if isinstance(x, Var):
        return x.tape.apply("abs", x)
    return np.abs(x) if isinstance(x, np.ndarray) else abs(x)


def square(x):
    if isinstance(x, Var):
        return x.tape.apply("square", x)
    return x * x


def sqrt(x):
    if isinstance(x, Var):
        return x.tape.apply("sqrt", x)
    return np.sqrt(x) if isinstance(x, np.ndarray) else math.sqrt(x)


def tanh(x):
    if isinstance(x, Var):
        return x.tape.apply("tanh", x)
    return np.tanh(x) if isinstance(x, np.ndarray) else math.tanh(x)


def sign(x):
    """Sign with sign(0) == 0; its derivative is zero everywhere."""
    if isinstance(x, Var):
        return x.tape.apply("sign", x)
    return np.sign(x) if isinstance(x, np.ndarray) else _sign(x)


def step_ge(a, b):
    """1.0 where a >= b else 0.0; piecewise constant, zero derivative."""
    tape = _tape_of(a, b)
    if tape is not None:
        return tape.apply("ge", a, b)
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return (np.asarray(a) >= np.asarray(b)).astype(np.float64)
    return 1.0 if a >= b else 0.0


@dataclass(frozen=True)
class GradResult:
    value: float
    gradient: np.ndarray


def evaluate(tape: Tape, leaf_values: Sequence[float] | None = None, root: int | Var | None = None) -> float:
    """Replay ``tape`` with new leaf values and return the root value.

    The root defaults to the last node. Cached node values are overwritten, so
    a later :func:`grad` on the same tape differentiates at the new point.
    """
    if leaf_values is not None:
        if len(leaf_values) != len(tape.leaves):
            raise DimensionError(f"expected {len(tape.leaves)} leaf values, got {len(leaf_values)}")
        values = tape.values
        for leaf, v in zip(tape.leaves, leaf_values):
            v = float(v)
            if not math.isfinite(v):
                raise NonFiniteValue(f"leaf node {leaf} given {v!r}")
            values[leaf] = v
        for i, op in enumerate(tape.ops):
            if op == "leaf" or op == "const":
                continue
            v = _FORWARD[op](*(values[a] for a in tape.args[i]))
            if not math.isfinite(v):
                raise NonFiniteValue(f"node {i} ({op}) produced {v!r}")
            values[i] = v
    return tape.values[_root_index(tape, root)]


def _root_index(tape: Tape, root: int | Var | None) -> int:
    if root is None:
        if not tape.ops:
            raise ValueError("empty tape")
        return len(tape.ops) - 1
    return root.index if isinstance(root, Var) else int(root)


def _backward(tape: Tape, root: int, record: bool) -> dict[int, object]:
    """Reverse sweep from ``root``. Adjoints are floats, or Vars when recording."""
    if record:
        if tape.levels[root] >= 1:
            raise UnsupportedDepth("a recorded gradient cannot be differentiated with create_graph again")
        node = lambda i: Var(tape, i)  # noqa: E731
        adj: dict[int, object] = {root: tape.constant(1.0)}
    else:
        values = tape.values
        node = values.__getitem__
        adj = {root: 1.0}

    ops, args = tape.ops, tape.args

    def acc(j: int, g) -> None:
        prev = adj.get(j)
        adj[j] = g if prev is None else prev + g

    grads: dict[int, object] = {}
    prev_level = tape._recording_level
    if record:
        tape._recording_level = 1
    try:
        for i in range(root, -1, -1):
            g = adj.pop(i, None)
            if g is None:
                continue
            op = ops[i]
            if op == "leaf":
                grads[i] = g
                continue
            a = args[i]
            if op == "add":
                acc(a[0], g)
                acc(a[1], g)
            elif op == "sub":
                acc(a[0], g)
                acc(a[1], -g)
            elif op == "mul":
                acc(a[0], g * node(a[1]))
                acc(a[1], g * node(a[0]))
            elif op == "div":
                gb = g / node(a[1])
                acc(a[0], gb)
                acc(a[1], -gb * node(i))
            elif op == "neg":
                acc(a[0], -g)
            elif op == "max":
                if record:
                    s = step_ge(node(a[0]), node(a[1]))
                    acc(a[0], g * s)
                    acc(a[1], g * (1.0 - s))
                elif values[a[0]] >= values[a[1]]:
                    acc(a[0], g)
                else:
                    acc(a[1], g)
            elif op == "abs":
                acc(a[0], g * sign(node(a[0])))
            elif op == "square":
                acc(a[0], g * (2.0 * node(a[0])))
            elif op == "sqrt":
                acc(a[0], g * 0.5 / node(i))
            elif op == "tanh":
                t = node(i)
                acc(a[0], g * (1.0 - t * t))
            # const, sign, ge: zero derivative
    finally:
        tape._recording_level = prev_level
    return grads


def grad(root: Var, wrt: Sequence[Var], create_graph: bool = False) -> list:
    """Gradient of ``root`` with respect to each leaf in ``wrt``.

    With ``create_graph`` the result is a list of ``Var`` living on the same
    tape (unreached leaves get a constant 0); otherwise a list of floats.
    """
    tape = root.tape
    for w in wrt:
        if w.tape is not tape or tape.ops[w.index] != "leaf":
            raise ValueError("gradient targets must be leaves of the root's tape")
    grads = _backward(tape, root.index, create_graph)
    if create_graph:
        zero = None
        out = []
        for w in wrt:
            g = grads.get(w.index)
            if g is None:
                zero = zero or tape.constant(0.0)
                g = zero
            out.append(g)
        return out
    out = [float(grads.get(w.index, 0.0)) for w in wrt]
    for w, g in zip(wrt, out):
        if not math.isfinite(g):
            raise NonFiniteValue(f"gradient w.r.t. leaf node {w.index} is {g!r}")
    return out


def gradient(
    tape: Tape,
    leaf_values: Sequence[float] | None = None,
    wrt: Iterable[int] | None = None,
    root: int | Var | None = None,
) -> GradResult:
    """Replay the tape at ``leaf_values`` and return value plus gradient.

    ``wrt`` holds leaf positions (0 = first created leaf); default is all
    leaves.
    """
    value = evaluate(tape, leaf_values, root)
    positions = range(len(tape.leaves)) if wrt is None else list(wrt)
    targets = [Var(tape, tape.leaves[p]) for p in positions]
    g = grad(Var(tape, _root_index(tape, root)), targets)
    return GradResult(value=value, gradient=np.asarray(g, dtype=np.float64))


def nested_gradient(
    inner: Callable[[list[Var], list[Var]], Var],
    outer: Callable[[Var, list[Var]], Var],
    params: Sequence[float],
    inputs: Sequence[float],
) -> GradResult:
    """Differentiate ``outer(y, dy/dx)`` with respect to the parameters.

    ``inner(params, inputs)`` builds the scalar prediction ``y``; its input
    gradient is recorded on the tape and handed to ``outer`` together with
    ``y``. Returns the outer value and its parameter gradient.
    """
    tape = Tape()
    p = tape.variables(params)
    x = tape.variables(inputs)
    y = inner(p, x)
    k = grad(y, x, create_graph=True)
    out = outer(y, k)
    if not isinstance(out, Var):
        out = tape.constant(out)
    return GradResult(value=out.value, gradient=np.asarray(grad(out, p), dtype=np.float64))


def finite_diff(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function."""
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=np.float64, ndmin=1)
    out = np.empty_like(x)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        out[j] = (f(xp) - f(xm)) / (2.0 * h)
    return out
