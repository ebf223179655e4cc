import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rel_err
from lailoss import diff_engine as de
from lailoss.errors import DimensionError, NonFiniteValue, UnsupportedDepth


def test_evaluate_square():
    t = de.Tape()
    x = t.variable(1.0)
    x * x
    assert de.evaluate(t, [3.0]) == 9.0


def test_evaluate_max_and_tanh():
    t = de.Tape()
    a, b = t.variables([0.0, 0.0])
    de.maximum(a, b)
    assert de.evaluate(t, [2.0, 5.0]) == 5.0

    t = de.Tape()
    de.tanh(t.variable(0.0))
    assert de.evaluate(t) == 0.0


def test_evaluate_checks_inputs():
    t = de.Tape()
    x = t.variable(1.0)
    de.sqrt(x)
    with pytest.raises(DimensionError):
        de.evaluate(t, [1.0, 2.0])
    with pytest.raises(NonFiniteValue):
        de.evaluate(t, [math.nan])
    with pytest.raises(NonFiniteValue, match="node 1"):
        de.evaluate(t, [-1.0])


def test_gradient_basic():
    t = de.Tape()
    x = t.variable(3.0)
    x * x
    res = de.gradient(t, [3.0], wrt=[0])
    assert res.value == 9.0
    assert res.gradient.tolist() == [6.0]


def test_gradient_follows_active_max_branch():
    t = de.Tape()
    x = t.variable(-1.0)
    de.maximum(x, 2.0 * x)
    assert de.gradient(t).gradient.tolist() == [1.0]


def test_max_tie_routes_to_first_operand():
    t = de.Tape()
    a, b = t.variables([2.0, 2.0])
    m = de.maximum(a, b)
    assert de.grad(m, [a, b]) == [1.0, 0.0]


def test_abs_at_zero_has_zero_slope():
    t = de.Tape()
    x = t.variable(0.0)
    assert de.grad(abs(x), [x]) == [0.0]


def test_replay_reuses_tape():
    t = de.Tape()
    x, y = t.variables([1.0, 2.0])
    de.tanh(x * y) + x / y
    for vals in ([0.3, -1.2], [2.0, 0.5]):
        direct = math.tanh(vals[0] * vals[1]) + vals[0] / vals[1]
        assert de.evaluate(t, vals) == pytest.approx(direct, abs=0)


def _tiny_mlp_loss(tape, p, x, target):
    h = [de.tanh(p[2 * i] * x[0] + p[2 * i + 1] * x[1]) for i in range(4)]
    y = sum((p[8 + i] * h[i] for i in range(4)), p[12])
    d = y - target
    return d * d


def test_gradient_matches_finite_differences_on_mlp_loss():
    rng = np.random.default_rng(3)
    params = rng.normal(size=13)
    x = rng.normal(size=2)

    def f(p):
        t = de.Tape()
        return _tiny_mlp_loss(t, t.variables(p), [t.constant(v) for v in x], 0.7).value

    t = de.Tape()
    pv = t.variables(params)
    loss = _tiny_mlp_loss(t, pv, [t.constant(v) for v in x], 0.7)
    g = de.grad(loss, pv)
    assert rel_err(g, de.finite_diff(f, params, 1e-5)) < 1e-6


def test_nested_gradient_linear():
    # outer = (dy/dx)^2 with y = w*x -> d outer / dw = 2w
    res = de.nested_gradient(lambda p, x: p[0] * x[0], lambda y, k: k[0] * k[0], [3.0], [1.7])
    assert res.gradient.tolist() == [6.0]


def test_nested_gradient_value_times_slope():
    # y = w x^2, outer = y * dy/dx = 2 w^2 x^3
    inner = lambda p, x: p[0] * x[0] * x[0]  # noqa: E731
    outer = lambda y, k: y * k[0]  # noqa: E731
    res = de.nested_gradient(inner, outer, [1.0], [2.0])
    assert res.value == 16.0

    def composite(w):
        return 2.0 * w[0] ** 2 * 2.0**3

    fd = de.finite_diff(composite, [1.0], 1e-5)
    assert rel_err(res.gradient, fd) < 1e-8
    assert res.gradient[0] == 32.0


def test_nested_gradient_without_slope_dependence_is_plain_gradient():
    inner = lambda p, x: de.tanh(p[0] * x[0] + p[1])  # noqa: E731
    res = de.nested_gradient(inner, lambda y, k: y * y, [0.4, -0.3], [1.5])
    t = de.Tape()
    p = t.variables([0.4, -0.3])
    y = de.tanh(p[0] * 1.5 + p[1])
    assert res.gradient.tolist() == de.grad(y * y, p)


def test_third_level_is_rejected():
    t = de.Tape()
    w, x = t.variables([1.0, 2.0])
    y = w * x * x
    (k,) = de.grad(y, [x], create_graph=True)
    with pytest.raises(UnsupportedDepth):
        de.grad(k * k, [x], create_graph=True)


def test_finite_diff_examples():
    assert de.finite_diff(lambda v: v[0] ** 2, [3.0], 1e-5)[0] == pytest.approx(6.0, abs=1e-8)
    assert de.finite_diff(lambda v: abs(v[0]), [0.0], 1e-5)[0] == 0.0
    with pytest.raises(ValueError):
        de.finite_diff(lambda v: v[0], [0.0], 0.0)


# --- property tests -----------------------------------------------------------

_UNARY = ["tanh", "square", "neg", "sqrtabs"]
_BINARY = ["add", "sub", "mul", "div"]


def _build(tape, leaves, program):
    """Apply a random straight-line program of smooth ops to the leaves."""
    nodes = list(leaves)
    for op, i, j in program:
        a, b = nodes[i % len(nodes)], nodes[j % len(nodes)]
        if op == "tanh":
            nodes.append(de.tanh(a))
        elif op == "square":
            nodes.append(de.square(a))
        elif op == "neg":
            nodes.append(-a)
        elif op == "sqrtabs":
            nodes.append(de.sqrt(1.0 + a * a))
        elif op == "add":
            nodes.append(a + b)
        elif op == "sub":
            nodes.append(a - b)
        elif op == "mul":
            nodes.append(a * b)
        else:
            nodes.append(a / (1.5 + de.tanh(b)))
    return nodes[-1]


programs = st.lists(
    st.tuples(st.sampled_from(_UNARY + _BINARY), st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=12
)
leaf_vals = st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3)


@settings(max_examples=60, deadline=None)
@given(programs, programs, leaf_vals, st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(prog_f, prog_g, vals, a, b):
    def grads(combine):
        t = de.Tape()
        leaves = t.variables(vals)
        f, g = _build(t, leaves, prog_f), _build(t, leaves, prog_g)
        return np.array(de.grad(combine(f, g), leaves))

    gf = grads(lambda f, g: f)
    gg = grads(lambda f, g: g)
    gc = grads(lambda f, g: a * f + b * g)
    np.testing.assert_allclose(gc, a * gf + b * gg, rtol=1e-12, atol=1e-12 * (1 + np.abs(gc).max()))


@settings(max_examples=60, deadline=None)
@given(programs, leaf_vals)
def test_smooth_tapes_match_finite_differences(prog, vals):
    def f(v):
        t = de.Tape()
        return _build(t, t.variables(v), prog).value

    t = de.Tape()
    leaves = t.variables(vals)
    g = de.grad(_build(t, leaves, prog), leaves)
    fd = de.finite_diff(f, vals, 1e-5)
    assert rel_err(g, fd, floor=1e-3) < 1e-5


@settings(max_examples=40, deadline=None)
@given(programs, leaf_vals)
def test_nested_smooth_composites_match_finite_differences(prog, vals):
    # params = vals[:2], input = vals[2]; outer mixes value and slope
    def inner(p, x):
        t = x[0].tape
        return _build(t, [p[0], p[1], x[0]], prog) + p[0] * x[0]

    def outer(y, k):
        return y * k[0] + de.tanh(k[0])

    res = de.nested_gradient(inner, outer, vals[:2], vals[2:])

    def composite(p):
        return de.nested_gradient(inner, outer, p, vals[2:]).value

    fd = de.finite_diff(composite, vals[:2], 1e-5)
    assert rel_err(res.gradient, fd, floor=1e-3) < 1e-4


def test_determinism_and_thread_independence():
    rng = np.random.default_rng(11)
    vals = rng.normal(size=13)
    x = rng.normal(size=2)

    def run():
        t = de.Tape()
        pv = t.variables(vals)
        return de.grad(_tiny_mlp_loss(t, pv, [t.constant(v) for v in x], 0.1), pv)

    serial = run()
    results = [None] * 4

    def work(i):
        results[i] = run()

    threads = [threading.Thread(target=work, args=(i,)) for i in range(4)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert all(r == serial for r in results)
    assert run() == serial
