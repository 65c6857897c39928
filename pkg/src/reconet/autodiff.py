"""Tape-based reverse-mode differentiation over a closed set of tensor primitives.

A :class:`Tape` records every primitive application as a node holding its
kind, input node ids, static attributes and cached primal value. Nodes are
appended in execution order, so the list is already topologically sorted and
:func:`backward` just walks it in reverse.

The finite-difference helpers at the bottom are the verification oracle; they
only ever call plain ``loss_fn(params) -> float`` and never touch the tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from reconet import head as _head
from reconet import tensor as _t


class UnregisteredOpError(KeyError):
    pass


@dataclass(frozen=True)
class Primitive:
    forward: Callable
    vjp: Callable  # (g, input_values, output, **attrs) -> tuple of input cotangents


def _unbroadcast_bias(g, b):
    return g.reshape(b.shape + (-1,)).sum(axis=-1) if g.ndim > b.ndim else g


def _contract_vjp(g, inputs, out):
    w, v = inputs
    n = w.shape[-1]
    g2 = g.reshape(int(np.prod(w.shape[:-1])), -1)
    v2 = v.reshape(n, -1)
    dw = (g2 @ v2.T).reshape(w.shape)
    dv = (w.reshape(-1, n).T @ g2).reshape(v.shape)
    return dw, dv


def _outer3_vjp(g, inputs, out):
    vc, vh, vw = inputs
    return (
        np.einsum("chw,h,w->c", g, vh, vw),
        np.einsum("chw,c,w->h", g, vc, vw),
        np.einsum("chw,c,h->w", g, vc, vh),
    )


def _pool_spatial_vjp(g, inputs, out):
    (x,) = inputs
    C, H, W = x.shape
    return (np.broadcast_to((g / (H * W))[:, None, None], x.shape).copy(),)


def _pool_over_width_vjp(g, inputs, out):
    (x,) = inputs
    return (np.broadcast_to((g / x.shape[2])[:, :, None], x.shape).copy(),)


def _pool_over_height_vjp(g, inputs, out):
    (x,) = inputs
    return (np.broadcast_to((g / x.shape[1])[:, None, :], x.shape).copy(),)


def _scaled_accumulate_vjp(g, inputs, out):
    acc, lam, t = inputs
    return g, np.asarray(np.sum(g * t)), g * lam


def _concat_vjp(g, inputs, out):
    x, y, gv = inputs
    C = x.shape[0]
    return g[:C], g[C : 2 * C], g[2 * C :].sum(axis=(1, 2))


def _softmax_ce_forward(logits, labels):
    return np.asarray(_head.softmax_cross_entropy(logits, labels))


def _softmax_ce_vjp(g, inputs, out, labels):
    (logits,) = inputs
    K, H, W = logits.shape
    p = np.exp(_head.log_softmax(logits))
    onehot = np.zeros_like(p)
    np.put_along_axis(onehot, labels[None], 1.0, axis=0)
    return ((p - onehot) * (g / (H * W)),)


def _cp_reconstruct_forward(lambdas, vc, vh, vw):
    a = np.zeros((vc.shape[1], vh.shape[1], vw.shape[1]))
    for i in range(lambdas.shape[0]):
        a = _t.scaled_accumulate(a, float(lambdas[i]), _t.outer3(vc[i], vh[i], vw[i]))
    return a


def _cp_reconstruct_vjp(g, inputs, out):
    lambdas, vc, vh, vw = inputs
    gh = np.einsum("chw,rw->rch", g, vw)  # partial contraction shared by the three factor gradients
    d_vc = np.einsum("rch,rh->rc", gh, vh)
    d_vh = np.einsum("rch,rc->rh", gh, vc)
    d_vw = np.einsum("chw,rc,rh->rw", g, vc, vh)
    d_lambdas = np.einsum("rc,rc->r", d_vc, vc)
    lam = lambdas[:, None]
    return d_lambdas, lam * d_vc, lam * d_vh, lam * d_vw


def _take_vjp(g, inputs, out, index):
    (a,) = inputs
    da = np.zeros_like(a)
    da[index] = g
    return (da,)


OPS: dict[str, Primitive] = {
    "sigmoid": Primitive(_t.sigmoid_map, lambda g, i, s: (g * s * (1.0 - s),)),
    "outer3": Primitive(_t.outer3, _outer3_vjp),
    "hadamard": Primitive(_t.hadamard, lambda g, i, o: (g * i[1], g * i[0])),
    "pool_spatial": Primitive(_t.pool_spatial, _pool_spatial_vjp),
    "pool_over_width": Primitive(_t.pool_over_width, _pool_over_width_vjp),
    "pool_over_height": Primitive(_t.pool_over_height, _pool_over_height_vjp),
    "contract": Primitive(_t.contract, _contract_vjp),
    "add_bias": Primitive(_t.add_bias, lambda g, i, o: (g, _unbroadcast_bias(g, i[1]))),
    "scaled_accumulate": Primitive(
        lambda acc, lam, t: _t.scaled_accumulate(acc, float(lam), t), _scaled_accumulate_vjp
    ),
    "cp_reconstruct": Primitive(_cp_reconstruct_forward, _cp_reconstruct_vjp),
    "concat": Primitive(_head.concat_features, _concat_vjp),
    "softmax_ce": Primitive(_softmax_ce_forward, _softmax_ce_vjp),
    "take": Primitive(lambda a, index: a[index], _take_vjp),
    "scale": Primitive(lambda a, factor: a * factor, lambda g, i, o, factor: (g * factor,)),
    "add": Primitive(lambda a, b: a + b, lambda g, i, o: (g, g)),
    "sum": Primitive(lambda a: np.asarray(np.sum(a)), lambda g, i, o: (np.full_like(i[0], g),)),
}


@dataclass
class Node:
    kind: str  # "leaf" and "const" are inputs; anything else names an entry in OPS
    inputs: tuple[int, ...]
    value: np.ndarray
    attrs: dict = field(default_factory=dict)


class Var:
    """Handle to a tape node. Primitive methods append new nodes to the same tape."""

    __slots__ = ("tape", "id")

    def __init__(self, tape: "Tape", id: int):
        self.tape = tape
        self.id = id

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.id].value

    def __repr__(self):
        node = self.tape.nodes[self.id]
        return f"Var({node.kind}#{self.id}, shape={np.shape(node.value)})"


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, int] = {}
        self.output: int | None = None

    def _push(self, node: Node) -> Var:
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def leaf(self, name: str, value) -> Var:
        if name in self.params:
            raise ValueError(f"parameter {name!r} registered twice")
        var = self._push(Node("leaf", (), np.asarray(value, dtype=np.float64), {"name": name}))
        self.params[name] = var.id
        return var

    def const(self, value) -> Var:
        return self._push(Node("const", (), np.asarray(value, dtype=np.float64)))

    def apply(self, kind: str, *inputs: Var, **attrs) -> Var:
        if kind not in OPS:
            raise UnregisteredOpError(kind)
        for v in inputs:
            if v.tape is not self:
                raise ValueError("input belongs to a different tape")
        value = OPS[kind].forward(*(v.value for v in inputs), **attrs)
        return self._push(Node(kind, tuple(v.id for v in inputs), np.asarray(value), attrs))

    @property
    def op_count(self) -> int:
        return sum(1 for n in self.nodes if n.kind not in ("leaf", "const"))

    def structure(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(n.kind, n.inputs) for n in self.nodes]

    def replay(self, params: dict[str, np.ndarray] | None = None) -> np.ndarray:
        """Re-evaluate every recorded node, optionally substituting new parameter values."""
        values: list[np.ndarray] = []
        for node in self.nodes:
            if node.kind == "const":
                values.append(node.value)
            elif node.kind == "leaf":
                name = node.attrs["name"]
                values.append(node.value if params is None else np.asarray(params[name], dtype=np.float64))
            else:
                values.append(np.asarray(OPS[node.kind].forward(*(values[i] for i in node.inputs), **node.attrs)))
        return values[self.output if self.output is not None else -1]

    # primitive shorthands
    def sigmoid(self, a): return self.apply("sigmoid", a)
    def outer3(self, vc, vh, vw): return self.apply("outer3", vc, vh, vw)
    def hadamard(self, a, x): return self.apply("hadamard", a, x)
    def pool_spatial(self, x): return self.apply("pool_spatial", x)
    def pool_over_width(self, x): return self.apply("pool_over_width", x)
    def pool_over_height(self, x): return self.apply("pool_over_height", x)
    def contract(self, w, v): return self.apply("contract", w, v)
    def add_bias(self, t, b): return self.apply("add_bias", t, b)
    def scaled_accumulate(self, acc, lam, t): return self.apply("scaled_accumulate", acc, lam, t)
    def cp_reconstruct(self, lambdas, vc, vh, vw): return self.apply("cp_reconstruct", lambdas, vc, vh, vw)
    def concat(self, x, y, g): return self.apply("concat", x, y, g)
    def softmax_ce(self, logits, labels): return self.apply("softmax_ce", logits, labels=np.asarray(labels))
    def take(self, a, index): return self.apply("take", a, index=index)
    def scale(self, a, factor): return self.apply("scale", a, factor=factor)
    def add(self, a, b): return self.apply("add", a, b)
    def sum(self, a): return self.apply("sum", a)


def record_forward(computation: Callable[[Tape, dict[str, Var]], Var], params: dict[str, np.ndarray]):
    """Run ``computation(tape, leaves)`` on a fresh tape; return ``(output_value, tape)``."""
    tape = Tape()
    leaves = {name: tape.leaf(name, value) for name, value in params.items()}
    out = computation(tape, leaves)
    tape.output = out.id
    return out.value, tape


def backward(tape: Tape, seed_gradient: float = 1.0) -> dict[str, np.ndarray]:
    """Reverse sweep from the tape's scalar output; gradients for every registered parameter."""
    root = tape.output if tape.output is not None else len(tape.nodes) - 1
    if np.ndim(tape.nodes[root].value) != 0:
        raise ValueError(f"backward needs a scalar root, got shape {np.shape(tape.nodes[root].value)}")
    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[root] = np.asarray(seed_gradient, dtype=np.float64)
    for idx in range(root, -1, -1):
        g = grads[idx]
        node = tape.nodes[idx]
        if g is None or not node.inputs:
            continue
        inputs = [tape.nodes[i].value for i in node.inputs]
        cotangents = OPS[node.kind].vjp(g, inputs, node.value, **node.attrs)
        for i, ct in zip(node.inputs, cotangents):
            ct = np.asarray(ct, dtype=np.float64)
            grads[i] = ct.copy() if grads[i] is None else grads[i] + ct
    return {
        name: (np.zeros_like(tape.nodes[i].value) if grads[i] is None else grads[i])
        for name, i in tape.params.items()
    }


def finite_diff_grad(
    loss_fn: Callable[[dict[str, np.ndarray]], float], params: dict[str, np.ndarray], eps: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central differences, perturbing each scalar of ``params`` in place and restoring it."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    out = {}
    for name, arr in params.items():
        g = np.zeros_like(arr, dtype=np.float64)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            f_plus = loss_fn(params)
            arr[idx] = orig - eps
            f_minus = loss_fn(params)
            arr[idx] = orig
            g[idx] = (f_plus - f_minus) / (2 * eps)
        out[name] = g
    return out


def relative_error(g_ad: np.ndarray, g_fd: np.ndarray) -> np.ndarray:
    return np.abs(g_ad - g_fd) / np.maximum(1e-8, np.abs(g_ad) + np.abs(g_fd))


@dataclass
class GradcheckReport:
    max_rel_err: float
    worst_parameter: str
    per_block: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def lines(self) -> list[str]:
        rows = [f"{name} {err:.3e}" for name, err in self.per_block.items()]
        verdict = "PASS" if self.passed else "FAIL"
        rows.append(f"{verdict} max_rel_err={self.max_rel_err:.3e} worst={self.worst_parameter} tolerance={self.tolerance:g}")
        return rows


def gradcheck(
    loss_fn: Callable[[dict[str, np.ndarray]], float],
    params: dict[str, np.ndarray],
    tolerance: float = 1e-6,
    *,
    grad_fn: Callable[[dict[str, np.ndarray]], dict[str, np.ndarray]],
    eps: float = 1e-5,
) -> GradcheckReport:
    """Compare ``grad_fn`` against central differences of ``loss_fn``, scalar by scalar."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    analytic = grad_fn(params)
    numeric = finite_diff_grad(loss_fn, params, eps)
    per_block = {}
    worst, worst_name = -1.0, ""
    for name in params:
        err = relative_error(analytic[name], numeric[name])
        per_block[name] = float(err.max()) if err.size else 0.0
        if err.size and per_block[name] > worst:
            worst = per_block[name]
            idx = np.unravel_index(int(err.argmax()), err.shape)
            worst_name = f"{name}[{','.join(map(str, idx))}]"
    return GradcheckReport(max(worst, 0.0), worst_name, per_block, tolerance)
