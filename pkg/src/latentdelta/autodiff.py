"""Minimal reverse-mode differentiation over dense float64 arrays.

A graph is built once from :class:`Node` objects (parameters, inputs,
constants, and ops), then evaluated repeatedly with ``forward`` and
differentiated with ``backward``. Values are numpy float64 throughout;
persistence happens elsewhere at float32.

Supported op kinds: add, sub, mul, scale, matmul, concat, slice,
leaky_relu, relu, group_norm, affine_modulate, l1_distance, l2_distance,
cosine_loss, sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COSINE_EPS = 1e-12   # guard for cosine denominators
GROUP_NORM_EPS = 1e-6  # variance floor inside group norm


class GraphError(Exception):
    """Malformed graph or misuse of the evaluation API."""


class ShapeMismatch(GraphError):
    """Incompatible operand shapes; message names the op and shapes."""

    def __init__(self, op: str, *shapes):
        super().__init__(f"{op}: incompatible shapes {[tuple(s) for s in shapes]}")
        self.op = op
        self.shapes = [tuple(s) for s in shapes]


class Node:
    """One vertex of the computation graph.

    ``op`` is the kind string, ``parents`` the operand nodes, ``value`` the
    cached forward result (None until forward has run), ``grad`` the cached
    adjoint. Leaf kinds are "param", "input" and "const".
    """

    __slots__ = ("op", "parents", "value", "grad", "name", "attrs")

    def __init__(self, op, parents=(), name=None, **attrs):
        self.op = op
        self.parents = tuple(parents)
        self.value = None
        self.grad = None
        self.name = name
        self.attrs = attrs

    def __repr__(self):
        shape = None if self.value is None else self.value.shape
        label = f" {self.name!r}" if self.name else ""
        return f"<Node {self.op}{label} shape={shape}>"


# ---------------------------------------------------------------------------
# Leaves

def param(name: str, value) -> Node:
    """Trainable leaf; owns its array (updated in place by the optimizer)."""
    node = Node("param", name=name)
    node.value = np.array(value, dtype=np.float64)
    return node


def input_(name: str) -> Node:
    """Free input, bound at each forward call."""
    return Node("input", name=name)


def const(value) -> Node:
    """Non-trainable leaf."""
    node = Node("const")
    node.value = np.array(value, dtype=np.float64)
    return node


class ParamStore:
    """Ordered registry of parameter nodes; insertion order is the canonical
    serialization order."""

    def __init__(self):
        self._params: dict[str, Node] = {}

    def param(self, name: str, value) -> Node:
        if name in self._params:
            raise GraphError(f"duplicate parameter name {name!r}")
        node = param(name, value)
        self._params[name] = node
        return node

    def names(self):
        return list(self._params)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.value for k, v in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        """Overwrite parameter values (shapes must match)."""
        for name, node in self._params.items():
            if name not in arrays:
                raise GraphError(f"missing parameter {name!r} in loaded arrays")
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != node.value.shape:
                raise ShapeMismatch("load_arrays", arr.shape, node.value.shape)
            node.value = arr.copy()

    def __getitem__(self, name: str) -> Node:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)


# ---------------------------------------------------------------------------
# Op constructors

def add(a: Node, b: Node) -> Node:
    return Node("add", (a, b))


def sub(a: Node, b: Node) -> Node:
    return Node("sub", (a, b))


def mul(a: Node, b: Node) -> Node:
    return Node("mul", (a, b))


def scale(a: Node, factor: float) -> Node:
    return Node("scale", (a,), factor=float(factor))


def matmul(a: Node, b: Node) -> Node:
    return Node("matmul", (a, b))


def concat(nodes) -> Node:
    nodes = tuple(nodes)
    if len(nodes) < 2:
        raise GraphError("concat needs at least two operands")
    return Node("concat", nodes)


def slice_(a: Node, start: int, stop: int) -> Node:
    if not 0 <= start < stop:
        raise GraphError(f"slice: bad range [{start}, {stop})")
    return Node("slice", (a,), start=int(start), stop=int(stop))


def leaky_relu(a: Node, slope: float = 0.2) -> Node:
    return Node("leaky_relu", (a,), slope=float(slope))


def relu(a: Node) -> Node:
    return Node("relu", (a,))


def group_norm(a: Node, groups: int, eps: float = GROUP_NORM_EPS) -> Node:
    if groups < 1:
        raise GraphError("group_norm: groups must be >= 1")
    return Node("group_norm", (a,), groups=int(groups), eps=float(eps))


def affine_modulate(h: Node, scale_n: Node, shift_n: Node) -> Node:
    """h * (1 + scale) + shift, elementwise with broadcasting."""
    return Node("affine_modulate", (h, scale_n, shift_n))


def l1_distance(a: Node, b: Node) -> Node:
    """Mean over rows of the per-row L1 norm of a - b (scalar)."""
    return Node("l1_distance", (a, b))


def l2_distance(a: Node, b: Node) -> Node:
    """Mean over rows of the per-row euclidean norm of a - b (scalar)."""
    return Node("l2_distance", (a, b))


def cosine_loss(a: Node, b: Node) -> Node:
    """Mean over rows of 1 - cos(a_row, b_row); denominators guarded."""
    return Node("cosine_loss", (a, b))


def sum_(a: Node) -> Node:
    return Node("sum", (a,))


# ---------------------------------------------------------------------------
# Evaluation

def _rows(x: np.ndarray) -> np.ndarray:
    """View 1-d input as a single row so reductions share one code path."""
    return x[None, :] if x.ndim == 1 else x


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum grad over axes that were broadcast to reach ``grad.shape``."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _eval(node: Node) -> np.ndarray:
    op = node.op
    vals = [p.value for p in node.parents]

    if op == "add":
        a, b = vals
        try:
            return a + b
        except ValueError:
            raise ShapeMismatch("add", a.shape, b.shape) from None
    if op == "sub":
        a, b = vals
        try:
            return a - b
        except ValueError:
            raise ShapeMismatch("sub", a.shape, b.shape) from None
    if op == "mul":
        a, b = vals
        try:
            return a * b
        except ValueError:
            raise ShapeMismatch("mul", a.shape, b.shape) from None
    if op == "scale":
        return vals[0] * node.attrs["factor"]
    if op == "matmul":
        a, b = vals
        if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[0]:
            raise ShapeMismatch("matmul", a.shape, b.shape)
        return a @ b
    if op == "concat":
        widths = {v.shape[:-1] for v in vals}
        if len(widths) != 1:
            raise ShapeMismatch("concat", *[v.shape for v in vals])
        return np.concatenate(vals, axis=-1)
    if op == "slice":
        a = vals[0]
        stop = node.attrs["stop"]
        if stop > a.shape[-1]:
            raise ShapeMismatch("slice", a.shape, (node.attrs["start"], stop))
        return a[..., node.attrs["start"]:stop]
    if op == "leaky_relu":
        a = vals[0]
        s = node.attrs["slope"]
        return np.where(a > 0, a, s * a)
    if op == "relu":
        return np.maximum(vals[0], 0.0)
    if op == "group_norm":
        a = vals[0]
        g = node.attrs["groups"]
        d = a.shape[-1]
        if d % g:
            raise ShapeMismatch("group_norm", a.shape, (g,))
        grouped = _rows(a).reshape(-1, g, d // g)
        mu = grouped.mean(axis=2, keepdims=True)
        var = grouped.var(axis=2, keepdims=True)
        y = (grouped - mu) / np.sqrt(var + node.attrs["eps"])
        return y.reshape(_rows(a).shape).reshape(a.shape)
    if op == "affine_modulate":
        h, sc, sh = vals
        try:
            return h * (1.0 + sc) + sh
        except ValueError:
            raise ShapeMismatch("affine_modulate", h.shape, sc.shape, sh.shape) from None
    if op in ("l1_distance", "l2_distance", "cosine_loss"):
        a, b = vals
        if a.shape != b.shape:
            raise ShapeMismatch(op, a.shape, b.shape)
        ra, rb = _rows(a), _rows(b)
        if op == "l1_distance":
            return np.array(np.abs(ra - rb).sum(axis=1).mean())
        if op == "l2_distance":
            return np.array(np.linalg.norm(ra - rb, axis=1).mean())
        na = np.linalg.norm(ra, axis=1)
        nb = np.linalg.norm(rb, axis=1)
        den = np.maximum(na, COSINE_EPS) * np.maximum(nb, COSINE_EPS)
        cos = (ra * rb).sum(axis=1) / den
        return np.array((1.0 - cos).mean())
    if op == "sum":
        return np.array(vals[0].sum())
    raise GraphError(f"unknown op kind {op!r}")


def _backprop(node: Node, grad: np.ndarray):
    """Scatter ``grad`` (adjoint of node) onto node.parents' .grad."""
    op = node.op
    parents = node.parents
    vals = [p.value for p in parents]

    def acc(parent, g):
        g = np.asarray(g, dtype=np.float64)
        if parent.grad is None:
            parent.grad = g.copy() if g.base is not None or g is grad else g
        else:
            parent.grad = parent.grad + g

    if op == "add":
        acc(parents[0], _unbroadcast(grad, vals[0].shape))
        acc(parents[1], _unbroadcast(grad, vals[1].shape))
    elif op == "sub":
        acc(parents[0], _unbroadcast(grad, vals[0].shape))
        acc(parents[1], _unbroadcast(-grad, vals[1].shape))
    elif op == "mul":
        acc(parents[0], _unbroadcast(grad * vals[1], vals[0].shape))
        acc(parents[1], _unbroadcast(grad * vals[0], vals[1].shape))
    elif op == "scale":
        acc(parents[0], grad * node.attrs["factor"])
    elif op == "matmul":
        a, b = vals
        if a.ndim == 2 and b.ndim == 2:
            acc(parents[0], grad @ b.T)
            acc(parents[1], a.T @ grad)
        elif a.ndim == 1 and b.ndim == 2:
            acc(parents[0], grad @ b.T)
            acc(parents[1], np.outer(a, grad))
        elif a.ndim == 2 and b.ndim == 1:
            acc(parents[0], np.outer(grad, b))
            acc(parents[1], a.T @ grad)
        else:
            raise ShapeMismatch("matmul", a.shape, b.shape)
    elif op == "concat":
        offset = 0
        for p, v in zip(parents, vals):
            w = v.shape[-1]
            acc(p, grad[..., offset:offset + w])
            offset += w
    elif op == "slice":
        full = np.zeros_like(vals[0])
        full[..., node.attrs["start"]:node.attrs["stop"]] = grad
        acc(parents[0], full)
    elif op == "leaky_relu":
        s = node.attrs["slope"]
        acc(parents[0], grad * np.where(vals[0] > 0, 1.0, s))
    elif op == "relu":
        acc(parents[0], grad * (vals[0] > 0))
    elif op == "group_norm":
        a = vals[0]
        g_count = node.attrs["groups"]
        d = a.shape[-1]
        n = d // g_count
        grouped = _rows(a).reshape(-1, g_count, n)
        mu = grouped.mean(axis=2, keepdims=True)
        var = grouped.var(axis=2, keepdims=True)
        r = 1.0 / np.sqrt(var + node.attrs["eps"])
        y = (grouped - mu) * r
        go = _rows(grad).reshape(-1, g_count, n)
        gm = go.mean(axis=2, keepdims=True)
        gym = (go * y).mean(axis=2, keepdims=True)
        dx = r * (go - gm - y * gym)
        acc(parents[0], dx.reshape(a.shape))
    elif op == "affine_modulate":
        h, sc, sh = vals
        acc(parents[0], _unbroadcast(grad * (1.0 + sc), h.shape))
        acc(parents[1], _unbroadcast(grad * h, sc.shape))
        acc(parents[2], _unbroadcast(grad, sh.shape))
    elif op in ("l1_distance", "l2_distance", "cosine_loss"):
        a, b = vals
        ra, rb = _rows(a), _rows(b)
        rows = ra.shape[0]
        if op == "l1_distance":
            da = np.sign(ra - rb) * (grad / rows)
            db = -da
        elif op == "l2_distance":
            diff = ra - rb
            norms = np.linalg.norm(diff, axis=1, keepdims=True)
            unit = np.divide(diff, norms, out=np.zeros_like(diff), where=norms > 0)
            da = unit * (grad / rows)
            db = -da
        else:
            na = np.linalg.norm(ra, axis=1, keepdims=True)
            nb = np.linalg.norm(rb, axis=1, keepdims=True)
            ma = np.maximum(na, COSINE_EPS)
            mb = np.maximum(nb, COSINE_EPS)
            s = (ra * rb).sum(axis=1, keepdims=True)
            # d cos/da, with clamped norms treated as constants
            dca = rb / (ma * mb)
            live_a = na > COSINE_EPS
            dca = dca - np.where(live_a, s * ra / (np.where(live_a, na, 1.0) ** 2 * ma * mb), 0.0)
            dcb = ra / (ma * mb)
            live_b = nb > COSINE_EPS
            dcb = dcb - np.where(live_b, s * rb / (np.where(live_b, nb, 1.0) ** 2 * ma * mb), 0.0)
            da = -dca * (grad / rows)
            db = -dcb * (grad / rows)
        acc(parents[0], da.reshape(a.shape))
        acc(parents[1], db.reshape(b.shape))
    elif op == "sum":
        acc(parents[0], np.full_like(vals[0], float(grad)))
    else:
        raise GraphError(f"unknown op kind {op!r}")


def _topo_order(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    return order


def _graph_meta(root: Node):
    """Topological order plus leaf inventories, cached on the root node."""
    meta = root.attrs.get("_graph_meta")
    if meta is None:
        order = _topo_order(root)
        inputs = {n.name: n for n in order if n.op == "input"}
        params = [n for n in order if n.op == "param"]
        meta = (order, inputs, params)
        root.attrs["_graph_meta"] = meta
    return meta


def forward(root: Node, bindings: dict[str, np.ndarray] | None = None) -> np.ndarray:
    """Evaluate the graph rooted at ``root``.

    ``bindings`` maps input names to arrays and must cover exactly the free
    inputs of the graph. Intermediate values are cached on the nodes for a
    subsequent ``backward`` call.
    """
    order, inputs, _ = _graph_meta(root)
    bindings = bindings or {}
    unknown = set(bindings) - set(inputs)
    if unknown:
        raise GraphError(f"bindings for unknown inputs: {sorted(unknown)}")
    missing = set(inputs) - set(bindings)
    if missing:
        raise GraphError(f"unbound inputs: {sorted(missing)}")
    for name, node in inputs.items():
        node.value = np.asarray(bindings[name], dtype=np.float64)
    for node in order:
        if node.op not in ("param", "input", "const"):
            node.value = _eval(node)
    return root.value


def backward(root: Node) -> dict[str, np.ndarray]:
    """Gradients of the scalar at ``root`` w.r.t. every parameter in the graph.

    Visits nodes in reverse topological order exactly once; requires a prior
    ``forward`` on the same root.
    """
    order, _, params = _graph_meta(root)
    if root.value is None:
        raise GraphError("backward before forward")
    if root.value.ndim != 0:
        raise GraphError(f"backward root must be scalar, got shape {root.value.shape}")
    for node in order:
        node.grad = None
    root.grad = np.array(1.0)
    for node in reversed(order):
        if node.grad is None or not node.parents:
            continue
        _backprop(node, node.grad)
    return {p.name: (p.grad if p.grad is not None else np.zeros_like(p.value))
            for p in params}


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    """Adam optimizer state; moment accumulators keyed like the params."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> AdamState:
    """One Adam update with bias correction; mutates params in place.

    Parameters are updated in sorted-name order so accumulation is
    deterministic regardless of dict construction order.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name in sorted(params):
        p = params[name]
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch("adam_step", g.shape, p.shape)
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.m[name] = m
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state
