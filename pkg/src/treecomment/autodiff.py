"""Dense float64 tensors with tape-based reverse-mode differentiation.

The graph is dynamic: every traced operation appends a backward closure to
the output tensor, and ``backward()`` on a scalar replays the closures in
reverse topological order. Graphs are rebuilt per example (tree shapes vary),
consumed by the backward pass, and never shared between threads.

Only the handful of operations the tree encoder / decoder actually need are
provided; there is no broadcasting beyond scalar multiples and no GPU path.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform to the requested operation."""


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation fast path)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A numpy float64 array plus an optional gradient slot.

    ``requires_grad`` marks leaves (parameters); intermediate results are
    traced whenever any input is traced and recording is enabled.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g)  # copy: g may be a shared or sliced buffer
        else:
            self.grad += g

    def backward(self) -> None:
        """Populate ``grad`` on every traced ancestor of this scalar.

        The traversal consumes the graph: parent links and closures are
        dropped afterwards so a tape is never replayed twice.
        """
        if self.data.shape != ():
            raise ShapeError(f"backward() needs a scalar, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones((), dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()
            node._parents = ()
            node._backward = None

    def __add__(self, other):
        return add(self, _lift(other, self))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, _lift(other, self))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=False, name=name)


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full_like(like.data, float(x)))


def _traced(*inputs: Tensor) -> bool:
    # traced outputs get requires_grad=True, so one flag covers leaves and
    # intermediates alike
    return _GRAD_ENABLED and any(t.requires_grad for t in inputs)


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _traced(*inputs):
        out.requires_grad = True
        out._parents = inputs
        out._backward = backward(out)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")

    def bw(out):
        def run():
            a._accumulate(out.grad)
            b._accumulate(out.grad)
        return run

    return _result(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}")

    def bw(out):
        def run():
            a._accumulate(out.grad)
            b._accumulate(-out.grad)
        return run

    return _result(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; ``b`` may be a same-shape Tensor or a python float."""
    if not isinstance(b, Tensor):
        k = float(b)

        def bw_scalar(out):
            def run():
                a._accumulate(k * out.grad)
            return run

        return _result(a.data * k, (a,), bw_scalar)
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}")

    def bw(out):
        def run():
            a._accumulate(b.data * out.grad)
            b._accumulate(a.data * out.grad)
        return run

    return _result(a.data * b.data, (a, b), bw)


def div(a: Tensor, s: Tensor) -> Tensor:
    """Divide ``a`` by a scalar tensor ``s`` (shape ())."""
    if s.shape != ():
        raise ShapeError(f"div: divisor must be scalar, got {s.shape}")
    denom = float(s.data)

    def bw(out):
        def run():
            a._accumulate(out.grad / denom)
            s._accumulate(np.asarray(-(out.grad * a.data).sum() / denom ** 2))
        return run

    return _result(a.data / denom, (a, s), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product: (m,n)@(n,p) -> (m,p) or (m,n)@(n,) -> (m,)."""
    if a.data.ndim != 2:
        raise ShapeError(f"matmul: left operand must be 2-D, got {a.shape}")
    if b.data.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}")

        def bw_vec(out):
            def run():
                a._accumulate(np.outer(out.grad, b.data))
                b._accumulate(a.data.T @ out.grad)
            return run

        return _result(a.data @ b.data, (a, b), bw_vec)
    if b.data.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}")

        def bw_mat(out):
            def run():
                a._accumulate(out.grad @ b.data.T)
                b._accumulate(a.data.T @ out.grad)
            return run

        return _result(a.data @ b.data, (a, b), bw_mat)
    raise ShapeError(f"matmul: unsupported right operand shape {b.shape}")


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: {a.shape} vs {b.shape}")

    def bw(out):
        def run():
            a._accumulate(out.grad * b.data)
            b._accumulate(out.grad * a.data)
        return run

    return _result(np.asarray(a.data @ b.data), (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: need 2-D, got {a.shape}")

    def bw(out):
        def run():
            a._accumulate(out.grad.T)
        return run

    return _result(a.data.T.copy(), (a,), bw)


def concat(parts: Sequence[Tensor]) -> Tensor:
    parts = tuple(parts)
    if not parts or any(p.data.ndim != 1 for p in parts):
        raise ShapeError("concat: needs one or more 1-D tensors")
    sizes = [p.size for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(out):
        def run():
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                p._accumulate(out.grad[lo:hi])
        return run

    return _result(np.concatenate([p.data for p in parts]), parts, bw)


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors into a matrix, one per row."""
    rows = tuple(rows)
    if not rows or any(r.data.ndim != 1 for r in rows):
        raise ShapeError("stack_rows: needs one or more 1-D tensors")
    if len({r.size for r in rows}) != 1:
        raise ShapeError("stack_rows: rows differ in length")

    def bw(out):
        def run():
            for i, r in enumerate(rows):
                r._accumulate(out.grad[i])
        return run

    return _result(np.stack([r.data for r in rows]), rows, bw)


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))

    def bw(out):
        def run():
            x._accumulate(out.grad * y * (1.0 - y))
        return run

    return _result(y, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bw(out):
        def run():
            x._accumulate(out.grad * (1.0 - y * y))
        return run

    return _result(y, (x,), bw)


def softmax(x: Tensor, keep: np.ndarray | None = None) -> Tensor:
    """Softmax over a 1-D tensor.

    ``keep`` is an optional boolean mask: entries where it is False get
    probability exactly 0.0 and receive no gradient. This realizes additive
    minus-infinity masking without NaN-producing arithmetic.
    """
    if x.data.ndim != 1 or x.size == 0:
        raise ShapeError(f"softmax: need non-empty 1-D input, got {x.shape}")
    if keep is None:
        kept = x.data
        z = np.exp(kept - kept.max())
        y = z / z.sum()
    else:
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != x.shape:
            raise ShapeError(f"softmax: mask shape {keep.shape} vs {x.shape}")
        if not keep.any():
            raise ShapeError("softmax: mask removes every entry")
        y = np.zeros_like(x.data)
        kept = x.data[keep]
        z = np.exp(kept - kept.max())
        y[keep] = z / z.sum()

    def bw(out):
        def run():
            # dx_i = y_i *(g_i - <g, y>); zero rows stay zero automatically
            x._accumulate(y * (out.grad - float(out.grad @ y)))
        return run

    return _result(y, (x,), bw)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise ValueError("log: input has non-positive entries")
    y = np.log(x.data)

    def bw(out):
        def run():
            x._accumulate(out.grad / x.data)
        return run

    return _result(y, (x,), bw)


def sumall(x: Tensor) -> Tensor:
    def bw(out):
        def run():
            x._accumulate(np.full_like(x.data, float(out.grad)))
        return run

    return _result(np.asarray(x.data.sum()), (x,), bw)


def at(x: Tensor, i: int) -> Tensor:
    """Scalar view of one entry of a 1-D tensor."""
    if x.data.ndim != 1:
        raise ShapeError(f"at: need 1-D, got {x.shape}")

    def bw(out):
        def run():
            g = np.zeros_like(x.data)
            g[i] = float(out.grad)
            x._accumulate(g)
        return run

    return _result(np.asarray(x.data[i]), (x,), bw)


def take(x: Tensor, indices: Iterable[int]) -> Tensor:
    idx = np.asarray(list(indices), dtype=np.intp)
    if x.data.ndim != 1:
        raise ShapeError(f"take: need 1-D, got {x.shape}")

    def bw(out):
        def run():
            g = np.zeros_like(x.data)
            np.add.at(g, idx, out.grad)
            x._accumulate(g)
        return run

    return _result(x.data[idx], (x,), bw)


def embedding_mean(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Arithmetic mean of the embedding rows for ``ids``; empty -> zero vector."""
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_mean: table must be 2-D, got {table.shape}")
    if len(ids) == 0:
        return Tensor(np.zeros(table.shape[1]))
    idx = np.asarray(ids, dtype=np.intp)
    inv = 1.0 / len(ids)

    def bw(out):
        def run():
            g = np.zeros_like(table.data)
            np.add.at(g, idx, out.grad * inv)
            table._accumulate(g)
        return run

    return _result(table.data[idx].mean(axis=0), (table,), bw)


def finite_difference_check(loss_fn, params, epsilon: float = 1e-5,
                            max_coords_per_param: int = 6,
                            rng: np.random.Generator | None = None,
                            order: int = 2) -> float:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``params`` is any mapping-like object with ``items()`` yielding
    (name, Tensor) pairs; ``loss_fn`` takes no arguments, rebuilds its graph
    from the current parameter values, and must be deterministic (two
    evaluations are compared bitwise before differencing).

    ``order`` selects the stencil: 2 is the classic central difference; 4 is
    the five-point stencil, whose O(eps^4) truncation lets a larger epsilon
    tame subtraction noise on deep graphs with tiny gradient coordinates.

    Returns max over sampled coordinates of
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    rng = rng or np.random.default_rng(0)
    entries = list(params.items())
    for _, p in entries:
        p.grad = np.zeros_like(p.data)
    first = loss_fn()
    second = loss_fn()
    if not np.array_equal(first.data, second.data):
        raise ValueError("loss function is not deterministic")
    first.backward()
    analytic = {name: p.grad.copy() for name, p in entries}

    def probe(flat, c, offset):
        flat[c] += offset
        value = float(loss_fn().data)
        return value

    worst = 0.0
    for name, p in entries:
        flat = p.data.reshape(-1)
        n = flat.size
        coords = range(n) if n <= max_coords_per_param else \
            sorted(rng.choice(n, size=max_coords_per_param, replace=False).tolist())
        for c in coords:
            orig = flat[c]
            if order == 2:
                up = probe(flat, c, epsilon)
                flat[c] = orig
                down = probe(flat, c, -epsilon)
                numeric = (up - down) / (2.0 * epsilon)
            else:
                samples = {}
                for k in (-2, -1, 1, 2):
                    flat[c] = orig
                    samples[k] = probe(flat, c, k * epsilon)
                numeric = (samples[-2] - 8.0 * samples[-1]
                           + 8.0 * samples[1] - samples[2]) / (12.0 * epsilon)
            flat[c] = orig
            a = float(analytic[name].reshape(-1)[c])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    for _, p in entries:
        p.grad = np.zeros_like(p.data)
    return worst
