"""Minimal dense-tensor reverse-mode autodiff with an Adam optimizer.

Tensors wrap float64 numpy arrays and record a single-use backward tape.
Only the primitives the surrogate model needs are implemented; every exposed
operation checks its result for NaN/Inf and raises NumericError naming the op.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, NumericError


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by primitive '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Immutable-by-convention node in a single-use computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, _op)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    # -- graph construction helpers ------------------------------------

    @staticmethod
    def _make(data, parents, op, backward):
        req = any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=req, _parents=tuple(p for p in parents if p.requires_grad), _op=op)
        if req:
            out._backward = backward
        return out

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Tensor):
            const = np.asarray(other, dtype=np.float64)
            return Tensor._make(self.data + const, (self,), "add",
                                lambda g, a=self: a._accum(_unbroadcast(g, a.shape)))

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.shape))
        return Tensor._make(self.data + other.data, (self, other), "add", backward)

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), "neg",
                            lambda g, a=self: a._accum(-g))

    def __sub__(self, other):
        return self + (-other if isinstance(other, Tensor) else -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Tensor):
            const = np.asarray(other, dtype=np.float64)
            return Tensor._make(self.data * const, (self,), "mul",
                                lambda g, a=self, c=const: a._accum(_unbroadcast(g * c, a.shape)))

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.shape))
        return Tensor._make(self.data * other.data, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Tensor):
            return self * (1.0 / np.asarray(other, dtype=np.float64))

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accum(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))
        return Tensor._make(self.data / other.data, (self, other), "div", backward)

    def __pow__(self, exponent: float):
        e = float(exponent)

        def backward(g, a=self):
            a._accum(g * e * a.data ** (e - 1.0))
        return Tensor._make(self.data ** e, (self,), "pow", backward)

    def __matmul__(self, other):
        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accum(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))
        return Tensor._make(np.matmul(self.data, other.data), (self, other), "matmul", backward)

    # -- shape ops --------------------------------------------------------

    def reshape(self, *shape):
        orig = self.shape

        def backward(g, a=self):
            a._accum(g.reshape(orig))
        return Tensor._make(self.data.reshape(*shape), (self,), "reshape", backward)

    def swapaxes(self, ax1: int, ax2: int):
        def backward(g, a=self):
            a._accum(np.swapaxes(g, ax1, ax2))
        return Tensor._make(np.swapaxes(self.data, ax1, ax2), (self,), "swapaxes", backward)

    def broadcast_to(self, shape):
        def backward(g, a=self):
            a._accum(_unbroadcast(g, a.shape))
        return Tensor._make(np.broadcast_to(self.data, shape).copy(), (self,), "broadcast_to", backward)

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        def backward(g, a=self):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(g, a.shape).copy())
        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum", backward)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- nonlinear primitives ----------------------------------------------

    def log(self):
        def backward(g, a=self):
            a._accum(g / a.data)
        return Tensor._make(np.log(self.data), (self,), "log", backward)

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g, a=self, o=out_data):
            a._accum(g * o)
        return Tensor._make(out_data, (self,), "exp", backward)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def backward(g, a=self, o=out_data):
            a._accum(g * 0.5 / o)
        return Tensor._make(out_data, (self,), "sqrt", backward)

    def relu(self):
        mask = self.data > 0

        def backward(g, a=self, m=mask):
            a._accum(g * m)
        return Tensor._make(self.data * mask, (self,), "relu", backward)

    def softmax(self):
        """Numerically stable softmax along the last axis."""
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=-1, keepdims=True)

        def backward(g, a=self, sm=s):
            inner = (g * sm).sum(axis=-1, keepdims=True)
            a._accum(sm * (g - inner))
        return Tensor._make(s, (self,), "softmax", backward)

    # -- backward ----------------------------------------------------------

    def backward(self) -> None:
        """Reverse pass from a scalar output; the tape is single-use."""
        if self.data.size != 1:
            raise ContractViolation("backward() requires a scalar output")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


# -- free functions ---------------------------------------------------------


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along an axis; gradient splits back to the inputs."""
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g, ts=tuple(tensors), offs=offsets):
        for i, t in enumerate(ts):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(offs[i], offs[i + 1])
                t._accum(g[tuple(sl)])
    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis),
                        tuple(tensors), "concat", backward)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup weight[ids]; gradient scatter-adds into the table."""
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g, w=weight, idx=ids):
        acc = np.zeros_like(w.data)
        np.add.at(acc, idx, g)
        w._accum(acc)
    return Tensor._make(weight.data[ids], (weight,), "embedding", backward)


# -- parameter vectors --------------------------------------------------------


class ParamVector:
    """Ordered, named parameter tensors; registration order is canonical."""

    def __init__(self):
        self._names: list[str] = []
        self._arrays: dict[str, np.ndarray] = {}

    def register(self, name: str, array: np.ndarray) -> None:
        if name in self._arrays:
            raise ContractViolation(f"duplicate parameter name {name!r}")
        self._names.append(name)
        self._arrays[name] = np.asarray(array, dtype=np.float64)

    def names(self) -> list[str]:
        return list(self._names)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __len__(self) -> int:
        return len(self._names)

    def items(self):
        for n in self._names:
            yield n, self._arrays[n]

    def total_size(self) -> int:
        return sum(a.size for a in self._arrays.values())

    def flatten(self) -> np.ndarray:
        if not self._names:
            return np.zeros(0)
        return np.concatenate([self._arrays[n].ravel() for n in self._names])

    def with_flat(self, flat: np.ndarray) -> "ParamVector":
        """Rebuild a ParamVector of the same structure from a flat vector."""
        if flat.size != self.total_size():
            raise ContractViolation("flat vector length mismatch")
        out = ParamVector()
        off = 0
        for n in self._names:
            a = self._arrays[n]
            out.register(n, flat[off:off + a.size].reshape(a.shape).copy())
            off += a.size
        return out

    def map(self, fn) -> "ParamVector":
        out = ParamVector()
        for n in self._names:
            out.register(n, fn(self._arrays[n]))
        return out

    def copy(self) -> "ParamVector":
        return self.map(np.copy)

    def to_tensors(self, requires_grad: bool = True) -> dict[str, Tensor]:
        return {n: Tensor(a, requires_grad=requires_grad) for n, a in self.items()}

    def same_structure(self, other: "ParamVector") -> bool:
        return self._names == other._names and all(
            self._arrays[n].shape == other._arrays[n].shape for n in self._names)


def value_and_grad(fn, params: ParamVector) -> tuple[float, ParamVector]:
    """Evaluate a scalar function of a ParamVector and its exact gradient."""
    leaves = params.to_tensors(requires_grad=True)
    out = fn(leaves)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ContractViolation("fn must return a scalar Tensor")
    out.backward()
    grads = ParamVector()
    for name, arr in params.items():
        g = leaves[name].grad
        grads.register(name, np.zeros_like(arr) if g is None else g)
    return out.item(), grads


def finite_diff_grad(fn, params: ParamVector, h: float = 1e-5) -> ParamVector:
    """Central-difference gradient oracle, one coordinate at a time."""
    if h <= 0:
        raise ContractViolation("finite difference step h must be positive")

    def eval_at(flat: np.ndarray) -> float:
        leaves = params.with_flat(flat).to_tensors(requires_grad=False)
        out = fn(leaves)
        return out.item() if isinstance(out, Tensor) else float(out)

    base = params.flatten()
    grad = np.zeros_like(base)
    for i in range(base.size):
        hi = base.copy()
        lo = base.copy()
        hi[i] += h
        lo[i] -= h
        grad[i] = (eval_at(hi) - eval_at(lo)) / (2.0 * h)
    return params.with_flat(grad)


# -- Adam ---------------------------------------------------------------------


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for one ParamVector."""

    m: ParamVector
    v: ParamVector
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def init(params: ParamVector, lr: float = 1e-3, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return AdamState(m=params.map(np.zeros_like), v=params.map(np.zeros_like),
                         step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, params: ParamVector,
              grads: ParamVector) -> tuple[ParamVector, AdamState]:
    """One bias-corrected Adam update; returns new params and new state."""
    if not (params.same_structure(grads) and params.same_structure(state.m)):
        raise ContractViolation("params/grads/state shapes do not agree")
    t = state.step + 1
    new_params, new_m, new_v = ParamVector(), ParamVector(), ParamVector()
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        update = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_params.register(name, p - update)
        new_m.register(name, m)
        new_v.register(name, v)
    return new_params, AdamState(m=new_m, v=new_v, step=t, lr=state.lr,
                                 beta1=state.beta1, beta2=state.beta2, eps=state.eps)
