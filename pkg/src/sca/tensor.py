"""Dense tensors with tape-style reverse-mode differentiation.

Every op result remembers its parents and a closure that pushes the upstream
gradient back to them. Nodes get a monotonically increasing id at creation, so
sorting reachable nodes by id gives a topological order of the tape.
"""

from __future__ import annotations

import contextlib
import io
import itertools
import struct
from typing import BinaryIO, Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_ids = itertools.count()
_grad_enabled = True


class ShapeError(ValueError):
    """Dimension mismatch in an op; names the offending axis."""

    def __init__(self, op: str, axis: str, expected, got):
        self.op = op
        self.axis = axis
        self.expected = expected
        self.got = got
        super().__init__(f"{op}: axis '{axis}' expected {expected}, got {got}")


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._id = next(_ids)

    # -- basic properties ------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{rg})"

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        other = _lift(other, self.dtype)
        a, b = self, other

        def backward(g):
            _accumulate(a, _unbroadcast(g, a.shape))
            _accumulate(b, _unbroadcast(g, b.shape))

        return _result(a.data + b.data, (a, b), backward, "add")

    __radd__ = __add__

    def __neg__(self):
        a = self
        return _result(-a.data, (a,), lambda g: _accumulate(a, -g))

    def __sub__(self, other):
        return self + (-_lift(other, self.dtype))

    def __rsub__(self, other):
        return _lift(other, self.dtype) + (-self)

    def __mul__(self, other):
        other = _lift(other, self.dtype)
        a, b = self, other

        def backward(g):
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

        return _result(a.data * b.data, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __pow__(self, p: float):
        a = self
        return _result(a.data**p, (a,), lambda g: _accumulate(a, g * p * a.data ** (p - 1)), "pow")

    def sum(self) -> "Tensor":
        a = self
        return _result(a.data.sum(), (a,), lambda g: _accumulate(a, np.broadcast_to(g, a.shape)))

    def mean(self) -> "Tensor":
        a = self
        n = a.data.size
        return _result(
            a.data.mean(), (a,), lambda g: _accumulate(a, np.broadcast_to(g / n, a.shape))
        )

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return _result(a.data.reshape(shape), (a,), lambda g: _accumulate(a, g.reshape(a.shape)))

    # -- differentiation -------------------------------------------------
    def backward(self, retain_graph: bool = False) -> None:
        backprop(self, retain_graph=retain_graph)

    def zero_grad(self) -> None:
        self.grad = None


def _lift(x, dtype) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.dtype)
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad = t.grad + g


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str = "op") -> Tensor:
    """Wrap an op output, recording it on the tape when any parent needs grad."""
    data = np.asarray(data)
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"{op}: non-finite values in output")
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def make_result(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    return _result(data, parents, backward, op)


def accumulate(t: Tensor, g: np.ndarray) -> None:
    _accumulate(t, g)


def backprop(loss: Tensor, retain_graph: bool = False) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every leaf requiring grad.

    Intermediate gradients are released after use unless ``retain_graph``.
    """
    if loss.data.size != 1 or loss.ndim != 0:
        raise ValueError(f"backprop needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor requiring grad")

    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._id in nodes:
            continue
        nodes[t._id] = t
        stack.extend(p for p in t._parents if p.requires_grad)

    loss.grad = np.ones((), dtype=loss.dtype)
    for nid in sorted(nodes, reverse=True):
        t = nodes[nid]
        if t._backward is None or t.grad is None:
            continue
        g = t.grad
        t._backward(g)
        if not retain_graph:
            t.grad = None
            t._parents = ()
            t._backward = None


def grads_of(params: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of ``params``; parameters untouched by the loss get zeros."""
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


# -- binary format -------------------------------------------------------
TENSOR_MAGIC = b"SCAT"
TENSOR_VERSION = 1
_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def write_tensor(f: BinaryIO, arr) -> None:
    """Write ``arr`` as SCAT: magic, version, dtype, ndim, u32 dims, LE payload."""
    if isinstance(arr, Tensor):
        arr = arr.data
    arr = np.asarray(arr)
    if arr.dtype not in _DTYPE_CODES:
        arr = arr.astype(np.float32)
    f.write(TENSOR_MAGIC)
    f.write(struct.pack("<BBB", TENSOR_VERSION, _DTYPE_CODES[arr.dtype], arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def read_tensor(f: BinaryIO) -> np.ndarray:
    magic = f.read(4)
    if magic != TENSOR_MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}")
    version, code, ndim = struct.unpack("<BBB", _read_exact(f, 3))
    if version != TENSOR_VERSION:
        raise ValueError(f"unsupported tensor version {version}")
    if code not in _CODE_DTYPES:
        raise ValueError(f"unknown dtype code {code}")
    shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim))
    dtype = _CODE_DTYPES[code].newbyteorder("<")
    count = int(np.prod(shape, dtype=np.int64))
    payload = _read_exact(f, count * dtype.itemsize)
    return np.frombuffer(payload, dtype=dtype).reshape(shape).astype(_CODE_DTYPES[code])


def tensor_to_bytes(arr) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, arr)
    return buf.getvalue()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    return read_tensor(io.BytesIO(data))


def _read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise EOFError(f"expected {n} bytes, got {len(data)}")
    return data
