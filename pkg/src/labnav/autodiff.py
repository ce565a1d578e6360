"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every differentiable operation records a node on a thread-local tape.  Nodes
are appended in creation order, so the tape is already topologically sorted;
``backward`` walks it once in reverse and then frees it.

A small FLOP counter rides along with the forward ops so that composed models
can be costed without a separate symbolic pass.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "as_tensor",
    "backward",
    "no_grad",
    "get_tape",
    "make_node",
    "flop_counter",
    "branch_recorder",
    "note_branch",
    "matmul",
    "conv2d",
    "sobel_conv2d",
    "maxpool2d",
    "linear",
    "relu",
    "sigmoid",
    "softmax",
    "concat",
    "reshape",
    "transpose",
    "index",
    "mean",
    "sum",
    "abs",
    "log",
    "log1p",
    "sqrt",
    "clip",
    "l2norm_rows",
    "add",
    "sub",
    "mul",
    "scale",
    "SOBEL_X",
    "SOBEL_Y",
]

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an operation."""

    def __init__(self, op: str, *shapes, detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{op}: incompatible shapes " + " vs ".join(str(s) for s in self.shapes)
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class Tape:
    """Ordered record of the operations of one forward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def record(self, node: "Tensor") -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


class _State(threading.local):
    def __init__(self):
        self.tape = Tape()
        self.grad_enabled = True
        self.flops: list[int] | None = None
        self.branches: list[bytes] | None = None


_state = _State()


def get_tape() -> Tape:
    return _state.tape


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference)."""
    prev = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def flop_counter():
    """Accumulate FLOPs of forward ops executed inside the block.

    Yields a one-element list whose entry is the running total.
    """
    prev = _state.flops
    counter = [0]
    _state.flops = counter
    try:
        yield counter
    finally:
        _state.flops = prev


@contextlib.contextmanager
def branch_recorder():
    """Record the discrete choices (ReLU masks, pool winners, ...) made inside the block.

    Two evaluations that yield equal lists took the same smooth piece of a
    piecewise-smooth function.  Finite-difference checks use this to skip
    stencils that straddle a kink.
    """
    prev = _state.branches
    rec: list[bytes] = []
    _state.branches = rec
    try:
        yield rec
    finally:
        _state.branches = prev


def note_branch(choice) -> None:
    if _state.branches is not None:
        _state.branches.append(np.ascontiguousarray(choice).tobytes())


def _count(n) -> None:
    if _state.flops is not None:
        _state.flops[0] += int(n)


class Tensor:
    """Dense array node carrying a value and, once tracked, a gradient."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._parents = ()
    out._backward = None
    track = _state.grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._parents = tuple(parents)
        out._backward = backward_fn
        _state.tape.record(out)
    return out


make_node = _make


def backward(loss: Tensor, free_tape: bool = True) -> None:
    """Populate ``.grad`` with d(loss)/d(t) on every tracked ancestor of ``loss``."""
    if loss.data.size != 1:
        raise ShapeError("backward", loss.shape, detail="loss must be a scalar")
    if not loss.requires_grad:
        raise RuntimeError("backward: loss is not connected to any tracked tensor")
    tape = _state.tape
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent._backward is None:
                # leaf: accumulate across backward calls
                parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
            else:
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
    if free_tape:
        tape.clear()


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: np.ndarray, b: np.ndarray) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# --------------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a.data, b.data)
    out = a.data + b.data
    _count(out.size)
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a.data, b.data)
    out = a.data - b.data
    _count(out.size)
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a.data, b.data)
    out = a.data * b.data
    _count(out.size)
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    _count(a.size)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    note_branch(mask)
    _count(x.size)
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    _count(3 * x.size)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def abs(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    s = np.sign(x.data)
    note_branch(s)
    _count(x.size)
    return _make(np.abs(x.data), (x,), lambda g: (g * s,))


def log(x) -> Tensor:
    x = as_tensor(x)
    _count(x.size)
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def log1p(x) -> Tensor:
    x = as_tensor(x)
    _count(x.size)
    return _make(np.log1p(x.data), (x,), lambda g: (g / (1.0 + x.data),))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    _count(x.size)

    def bw(g):
        safe = np.where(out > 0, out, np.inf)
        return (g * 0.5 / safe,)

    return _make(out, (x,), bw)


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only where the value is inside."""
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    note_branch(inside)
    _count(x.size)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


# --------------------------------------------------------------------- reductions / shape


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    _count(x.size)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(out, dtype=np.float64), (x,), bw)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    if n == 0:
        raise ShapeError("mean", x.shape, detail="empty reduction")
    out = np.mean(x.data, axis=axis, keepdims=keepdims)
    _count(x.size)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _make(np.asarray(out, dtype=np.float64), (x,), bw)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, shape) from None
    return _make(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    out = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(out, (x,), lambda g: (np.transpose(g, inv),))


def index(x, key) -> Tensor:
    """Basic/advanced indexing; gradient scatters back into a zero buffer."""
    x = as_tensor(x)
    out = x.data[key]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        return (full,)

    return _make(np.array(out, dtype=np.float64), (x,), bw)


def concat(xs: Iterable, axis: int = 0) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    if not xs:
        raise ShapeError("concat", detail="no inputs")
    ref = xs[0].shape
    ax = axis % len(ref)
    for t in xs[1:]:
        if t.ndim != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax
        ):
            raise ShapeError("concat", ref, t.shape, detail=f"axis={axis}")
    out = np.concatenate([t.data for t in xs], axis=ax)
    bounds = np.cumsum([t.shape[ax] for t in xs])[:-1]
    return _make(out, tuple(xs), lambda g: tuple(np.split(g, bounds, axis=ax)))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError("softmax", x.shape, detail=f"zero-length axis {axis}")
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / np.sum(e, axis=axis, keepdims=True)
    _count(3 * x.size)

    def bw(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (x,), bw)


def l2norm_rows(x) -> Tensor:
    """Euclidean norm over the last axis; gradient at a zero row is zero."""
    x = as_tensor(x)
    out = np.sqrt(np.sum(x.data * x.data, axis=-1))
    _count(2 * x.size)

    def bw(g):
        safe = np.where(out > 0, out, 1.0)
        unit = np.where((out > 0)[..., None], x.data / safe[..., None], 0.0)
        return (g[..., None] * unit,)

    return _make(out, (x,), bw)


# --------------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None
    _count(2 * out.size * a.shape[-1])

    def bw(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(out, (a, b), bw)


def linear(x, W, b=None) -> Tensor:
    """``x @ W + b`` over the last axis of ``x``; ``W`` has shape (in, out)."""
    x, W = as_tensor(x), as_tensor(W)
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise ShapeError("linear", x.shape, W.shape)
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, W.shape[0])
    out = x2 @ W.data
    parents = [x, W]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[1],):
            raise ShapeError("linear", W.shape, b.shape, detail="bias")
        out = out + b.data
        parents.append(b)
    _count(2 * x2.shape[0] * W.shape[0] * W.shape[1])

    def bw(g):
        g2 = g.reshape(-1, W.shape[1])
        grads = [(g2 @ W.data.T).reshape(x.shape), x2.T @ g2]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return _make(out.reshape(lead + (W.shape[1],)), tuple(parents), bw)


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv2d(x, k, stride=1, pad=0, bias=None) -> Tensor:
    """2-D cross-correlation, x: (N, C, H, W), k: (O, C, kh, kw), zero padding."""
    x, k = as_tensor(x), as_tensor(k)
    if x.ndim != 4 or k.ndim != 4 or x.shape[1] != k.shape[1]:
        raise ShapeError("conv2d", x.shape, k.shape)
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    N, C, H, W = x.shape
    O, _, kh, kw = k.shape
    Ho = (H + 2 * ph - kh) // sh + 1
    Wo = (W + 2 * pw - kw) // sw + 1
    if Ho <= 0 or Wo <= 0:
        raise ShapeError("conv2d", x.shape, k.shape, detail="kernel larger than padded input")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw][:, :, :Ho, :Wo]  # (N, C, Ho, Wo, kh, kw)
    out = np.tensordot(win, k.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    parents = [x, k]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (O,):
            raise ShapeError("conv2d", k.shape, bias.shape, detail="bias")
        out = out + bias.data[None, :, None, None]
        parents.append(bias)
    out = np.ascontiguousarray(out)
    _count(2 * kh * kw * C * out.size)

    def bw(g):
        gk = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        gxp = np.zeros_like(xp)
        for a in range(kh):
            for c in range(kw):
                contrib = np.tensordot(g, k.data[:, :, a, c], axes=([1], [0]))
                gxp[:, :, a : a + sh * Ho : sh, c : c + sw * Wo : sw] += contrib.transpose(0, 3, 1, 2)
        gx = gxp[:, :, ph : ph + H, pw : pw + W]
        grads = [gx, gk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _make(out, tuple(parents), bw)


def sobel_conv2d(x) -> Tensor:
    """Fixed Sobel edge responses: (N, C, H, W) -> (N, 2C, H, W).

    Output channel 2c holds the horizontal-gradient (Gx) response of input
    channel c and 2c+1 the vertical one (Gy).  No trainable weights.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("sobel_conv2d", x.shape, detail="expected (N, C, H, W)")
    C = x.shape[1]
    k = np.zeros((2 * C, C, 3, 3))
    for c in range(C):
        k[2 * c, c] = SOBEL_X
        k[2 * c + 1, c] = SOBEL_Y
    return conv2d(x, Tensor(k), stride=1, pad=1)


def maxpool2d(x, w: int) -> Tensor:
    """Non-overlapping max pooling with a w x w window."""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[2] % w or x.shape[3] % w:
        raise ShapeError("maxpool2d", x.shape, (w, w), detail="spatial dims must divide window")
    N, C, H, W = x.shape
    blocks = x.data.reshape(N, C, H // w, w, W // w, w).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(N, C, H // w, W // w, w * w)
    arg = np.argmax(flat, axis=-1)
    note_branch(arg)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    _count(x.size)

    def bw(g):
        gf = np.zeros_like(flat)
        np.put_along_axis(gf, arg[..., None], g[..., None], axis=-1)
        gb = gf.reshape(N, C, H // w, W // w, w, w).transpose(0, 1, 2, 4, 3, 5)
        return (gb.reshape(N, C, H, W),)

    return _make(out, (x,), bw)
