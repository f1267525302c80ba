"""Dense rank-<=2 arrays with tape-based reverse-mode gradients and Adam.

Operations record themselves on the innermost active :class:`Tape` when any
input requires a gradient; with no tape active they run as plain numpy.
Batches are row-stacked matrices; segmented reductions (``segment_sum``,
``segment_softmax``) stand in for ragged per-target neighbor sets.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

DTYPE = np.float64

_TAPES: list = []


class ShapeError(ValueError):
    pass


class Tape:
    """Ordered record of differentiable operations.

    Recording order is a topological order, so the backward pass simply
    walks the records in reverse.
    """

    def __init__(self):
        self.records: list = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def record(self, out, parents, fn) -> int:
        self.records.append((out, parents, fn))
        return len(self.records) - 1

    def clear(self) -> None:
        for out, _, _ in self.records:
            out._node = None
            out.requires_grad = False
        self.records = []

    def __len__(self):
        return len(self.records)


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_node")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if arr.ndim > 2:
            raise ShapeError("tensors are limited to rank 2, got shape %s" % (arr.shape,))
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        tag = " name=%r" % self.name if self.name else ""
        return "Tensor(shape=%s%s, requires_grad=%s)" % (self.shape, tag, self.requires_grad)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, fn) -> Tensor:
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = (tape, tape.record(out, parents, fn))
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_check(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError("%s: incompatible shapes %s and %s" % (op, a.shape, b.shape)) from None


# -- elementwise --------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    """Hadamard product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


hadamard = mul


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = np.empty_like(a.data)
    pos = a.data >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    y[~pos] = ez / (1.0 + ez)
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp into ``[lo, hi]``; the gradient is zero where clamping is active."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,))


def cos(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(np.cos(x), (a,), lambda g: (-g * np.sin(x),))


def sin(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(np.sin(x), (a,), lambda g: (g * np.cos(x),))


# -- linear algebra and shape ops ---------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul: incompatible shapes %s and %s" % (a.shape, b.shape))
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate 2-D tensors along the last axis (or rows with ``axis=0``)."""
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of nothing")
    if any(t.data.ndim != 2 for t in ts):
        raise ShapeError("concat: expected 2-D inputs, got %s" % [t.shape for t in ts])
    axis = axis % 2
    other = 1 - axis
    if len({t.shape[other] for t in ts}) != 1:
        raise ShapeError("concat: mismatched shapes %s" % [t.shape for t in ts])
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)
    data = np.concatenate([t.data for t in ts], axis=axis)

    def fn(g):
        if axis == 1:
            return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(ts)))
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(ts)))

    return _make(data, tuple(ts), fn)


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2 or not (0 <= start <= stop <= a.shape[1]):
        raise ShapeError("slice_cols: bad range [%d:%d) for shape %s" % (start, stop, a.shape))
    shape = a.shape

    def fn(g):
        out = np.zeros(shape)
        out[:, start:stop] = g
        return (out,)

    return _make(a.data[:, start:stop], (a,), fn)


def gather_rows(a, idx) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    shape = a.shape

    return _make(a.data[idx], (a,), lambda g: (_segsum(g, idx, shape[0]),))


def set_rows(a, idx, b) -> Tensor:
    """Copy of ``a`` with rows ``idx`` (distinct) replaced by the rows of ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    idx = np.asarray(idx, dtype=np.int64)
    if b.shape != (len(idx), a.shape[1]):
        raise ShapeError("set_rows: replacement shape %s for %d rows of %s"
                         % (b.shape, len(idx), a.shape))
    data = a.data.copy()
    data[idx] = b.data

    def fn(g):
        ga = g.copy()
        ga[idx] = 0.0
        return ga, g[idx]

    return _make(data, (a, b), fn)


def reduce_sum(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _make(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def sum_cols(a) -> Tensor:
    """Row-wise sum, ``(m, n) -> (m, 1)``."""
    a = as_tensor(a)
    shape = a.shape
    return _make(a.data.sum(axis=1, keepdims=True), (a,),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    return _make(y, (a,), lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def _segsum(x: np.ndarray, seg: np.ndarray, n: int) -> np.ndarray:
    """Unbuffered scatter-add of rows of ``x`` into ``n`` buckets."""
    if x.ndim == 1:
        return np.bincount(seg, weights=x, minlength=n).astype(DTYPE)
    if len(seg) == 0:
        return np.zeros((n,) + x.shape[1:])
    onehot = sparse.csr_matrix((np.ones(len(seg)), (seg, np.arange(len(seg)))),
                               shape=(n, len(seg)))
    return np.asarray(onehot @ x)


def segment_sum(a, seg, n: int) -> Tensor:
    """Sum rows of ``a`` into ``n`` buckets by ``seg``; empty buckets are zero."""
    a = as_tensor(a)
    seg = np.asarray(seg, dtype=np.int64)
    if len(seg) != a.shape[0]:
        raise ShapeError("segment_sum: %d segment ids for %d rows" % (len(seg), a.shape[0]))
    return _make(_segsum(a.data, seg, n), (a,), lambda g: (g[seg],))


def segment_softmax(a, seg, n: int) -> Tensor:
    """Softmax of an ``(R, 1)`` score column within each segment."""
    a = as_tensor(a)
    seg = np.asarray(seg, dtype=np.int64)
    if a.data.ndim != 2 or a.shape[1] != 1 or len(seg) != a.shape[0]:
        raise ShapeError("segment_softmax: expected (R, 1) scores with R ids, got %s / %d"
                         % (a.shape, len(seg)))
    x = a.data[:, 0]
    mx = np.full(n, -np.inf)
    np.maximum.at(mx, seg, x)
    e = np.exp(x - mx[seg])
    denom = _segsum(e, seg, n)
    y = (e / denom[seg])[:, None]

    def fn(g):
        gy = (g * y)[:, 0]
        s = _segsum(gy, seg, n)
        return (y * (g - s[seg][:, None]),)

    return _make(y, (a,), fn)


# -- backward -----------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires-grad leaf.

    The tape that recorded ``loss`` is cleared afterwards.
    """
    if loss.data.size != 1:
        raise ShapeError("backward needs a scalar loss, got shape %s" % (loss.shape,))
    if loss._node is None:
        raise RuntimeError("backward without tape: loss was not recorded")
    tape, last = loss._node
    grads = {id(loss): np.ones_like(loss.data)}
    for i in range(last, -1, -1):
        out, parents, fn = tape.records[i]
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for p, gp in zip(parents, fn(g)):
            if gp is None or not p.requires_grad:
                continue
            if p._node is None:
                p.grad = np.array(gp, dtype=DTYPE) if p.grad is None else p.grad + gp
            elif p._node[0] is tape:
                key = id(p)
                grads[key] = grads[key] + gp if key in grads else gp
    tape.clear()


# -- parameters ---------------------------------------------------------------

def init_weight(rng: np.random.Generator, fan_in: int, fan_out: int, name: str | None = None) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in) if fan_in > 0 else 0.0
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True, name=name)


def init_bias(size: int, name: str | None = None) -> Tensor:
    return Tensor(np.zeros((1, size)), requires_grad=True, name=name)


class Module:
    """Attribute-scanning parameter container, in the spirit of ``torch.nn.Module``."""

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + key + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters("%s%s.%d." % (prefix, key, i))

    def parameters(self) -> dict:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self) -> dict:
        return {k: v.data.copy() for k, v in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise KeyError("missing parameters: %s" % sorted(missing))
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=DTYPE)
            if arr.shape != p.shape:
                raise ShapeError("parameter %s: expected %s, got %s" % (k, p.shape, arr.shape))
            p.data = arr.copy()


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict | None, state: AdamState) -> dict:
    """Bias-corrected Adam update applied in place; returns ``params``.

    ``grads`` maps parameter names to arrays; with ``None`` each parameter's
    ``.grad`` is used. Parameters without a gradient are skipped.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad if grads is None else grads.get(name)
        if g is None:
            continue
        g = np.asarray(g, dtype=DTYPE)
        if g.shape != p.shape:
            raise ShapeError("adam_step: gradient %s for parameter %s of shape %s"
                             % (g.shape, name, p.shape))
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# -- checkpoint container -----------------------------------------------------
# magic "TNSR" | u32 version | u32 meta_len | meta (utf-8 JSON) | u32 count
# then per tensor: u16 name_len | name (utf-8) | u8 ndim | u64[ndim] dims
# | f64[prod(dims)] values, row-major. Little-endian throughout.

CKPT_MAGIC = b"TNSR"
CKPT_VERSION = 1


def save_checkpoint(path: str, tensors: dict, meta: dict | None = None) -> None:
    meta_raw = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", CKPT_MAGIC, CKPT_VERSION, len(meta_raw)))
        fh.write(meta_raw)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack("<%dQ" % arr.ndim, *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path: str):
    """Return ``(tensors, meta)`` from a checkpoint file."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, meta_len = struct.unpack_from("<4sII", data, 0)
    if magic != CKPT_MAGIC:
        raise ValueError("%s: not a checkpoint (magic %r)" % (path, magic))
    if version != CKPT_VERSION:
        raise ValueError("%s: unsupported checkpoint version %d" % (path, version))
    off = 12
    meta = json.loads(data[off:off + meta_len].decode("utf-8"))
    off += meta_len
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (nl,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nl].decode("utf-8")
        off += nl
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        dims = struct.unpack_from("<%dQ" % ndim, data, off)
        off += 8 * ndim
        size = int(np.prod(dims)) if ndim else 1
        tensors[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(dims).copy()
        off += 8 * size
    return tensors, meta
