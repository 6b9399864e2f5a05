"""Dense float64 tensors with taped reverse-mode differentiation.

The tape is an explicit operation list: ops append (outputs, inputs, backward)
entries while a Tape is active, and backward() replays the list in reverse,
accumulating gradients keyed by tensor identity. With no tape active every op
runs in plain inference mode at numpy speed.

Broadcasting is leading-aligned: the lower-rank operand is padded with
trailing singleton axes, so a per-step gate of shape [T] scales a [T,C,H,W]
activation without any manual reshape.
"""

import struct

import numpy as np


class DimensionError(ValueError):
    """Shape or axis constraint violated."""


class ArgumentError(ValueError):
    """Out-of-domain argument."""


class StateError(RuntimeError):
    """Object used before required state was established."""


# ---------------------------------------------------------------------------
# tape


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; ops executed inside the block are recorded when
    any of their inputs requires a gradient. Tapes nest, innermost active.
    """

    def __init__(self):
        self._ops = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _ACTIVE.pop()
        if popped is not self:
            raise StateError("tape exited out of order")
        return False

    def __len__(self):
        return len(self._ops)


_ACTIVE = []


def _active_tape():
    return _ACTIVE[-1] if _ACTIVE else None


class Tensor:
    """Rank-N float64 array plus gradient buffer.

    is_spike marks tensors whose values are binary spike indicators; the
    network uses it to route synaptic-operation counting.
    """

    __slots__ = ("data", "grad", "requires_grad", "is_spike")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.is_spike = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def numel(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise DimensionError("item() needs a single-element tensor, got shape %s"
                                 % (self.data.shape,))
        return float(self.data.reshape(()))

    def __repr__(self):
        return "Tensor(shape=%s, requires_grad=%s)" % (self.data.shape, self.requires_grad)

    # arithmetic sugar; floats are wrapped as constants
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
        return neg(self)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def abs(self):
        return absolute(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def reshape(self, shape):
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def zeros(shape, requires_grad=False):
    return Tensor(np.zeros(shape, dtype=np.float64), requires_grad=requires_grad)


def record(outputs, inputs, backward):
    """Append one op to the active tape.

    outputs / inputs are tuples of Tensors; backward maps the outputs'
    gradient arrays to one gradient array (or None) per input. Extension
    point for ops defined outside this module. No-op without an active tape
    or when no input requires a gradient.
    """
    tape = _active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return
    for out in outputs:
        out.requires_grad = True
    tape._ops.append((outputs, inputs, backward))


def backward(loss, tape):
    """Accumulate d(loss)/d(tensor) into .grad for every tensor on the tape.

    loss must be a scalar produced under this tape. Gradients propagate
    through a private map during the reverse sweep and are flushed into
    .grad at the end, so repeated calls accumulate cleanly (no zeroing
    between calls is implied). An empty tape is a no-op.
    """
    if not isinstance(loss, Tensor):
        raise ArgumentError("backward needs a Tensor loss")
    if loss.data.shape != ():
        raise ArgumentError("loss must be scalar, got shape %s" % (loss.data.shape,))
    if len(tape._ops) == 0:
        return
    grads = {id(loss): np.ones((), dtype=np.float64)}
    seen = {id(loss): loss}
    for outputs, inputs, bw in reversed(tape._ops):
        gouts = tuple(grads.get(id(o)) for o in outputs)
        if all(g is None for g in gouts):
            continue
        gouts = tuple(np.zeros(o.data.shape) if g is None else g
                      for o, g in zip(outputs, gouts))
        gins = bw(*gouts)
        for t, g in zip(inputs, gins):
            if g is None or not t.requires_grad:
                continue
            seen[id(t)] = t
            if id(t) in grads:
                grads[id(t)] = grads[id(t)] + g
            else:
                grads[id(t)] = g
        for o in outputs:
            seen[id(o)] = o
    for key, t in seen.items():
        if not t.requires_grad or key not in grads:
            continue
        g = np.asarray(grads[key], dtype=np.float64)
        t.grad = g.copy() if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# broadcasting helpers


def _lead_align(a, b):
    """Right-pad the lower-rank array with singleton axes; check compatibility."""
    da, db = a.data, b.data
    if da.shape == db.shape:
        return da, db
    if da.ndim < db.ndim:
        da = da.reshape(da.shape + (1,) * (db.ndim - da.ndim))
    elif db.ndim < da.ndim:
        db = db.reshape(db.shape + (1,) * (da.ndim - db.ndim))
    for axis, (m, n) in enumerate(zip(da.shape, db.shape)):
        if m != n and m != 1 and n != 1:
            raise DimensionError("axis %d mismatch: %d vs %d" % (axis, m, n))
    return da, db


def _unbroadcast(g, orig_shape):
    """Reduce a broadcast gradient back to the operand's original shape."""
    if g.shape == orig_shape:
        return g
    padded = orig_shape + (1,) * (g.ndim - len(orig_shape))
    axes = tuple(i for i, (go, po) in enumerate(zip(g.shape, padded)) if po == 1 and go != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(orig_shape)


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    da, db = _lead_align(a, b)
    out = Tensor(da + db)
    sa, sb = a.data.shape, b.data.shape
    record((out,), (a, b),
           lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))
    return out


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    da, db = _lead_align(a, b)
    out = Tensor(da - db)
    sa, sb = a.data.shape, b.data.shape
    record((out,), (a, b),
           lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    da, db = _lead_align(a, b)
    out = Tensor(da * db)
    sa, sb = a.data.shape, b.data.shape
    record((out,), (a, b),
           lambda g: (_unbroadcast(g * db, sa), _unbroadcast(g * da, sb)))
    return out


def neg(a):
    a = as_tensor(a)
    out = Tensor(-a.data)
    record((out,), (a,), lambda g: (-g,))
    return out


def absolute(a):
    """Elementwise |a|; the gradient at exactly 0 is taken as 0."""
    a = as_tensor(a)
    out = Tensor(np.abs(a.data))
    sgn = np.sign(a.data)
    record((out,), (a,), lambda g: (g * sgn,))
    return out


def sigmoid(a):
    """Numerically stable logistic; saturates to 0/1 without overflow."""
    a = as_tensor(a)
    x = a.data
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = Tensor(s)
    record((out,), (a,), lambda g: (g * s * (1.0 - s),))
    return out


def relu(a):
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))
    pos = a.data > 0
    record((out,), (a,), lambda g: (g * pos,))
    return out


def sum_all(a):
    a = as_tensor(a)
    out = Tensor(a.data.sum())
    shape = a.data.shape
    record((out,), (a,), lambda g: (np.broadcast_to(g, shape),))
    return out


def mean_all(a):
    a = as_tensor(a)
    out = Tensor(a.data.mean())
    shape, n = a.data.shape, a.data.size
    record((out,), (a,), lambda g: (np.broadcast_to(g / n, shape),))
    return out


# ---------------------------------------------------------------------------
# shape ops


def reshape(a, shape):
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    orig = a.data.shape
    record((out,), (a,), lambda g: (g.reshape(orig),))
    return out


def concat(parts, axis):
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ArgumentError("concat needs at least one tensor")
    rank = parts[0].data.ndim
    if not -rank <= axis < rank:
        raise ArgumentError("concat axis %d out of range for rank %d" % (axis, rank))
    axis = axis % rank
    base = list(parts[0].data.shape)
    for p in parts[1:]:
        s = list(p.data.shape)
        if len(s) != rank or any(s[i] != base[i] for i in range(rank) if i != axis):
            raise DimensionError("concat shape mismatch off axis %d: %s vs %s"
                                 % (axis, tuple(base), tuple(s)))
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    record((out,), tuple(parts), bw)
    return out


def unstack(a):
    """Split along axis 0 into a list of views; one tape entry for all frames."""
    a = as_tensor(a)
    if a.data.ndim < 1:
        raise DimensionError("unstack needs rank >= 1")
    outs = tuple(Tensor(a.data[i]) for i in range(a.data.shape[0]))

    def bw(*gs):
        return (np.stack(gs, axis=0),)

    record(outs, (a,), bw)
    return list(outs)


def stack_frames(frames):
    """Stack equal-shape tensors along a new leading axis."""
    frames = [as_tensor(f) for f in frames]
    if not frames:
        raise ArgumentError("stack_frames needs at least one tensor")
    shape = frames[0].data.shape
    for f in frames[1:]:
        if f.data.shape != shape:
            raise DimensionError("stack_frames shape mismatch: %s vs %s"
                                 % (shape, f.data.shape))
    out = Tensor(np.stack([f.data for f in frames], axis=0))

    def bw(g):
        return tuple(g[i] for i in range(len(frames)))

    record((out,), tuple(frames), bw)
    return out


def slice_nd(a, bounds):
    """Rectangular slice; bounds is one (start, stop) pair per axis."""
    a = as_tensor(a)
    if len(bounds) != a.data.ndim:
        raise DimensionError("slice_nd needs %d bounds, got %d" % (a.data.ndim, len(bounds)))
    idx = []
    for axis, (lo, hi) in enumerate(bounds):
        n = a.data.shape[axis]
        if not (0 <= lo < hi <= n):
            raise ArgumentError("slice bounds (%d, %d) invalid on axis %d of size %d"
                                % (lo, hi, axis, n))
        idx.append(slice(lo, hi))
    idx = tuple(idx)
    out = Tensor(a.data[idx])
    orig = a.data.shape

    def bw(g):
        full = np.zeros(orig)
        full[idx] = g
        return (full,)

    record((out,), (a,), bw)
    return out


def pad_bottom_right(a, pad_h, pad_w):
    """Zero-pad the last two axes on the bottom/right edges only."""
    a = as_tensor(a)
    if a.data.ndim < 2:
        raise DimensionError("pad_bottom_right needs rank >= 2")
    if pad_h < 0 or pad_w < 0:
        raise ArgumentError("padding must be non-negative")
    if pad_h == 0 and pad_w == 0:
        return a
    widths = [(0, 0)] * (a.data.ndim - 2) + [(0, pad_h), (0, pad_w)]
    out = Tensor(np.pad(a.data, widths))
    h, w = a.data.shape[-2], a.data.shape[-1]

    def bw(g):
        return (g[..., :h, :w],)

    record((out,), (a,), bw)
    return out


# ---------------------------------------------------------------------------
# reductions over chosen axes


def pool(a, axes, mode="avg"):
    """Reduce over the given axes (dropped from the output).

    mode "avg" takes the mean; mode "max" takes the maximum and, on ties,
    routes the gradient to the first maximum in row-major order over the
    reduced axes.
    """
    a = as_tensor(a)
    rank = a.data.ndim
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(ax % rank if -rank <= ax < rank else ax for ax in axes)
    if not axes:
        raise ArgumentError("pool needs at least one axis")
    if len(set(axes)) != len(axes):
        raise ArgumentError("pool axes repeat: %s" % (axes,))
    for ax in axes:
        if not 0 <= ax < rank:
            raise ArgumentError("pool axis %d out of range for rank %d" % (ax, rank))
    if mode not in ("avg", "max"):
        raise ArgumentError("pool mode must be avg or max, got %r" % (mode,))
    axes = tuple(sorted(axes))
    kept = tuple(i for i in range(rank) if i not in axes)
    perm = kept + axes
    moved = a.data.transpose(perm)
    kept_shape = moved.shape[:len(kept)]
    red = int(np.prod(moved.shape[len(kept):], dtype=np.int64)) if axes else 1
    flat = moved.reshape(kept_shape + (red,))

    if mode == "avg":
        out = Tensor(flat.mean(axis=-1))

        def bw(g):
            gf = np.repeat((g / red)[..., None], red, axis=-1)
            return (_pool_restore(gf, kept_shape, moved.shape, perm),)
    else:
        arg = flat.argmax(axis=-1)
        out = Tensor(np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0])

        def bw(g):
            gf = np.zeros(flat.shape)
            np.put_along_axis(gf, arg[..., None], g[..., None], axis=-1)
            return (_pool_restore(gf, kept_shape, moved.shape, perm),)

    record((out,), (a,), bw)
    return out


def _pool_restore(flat_grad, kept_shape, moved_shape, perm):
    g = flat_grad.reshape(moved_shape)
    inv = np.argsort(perm)
    return g.transpose(inv)


# ---------------------------------------------------------------------------
# linear and convolution


def linear(x, weight, bias=None):
    """x[..., N] @ weight[M, N]^T (+ bias[M]) -> [..., M]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.data.ndim != 2:
        raise DimensionError("linear weight must be rank 2, got %s" % (weight.data.shape,))
    m, n = weight.data.shape
    if x.data.ndim < 1 or x.data.shape[-1] != n:
        raise DimensionError("linear input axis -1 is %s, weight expects %d"
                             % (x.data.shape[-1:] or "()", n))
    out_data = x.data @ weight.data.T
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (m,):
            raise DimensionError("linear bias must have shape (%d,), got %s"
                                 % (m, bias.data.shape))
        out_data = out_data + bias.data
        inputs = (x, weight, bias)
    out = Tensor(out_data)
    xd, wd = x.data, weight.data

    def bw(g):
        g2 = g.reshape(-1, m)
        x2 = xd.reshape(-1, n)
        gx = (g @ wd).reshape(xd.shape)
        gw = g2.T @ x2
        if bias is None:
            return (gx, gw)
        return (gx, gw, g2.sum(axis=0))

    record((out,), inputs, bw)
    return out


def _windows(x4, k, stride, padding):
    """Strided view of all kxk windows: [N, C, Ho, Wo, k, k]."""
    if padding > 0:
        x4 = np.pad(x4, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    view = np.lib.stride_tricks.sliding_window_view(x4, (k, k), axis=(2, 3))
    return view[:, :, ::stride, ::stride], x4.shape


def conv_out_size(size, k, stride, padding, axis_name):
    span = size + 2 * padding - k
    if span < 0:
        raise DimensionError("conv %s %d too small for kernel %d with padding %d"
                             % (axis_name, size, k, padding))
    return span // stride + 1


def conv2d(x, weight, stride=1, padding=0):
    """2D cross-correlation with square odd kernels and symmetric padding.

    x is [C_in, H, W] or [T, C_in, H, W]; a leading time axis is handled as a
    batch. weight is [C_out, C_in, k, k], bias-free.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise DimensionError("conv2d input must be rank 3 or 4, got %s" % (x.data.shape,))
    if weight.data.ndim != 4 or weight.data.shape[2] != weight.data.shape[3]:
        raise DimensionError("conv2d weight must be [C_out, C_in, k, k], got %s"
                             % (weight.data.shape,))
    c_out, c_in, k, _ = weight.data.shape
    if k % 2 != 1:
        raise ArgumentError("kernel size must be odd, got %d" % k)
    if stride < 1:
        raise ArgumentError("stride must be >= 1, got %d" % stride)
    if padding < 0:
        raise ArgumentError("padding must be >= 0, got %d" % padding)
    if xd.shape[1] != c_in:
        raise DimensionError("conv2d channel axis is %d, weight expects %d"
                             % (xd.shape[1], c_in))
    n, _, h, w = xd.shape
    ho = conv_out_size(h, k, stride, padding, "height")
    wo = conv_out_size(w, k, stride, padding, "width")

    win, padded_shape = _windows(xd, k, stride, padding)
    out4 = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out4 = out4.transpose(0, 3, 1, 2)
    out = Tensor(out4[0] if squeeze else out4)
    wd = weight.data

    def bw(g):
        g4 = g[None] if squeeze else g
        gw = np.tensordot(g4, win, axes=([0, 2, 3], [0, 2, 3]))
        gxp = np.zeros(padded_shape)
        gwin = np.tensordot(g4, wd, axes=(1, 0))          # [N, Ho, Wo, C_in, k, k]
        gwin = gwin.transpose(0, 3, 1, 2, 4, 5)           # [N, C_in, Ho, Wo, k, k]
        for u in range(k):
            for v in range(k):
                gxp[:, :, u:u + ho * stride:stride, v:v + wo * stride:stride] += gwin[..., u, v]
        if padding > 0:
            gx = gxp[:, :, padding:padding + h, padding:padding + w]
        else:
            gx = gxp
        return (gx[0] if squeeze else gx, gw)

    record((out,), (x, weight), bw)
    return out


def nearest_upsample(x, factor):
    """Replicate every pixel of the last two axes into an f x f block."""
    x = as_tensor(x)
    if x.data.ndim < 2:
        raise DimensionError("nearest_upsample needs rank >= 2")
    if not isinstance(factor, int) or factor < 1:
        raise ArgumentError("upsample factor must be an integer >= 1, got %r" % (factor,))
    if factor == 1:
        out = Tensor(x.data.copy())
        record((out,), (x,), lambda g: (g,))
        return out
    up = np.repeat(np.repeat(x.data, factor, axis=-2), factor, axis=-1)
    out = Tensor(up)
    h, w = x.data.shape[-2], x.data.shape[-1]
    lead = x.data.shape[:-2]

    def bw(g):
        g6 = g.reshape(lead + (h, factor, w, factor))
        return (g6.sum(axis=(-3, -1)),)

    record((out,), (x,), bw)
    return out


def avg_downsample(x, factor):
    """Mean over non-overlapping f x f blocks of the last two axes."""
    x = as_tensor(x)
    if x.data.ndim < 2:
        raise DimensionError("avg_downsample needs rank >= 2")
    if not isinstance(factor, int) or factor < 1:
        raise ArgumentError("downsample factor must be an integer >= 1, got %r" % (factor,))
    h, w = x.data.shape[-2], x.data.shape[-1]
    if h % factor or w % factor:
        raise DimensionError("spatial size (%d, %d) not divisible by factor %d"
                             % (h, w, factor))
    lead = x.data.shape[:-2]
    blocks = x.data.reshape(lead + (h // factor, factor, w // factor, factor))
    out = Tensor(blocks.mean(axis=(-3, -1)))

    def bw(g):
        g = g[..., :, None, :, None] / (factor * factor)
        g = np.broadcast_to(g, lead + (h // factor, factor, w // factor, factor))
        return (g.reshape(lead + (h, w)),)

    record((out,), (x,), bw)
    return out


# ---------------------------------------------------------------------------
# parameters and optimizer


class ParamStore:
    """Ordered, named collection of trainable tensors plus Adam moments."""

    def __init__(self):
        self._params = {}
        self._m = {}
        self._v = {}
        self._t = 0

    def add(self, name, tensor):
        if name in self._params:
            raise ArgumentError("duplicate parameter name %r" % name)
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.items())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def total_params(self):
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self):
        # zeros rather than None so params off the loss path still satisfy
        # the populated-gradient precondition of adam_step
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)

    def scale_grad(self, factor):
        for t in self._params.values():
            if t.grad is not None:
                t.grad = t.grad * factor

    @property
    def step_count(self):
        return self._t

    def optimizer_state(self):
        """Name -> array view of moments and the step counter, for checkpoints."""
        out = {"opt.t": np.float64(self._t)}
        for name in self._params:
            if name in self._m:
                out["opt.m." + name] = self._m[name]
                out["opt.v." + name] = self._v[name]
        return out

    def load_optimizer_state(self, entries):
        if "opt.t" in entries:
            self._t = int(entries["opt.t"])
        for name, tensor in self._params.items():
            mk, vk = "opt.m." + name, "opt.v." + name
            if mk in entries:
                if entries[mk].shape != tensor.data.shape:
                    raise DimensionError("moment %r shape %s does not match parameter %s"
                                         % (mk, entries[mk].shape, tensor.data.shape))
                self._m[name] = np.asarray(entries[mk], dtype=np.float64)
                self._v[name] = np.asarray(entries[vk], dtype=np.float64)


def adam_step(params, lr, betas=(0.9, 0.999), eps=1e-8):
    """One Adam update with bias correction over every parameter in the store."""
    if lr <= 0:
        raise ArgumentError("learning rate must be positive, got %r" % (lr,))
    b1, b2 = betas
    if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
        raise ArgumentError("betas must lie in [0, 1), got %r" % (betas,))
    for name, t in params:
        if t.grad is None:
            raise StateError("parameter %r has no gradient" % name)
    params._t += 1
    t_step = params._t
    c1 = 1.0 - b1 ** t_step
    c2 = 1.0 - b2 ** t_step
    for name, p in params:
        g = p.grad
        m = params._m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        else:
            v = params._v[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        params._m[name] = m
        params._v[name] = v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# tensor dump format

_TENSOR_MAGIC = b"SPKT0001"


def write_tensor(fh, array):
    """Append one tensor block: magic, u32 rank, u32 dims, f64 payload, all LE."""
    a = np.asarray(array, dtype=np.float64)
    fh.write(_TENSOR_MAGIC)
    fh.write(struct.pack("<I", a.ndim))
    for d in a.shape:
        fh.write(struct.pack("<I", d))
    fh.write(a.astype("<f8").tobytes())


def read_tensor(fh):
    magic = fh.read(8)
    if magic != _TENSOR_MAGIC:
        raise ArgumentError("bad tensor magic %r" % (magic,))
    (rank,) = struct.unpack("<I", fh.read(4))
    dims = []
    for _ in range(rank):
        (d,) = struct.unpack("<I", fh.read(4))
        dims.append(d)
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    payload = fh.read(8 * count)
    if len(payload) != 8 * count:
        raise ArgumentError("truncated tensor payload: wanted %d bytes, got %d"
                            % (8 * count, len(payload)))
    a = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return a.reshape(tuple(dims))


def save_tensor(path, array):
    with open(path, "wb") as fh:
        write_tensor(fh, array)


def load_tensor(path):
    with open(path, "rb") as fh:
        return read_tensor(fh)
