"""Dense float32 tensors with reverse-mode automatic differentiation.

Every Tensor doubles as a node in the computation graph: an operation's
result keeps references to its inputs together with a closure that routes
the incoming gradient back to them.  Graphs are acyclic by construction
(results are always freshly created tensors) and a backward pass visits
each node exactly once, in reverse topological order.

Conventions, fixed once for the whole package:

* data is contiguous row-major NCHW float32,
* accumulations go through numpy's float32 reductions / BLAS matmul,
  which are deterministic from run to run on a fixed machine,
* convolution padding is zero padding,
* max-pooling ties route the gradient to the first maximal element in
  row-major order,
* any forward op that produces a non-finite value raises instead of
  propagating NaN/inf.

Tensors are treated as immutable once produced; one forward/backward
graph belongs to a single execution context.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "conv2d",
    "maxpool2d",
    "global_maxpool",
    "dense",
    "relu",
    "sigmoid",
    "softmax",
    "activate",
    "concat_channels",
    "zero_pad2d",
    "flatten",
    "reshape",
    "add",
    "mul",
    "scale",
    "tensor_sum",
]


class Tensor:
    """A float32 array plus gradient buffer and backward bookkeeping.

    ``grad`` always mirrors the shape of ``data`` and starts at zero.
    Gradients accumulate across backward calls; call :meth:`zero_grad`
    between training steps.
    """

    __slots__ = ("data", "grad", "parents", "_grad_fn")

    def __init__(self, data, parents=(), grad_fn=None):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.grad = np.zeros_like(self.data)
        self.parents = tuple(parents)
        self._grad_fn = grad_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad[...] = 0.0

    def backward(self):
        """Run the reverse pass from a scalar loss.

        Seeds this node's gradient with ones and propagates through the
        graph once per node.  Raises ``ValueError`` for non-scalar roots.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        self.grad = np.ones_like(self.data)
        for node in reversed(_topo_order(self)):
            if node._grad_fn is not None:
                node._grad_fn(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def _topo_order(root):
    """Iterative post-order DFS: every node appears after all its parents."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _result(op, data, parents, grad_fn):
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"{op} produced non-finite values")
    return Tensor(data, parents=parents, grad_fn=grad_fn)


def _as_pair(padding):
    if isinstance(padding, tuple):
        return padding
    return (padding, padding)


def _require_4d(op, name, t):
    if t.data.ndim != 4:
        raise ValueError(f"{op}: {name} must be 4-D (N,C,H,W), got shape {t.data.shape}")


def conv2d(x, kernels, bias, stride=1, padding=0):
    """Strided 2-D cross-correlation with zero padding.

    ``x`` is (N,C,H,W), ``kernels`` is (F,C,kh,kw), ``bias`` is (F,).
    ``padding`` may be a single int applied to both axes or an
    ``(pad_h, pad_w)`` pair.  Output spatial size follows
    ``floor((H + 2*pad_h - kh) / stride) + 1`` and must be >= 1.
    """
    _require_4d("conv2d", "input", x)
    if kernels.data.ndim != 4:
        raise ValueError(f"conv2d: kernels must be 4-D, got shape {kernels.data.shape}")
    if stride < 1:
        raise ValueError(f"conv2d: stride must be positive, got {stride}")
    pad_h, pad_w = _as_pair(padding)
    if pad_h < 0 or pad_w < 0:
        raise ValueError(f"conv2d: padding must be non-negative, got {(pad_h, pad_w)}")
    n, c, h, w = x.data.shape
    f, ck, kh, kw = kernels.data.shape
    if ck != c:
        raise ValueError(f"conv2d: input has {c} channels but kernels expect {ck}")
    if bias.data.shape != (f,):
        raise ValueError(
            f"conv2d: bias shape {bias.data.shape} does not match {f} kernels"
        )
    hp, wp = h + 2 * pad_h, w + 2 * pad_w
    if kh > hp or kw > wp:
        raise ValueError(
            f"conv2d: kernel {kh}x{kw} exceeds padded input {hp}x{wp} "
            f"(input {h}x{w}, padding {(pad_h, pad_w)})"
        )
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # windows: (N, C, oh, ow, kh, kw); contract C,kh,kw against the kernels.
    out = np.tensordot(windows, kernels.data, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + bias.data[None, :, None, None]

    def grad_fn(g):
        kernels.grad += np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        bias.grad += g.sum(axis=(0, 2, 3))
        dwin = np.tensordot(g, kernels.data, axes=([1], [0]))  # (N, oh, ow, C, kh, kw)
        dwin = dwin.transpose(0, 3, 1, 2, 4, 5)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dwin[
                    :, :, :, :, i, j
                ]
        x.grad += gxp[:, :, pad_h : pad_h + h, pad_w : pad_w + w]

    return _result("conv2d", out, (x, kernels, bias), grad_fn)


def maxpool2d(x, window, stride):
    """Max over sliding ``window`` x ``window`` patches.

    Gradient routes to the first (row-major) maximal element of each patch.
    """
    _require_4d("maxpool2d", "input", x)
    if window < 1 or stride < 1:
        raise ValueError(f"maxpool2d: window and stride must be positive, got {window}, {stride}")
    n, c, h, w = x.data.shape
    if window > h or window > w:
        raise ValueError(f"maxpool2d: window {window} exceeds input {h}x{w}")
    windows = sliding_window_view(x.data, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = windows.shape[2], windows.shape[3]
    flat = windows.reshape(n, c, oh, ow, window * window)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        wi, wj = np.divmod(idx, window)
        rows = np.arange(oh)[None, None, :, None] * stride + wi
        cols = np.arange(ow)[None, None, None, :] * stride + wj
        ns = np.broadcast_to(np.arange(n)[:, None, None, None], idx.shape)
        cs = np.broadcast_to(np.arange(c)[None, :, None, None], idx.shape)
        gx = np.zeros_like(x.data)
        np.add.at(gx, (ns, cs, rows, cols), g)  # overlapping windows accumulate
        x.grad += gx

    return _result("maxpool2d", out, (x,), grad_fn)


def global_maxpool(x):
    """Per-channel maximum over the full spatial extent: (N,C,H,W) -> (N,C)."""
    _require_4d("global_maxpool", "input", x)
    n, c, h, w = x.data.shape
    flat = x.data.reshape(n, c, h * w)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        gx = np.zeros((n, c, h * w), dtype=np.float32)
        np.put_along_axis(gx, idx[..., None], g[..., None], axis=-1)
        x.grad += gx.reshape(n, c, h, w)

    return _result("global_maxpool", out, (x,), grad_fn)


def dense(x, weights, bias):
    """Affine map ``x @ weights + bias`` for (N,D) inputs."""
    if x.data.ndim != 2:
        raise ValueError(f"dense: input must be 2-D (N,D), got shape {x.data.shape}")
    if weights.data.ndim != 2:
        raise ValueError(f"dense: weights must be 2-D, got shape {weights.data.shape}")
    n, d = x.data.shape
    dw, k = weights.data.shape
    if d != dw:
        raise ValueError(f"dense: input has {d} features but weights expect {dw}")
    if bias.data.shape != (k,):
        raise ValueError(f"dense: bias shape {bias.data.shape} does not match {k} outputs")
    out = x.data @ weights.data + bias.data

    def grad_fn(g):
        x.grad += g @ weights.data.T
        weights.grad += x.data.T @ g
        bias.grad += g.sum(axis=0)

    return _result("dense", out, (x, weights, bias), grad_fn)


def relu(x):
    out = np.maximum(x.data, 0.0)

    def grad_fn(g):
        x.grad += g * (x.data > 0)

    return _result("relu", out, (x,), grad_fn)


def sigmoid(x):
    # exp of a non-positive argument only, so large |x| cannot overflow.
    z = np.exp(-np.abs(x.data))
    s = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(np.float32)

    def grad_fn(g):
        x.grad += g * s * (1.0 - s)

    return _result("sigmoid", s, (x,), grad_fn)


def softmax(x):
    """Softmax over the last axis; rows sum to 1."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        x.grad += s * (g - (g * s).sum(axis=-1, keepdims=True))

    return _result("softmax", s, (x,), grad_fn)


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "softmax": softmax}


def activate(x, kind):
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}, expected one of {sorted(_ACTIVATIONS)}")
    return fn(x)


def concat_channels(inputs):
    """Concatenate (N,Ci,H,W) tensors along the channel axis, in argument order."""
    inputs = list(inputs)
    if not inputs:
        raise ValueError("concat_channels: need at least one input")
    for i, t in enumerate(inputs):
        _require_4d("concat_channels", f"input {i}", t)
    n, _, h, w = inputs[0].data.shape
    for i, t in enumerate(inputs[1:], start=1):
        tn, _, th, tw = t.data.shape
        if (tn, th, tw) != (n, h, w):
            raise ValueError(
                f"concat_channels: input {i} has (N,H,W)=({tn},{th},{tw}) "
                f"but input 0 has ({n},{h},{w})"
            )
    out = np.concatenate([t.data for t in inputs], axis=1)
    offsets = np.cumsum([0] + [t.data.shape[1] for t in inputs])

    def grad_fn(g):
        for t, start, stop in zip(inputs, offsets[:-1], offsets[1:]):
            t.grad += g[:, start:stop]

    return _result("concat_channels", out, tuple(inputs), grad_fn)


def zero_pad2d(x, pad_h, pad_w):
    """Zero-pad the two spatial axes of an (N,C,H,W) tensor."""
    _require_4d("zero_pad2d", "input", x)
    if pad_h < 0 or pad_w < 0:
        raise ValueError(f"zero_pad2d: padding must be non-negative, got {(pad_h, pad_w)}")
    _, _, h, w = x.data.shape
    out = np.pad(x.data, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))

    def grad_fn(g):
        x.grad += g[:, :, pad_h : pad_h + h, pad_w : pad_w + w]

    return _result("zero_pad2d", out, (x,), grad_fn)


def flatten(x):
    """Collapse all but the leading (batch) axis."""
    if x.data.ndim < 2:
        raise ValueError(f"flatten: input must have a batch axis, got shape {x.data.shape}")
    shape = x.data.shape
    out = x.data.reshape(shape[0], -1)

    def grad_fn(g):
        x.grad += g.reshape(shape)

    return _result("flatten", out, (x,), grad_fn)


def reshape(x, shape):
    """View the same elements (row-major) under a new shape."""
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ValueError(
            f"reshape: cannot view shape {x.data.shape} as {shape}"
        ) from None
    old = x.data.shape

    def grad_fn(g):
        x.grad += g.reshape(old)

    return _result("reshape", out, (x,), grad_fn)


def add(a, b):
    """Elementwise sum of two same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"add: shapes {a.data.shape} and {b.data.shape} differ")
    out = a.data + b.data

    def grad_fn(g):
        a.grad += g
        b.grad += g

    return _result("add", out, (a, b), grad_fn)


def mul(a, b):
    """Elementwise product of two same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul: shapes {a.data.shape} and {b.data.shape} differ")
    out = a.data * b.data

    def grad_fn(g):
        a.grad += g * b.data
        b.grad += g * a.data

    return _result("mul", out, (a, b), grad_fn)


def scale(x, factor):
    """Multiply by a python-float constant."""
    out = x.data * np.float32(factor)

    def grad_fn(g):
        x.grad += g * np.float32(factor)

    return _result("scale", out, (x,), grad_fn)


def tensor_sum(x):
    """Sum all elements into a scalar tensor."""
    out = np.asarray(x.data.sum(), dtype=np.float32)

    def grad_fn(g):
        x.grad += g

    return _result("sum", out, (x,), grad_fn)
