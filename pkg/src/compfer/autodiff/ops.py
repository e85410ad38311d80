"""Differentiable ops: exactly the set the model uses.

No general broadcasting: bias terms are folded into ``linear``/``conv2d`` and
elementwise binary ops require equal shapes. Reductions accumulate in float64.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from numpy.lib.stride_tricks import sliding_window_view

from compfer.autodiff.tensor import Tensor, as_tensor, make_node
from compfer.errors import DimensionError


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _sum64(x, axis=None):
    return np.sum(x, axis=axis, dtype=np.float64)


# --- elementwise ---------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return make_node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return make_node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return make_node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)
    return make_node(a.data * c, (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return make_node(y, (x,), lambda g: (g * y * (1 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return make_node(y, (x,), lambda g: (g * (1 - y * y),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows, unlike 1 / (1 + exp(-z))
    half = z.dtype.type(0.5)
    return half * (np.tanh(half * z) + 1)


# --- shape ops -----------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError("transpose expects a 2-D tensor")
    return make_node(x.data.T, (x,), lambda g: (g.T,))


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def select(x: Tensor, index: int, axis: int = 1) -> Tensor:
    """``x`` indexed at ``index`` along ``axis`` (that axis is dropped)."""
    src_shape, dtype = x.shape, x.dtype

    def back(g):
        full = np.zeros(src_shape, dtype=dtype)
        sl = [slice(None)] * len(src_shape)
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return make_node(np.take(x.data, index, axis=axis), (x,), back)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour upsampling of an (N, C, H, W) tensor."""
    n, c, h, w = x.shape
    y = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def back(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return make_node(y, (x,), back)


def mean_pool(x: Tensor) -> Tensor:
    """Global spatial average: (N, C, H, W) -> (N, C)."""
    n, c, h, w = x.shape
    y = (_sum64(x.data, axis=(2, 3)) / (h * w)).astype(x.dtype)

    def back(g):
        return (np.broadcast_to((g / (h * w))[:, :, None, None], x.shape).astype(x.dtype),)

    return make_node(y, (x,), back)


# --- reductions ----------------------------------------------------------------

def sum_all(x: Tensor) -> Tensor:
    y = np.asarray(_sum64(x.data), dtype=x.dtype)
    return make_node(y, (x,), lambda g: (np.full(x.shape, g, dtype=x.dtype),))


def sum_squares(x: Tensor) -> Tensor:
    y = np.asarray(_sum64(np.square(x.data, dtype=np.float64)), dtype=x.dtype)
    return make_node(y, (x,), lambda g: (2 * g * x.data,))


# --- linear algebra ------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible {a.shape} @ {b.shape}")
    return make_node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x (N, in) @ weight (in, out) + bias (out,)."""
    if x.data.ndim != 2 or x.shape[1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise DimensionError(f"linear: x {x.shape}, weight {weight.shape}, bias {bias.shape}")
    y = x.data @ weight.data + bias.data

    def back(g):
        return (
            g @ weight.data.T if x.requires_grad else None,
            x.data.T @ g if weight.requires_grad else None,
            _sum64(g, axis=0).astype(bias.dtype) if bias.requires_grad else None,
        )

    return make_node(y, (x, weight, bias), back)


@njit(cache=True)
def _patchify_kernel(x, k, ho, wo, out):
    n, c = x.shape[0], x.shape[1]
    for i in range(n):
        for ch in range(c):
            for py in range(ho):
                for ky in range(k):
                    for px in range(wo):
                        r = (i * ho + py) * wo + px
                        for kx in range(k):
                            out[r, (ch * k + ky) * k + kx] = x[i, ch, py * k + ky, px * k + kx]


@njit(cache=True)
def _unpatchify_kernel(cols, k, ho, wo, out):
    n, c = out.shape[0], out.shape[1]
    for i in range(n):
        for ch in range(c):
            for py in range(ho):
                for ky in range(k):
                    for px in range(wo):
                        r = (i * ho + py) * wo + px
                        for kx in range(k):
                            out[i, ch, py * k + ky, px * k + kx] = cols[r, (ch * k + ky) * k + kx]


def _patchify(x: np.ndarray, k: int, ho: int, wo: int) -> np.ndarray:
    """im2col for non-overlapping k x k windows (stride == k)."""
    n, c = x.shape[:2]
    out = np.empty((n * ho * wo, c * k * k), dtype=x.dtype)
    _patchify_kernel(x, k, ho, wo, out)
    return out


def _unpatchify(cols: np.ndarray, k: int, ho: int, wo: int, out: np.ndarray) -> None:
    _unpatchify_kernel(cols, k, ho, wo, out)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (N, C, H, W) input with (O, C, K, K) kernels."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise DimensionError("conv2d expects 4-D input and weight")
    n, c, h, w = x.shape
    o, cw, k, k2 = weight.shape
    if cw != c or k != k2 or bias.shape != (o,):
        raise DimensionError(f"conv2d: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = xp.shape[2], xp.shape[3]
    if hp < k or wp < k:
        raise DimensionError(f"conv2d: input {hp}x{wp} smaller than kernel {k}")
    ho, wo = (hp - k) // stride + 1, (wp - k) // stride + 1
    if stride == k:
        cols = _patchify(np.ascontiguousarray(xp), k, ho, wo)
    else:
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, : (ho - 1) * stride + 1 : stride,
                                                          : (wo - 1) * stride + 1 : stride]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    wf = weight.data.reshape(o, c * k * k)
    y = (cols @ wf.T + bias.data).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def back(g):
        gf = g.transpose(0, 2, 3, 1).reshape(-1, o)
        dw = (gf.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        db = _sum64(gf, axis=0).astype(bias.dtype) if bias.requires_grad else None
        dx = None
        if x.requires_grad:
            dxp = np.zeros((n, c, hp, wp), dtype=x.dtype)
            if stride == k:
                _unpatchify(np.ascontiguousarray(gf @ wf), k, ho, wo, dxp)
            else:
                dcols = (gf @ wf).reshape(n, ho, wo, c, k, k)
                for i in range(k):
                    for j in range(k):
                        dxp[:, :, i : i + stride * (ho - 1) + 1 : stride,
                            j : j + stride * (wo - 1) + 1 : stride] += dcols[..., i, j].transpose(0, 3, 1, 2)
            dx = dxp[:, :, padding : padding + h, padding : padding + w] if padding else dxp
        return dx, dw, db

    return make_node(np.ascontiguousarray(y), (x, weight, bias), back)


# --- recurrent -----------------------------------------------------------------

def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor):
    """One LSTM step; gate layout along the 4H axis is (input, forget, cell, output).

    Returns ``(h, c)``.
    """
    hid = h_prev.shape[1]
    if (w_x.shape != (x.shape[1], 4 * hid) or w_h.shape != (hid, 4 * hid)
            or b.shape != (4 * hid,) or c_prev.shape != h_prev.shape or x.shape[0] != h_prev.shape[0]):
        raise DimensionError(
            f"lstm_cell: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}, "
            f"w_x {w_x.shape}, w_h {w_h.shape}, b {b.shape}")
    z = x.data @ w_x.data + h_prev.data @ w_h.data + b.data
    act = np.empty_like(z)
    act[:, : 2 * hid] = _sigmoid(z[:, : 2 * hid])
    act[:, 2 * hid : 3 * hid] = np.tanh(z[:, 2 * hid : 3 * hid])
    act[:, 3 * hid :] = _sigmoid(z[:, 3 * hid :])

    def gates_back(g):
        dz = g.copy()
        s = act[:, : 2 * hid]
        dz[:, : 2 * hid] *= s * (1 - s)
        t = act[:, 2 * hid : 3 * hid]
        dz[:, 2 * hid : 3 * hid] *= 1 - t * t
        s = act[:, 3 * hid :]
        dz[:, 3 * hid :] *= s * (1 - s)
        return (
            dz @ w_x.data.T if x.requires_grad else None,
            dz @ w_h.data.T if h_prev.requires_grad else None,
            x.data.T @ dz if w_x.requires_grad else None,
            h_prev.data.T @ dz if w_h.requires_grad else None,
            _sum64(dz, axis=0).astype(b.dtype) if b.requires_grad else None,
        )

    gates = make_node(act, (x, h_prev, w_x, w_h, b), gates_back)
    i, f, gc, o = (act[:, j * hid : (j + 1) * hid] for j in range(4))
    c = f * c_prev.data + i * gc

    def c_back(g):
        da = np.zeros_like(act)
        da[:, :hid] = g * gc
        da[:, hid : 2 * hid] = g * c_prev.data
        da[:, 2 * hid : 3 * hid] = g * i
        return da, g * f

    c_node = make_node(c, (gates, c_prev), c_back)
    tc = np.tanh(c)
    h = o * tc

    def h_back(g):
        da = np.zeros_like(act)
        da[:, 3 * hid :] = g * tc
        return da, g * o * (1 - tc * tc)

    h_node = make_node(h, (gates, c_node), h_back)
    return h_node, c_node


# --- losses --------------------------------------------------------------------

def softmax_ce(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, c = logits.shape
    if labels.shape[0] != n:
        raise DimensionError(f"softmax_ce: {n} logits rows but {labels.shape[0]} labels")
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"softmax_ce: labels must lie in [0, {c})")
    z = logits.data.astype(np.float64)
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    s = e.sum(axis=1, keepdims=True)
    logp = z - m - np.log(s)
    loss = -logp[np.arange(n), labels].sum() / n
    probs = e / s

    def back(g):
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        return ((d * (float(g) / n)).astype(logits.dtype),)

    return make_node(np.asarray(loss, dtype=logits.dtype), (logits,), back)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def l2_loss(a: Tensor, b: Tensor, reduction: str = "mean") -> Tensor:
    """Squared L2 distance; ``reduction='mean'`` divides by the element count."""
    _same_shape(a, b, "l2_loss")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    norm = diff.size if reduction == "mean" else 1
    y = np.asarray(np.sum(diff * diff) / norm, dtype=a.dtype)

    def back(g):
        d = 2.0 * float(g) * diff / norm
        return d.astype(a.dtype), (-d).astype(b.dtype)

    return make_node(y, (a, b), back)


def standardize(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-column zero mean / unit variance over the batch axis of an (N, D) tensor.

    The mean is taken relative to the first row so constant columns give
    exactly zero deviations.
    """
    if x.data.ndim != 2:
        raise DimensionError("standardize expects (N, D)")
    n = x.shape[0]
    xd = x.data.astype(np.float64)
    dev = xd - xd[0]
    dev = dev - dev.mean(axis=0)
    s = np.sqrt((dev * dev).mean(axis=0) + eps)
    y = dev / s

    def back(g):
        g = g.astype(np.float64)
        dx = (g - g.mean(axis=0) - y * (g * y).mean(axis=0)) / s
        return (dx.astype(x.dtype),)

    return make_node(y.astype(x.dtype), (x,), back)
