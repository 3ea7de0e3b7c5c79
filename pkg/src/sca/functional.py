"""Differentiable ops used by the codec network."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, accumulate, make_result


def _check_ndim(op: str, t: Tensor, ndim: int, what: str) -> None:
    if t.ndim != ndim:
        raise ShapeError(op, f"{what}.ndim", ndim, t.ndim)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int | None = None) -> Tensor:
    """2-D cross-correlation of ``x[N,C,H,W]`` with ``weight[F,C,kh,kw]`` plus bias."""
    _check_ndim("conv2d", x, 4, "input")
    _check_ndim("conv2d", weight, 4, "weight")
    n, c, h, w = x.shape
    f, wc, kh, kw = weight.shape
    if wc != c:
        raise ShapeError("conv2d", "C", c, wc)
    if bias.shape != (f,):
        raise ShapeError("conv2d", "F", (f,), bias.shape)
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("conv2d", "kernel", "odd size", (kh, kw))
    if stride not in (1, 2):
        raise ValueError(f"conv2d: stride must be 1 or 2, got {stride}")
    pad = (kh - 1) // 2 if padding is None else padding
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d", "H/W", f">= {kh}x{kw} after padding", (h, w))

    # channel-major layout keeps every patch slice contiguous
    xc = x.data.transpose(1, 0, 2, 3)
    xp = np.pad(xc, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xc
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, :, i : i + hs : stride, j : j + ws : stride]
    cols = cols.reshape(c * kh * kw, n * ho * wo)
    wmat = weight.data.reshape(f, -1)
    out = (wmat @ cols).reshape(f, n, ho, wo).transpose(1, 0, 2, 3) + bias.data[:, None, None]

    def backward(g):
        gt = g.transpose(1, 0, 2, 3).reshape(f, -1)
        if weight.requires_grad:
            accumulate(weight, (gt @ cols.T).reshape(weight.shape))
        if bias.requires_grad:
            accumulate(bias, gt.sum(axis=1))
        if x.requires_grad:
            dcols = (wmat.T @ gt).reshape(c, kh, kw, n, ho, wo)
            dxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + hs : stride, j : j + ws : stride] += dcols[:, i, j]
            if pad:
                dxp = dxp[:, :, pad : pad + h, pad : pad + w]
            accumulate(x, dxp.transpose(1, 0, 2, 3))

    return make_result(out, (x, weight, bias), backward, "conv2d")


def interpolation_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """Corner-aligned linear interpolation weights, shape ``(n_out, n_in)``.

    Output sample j reads source coordinate ``j * (n_in - 1) / (n_out - 1)``.
    """
    a = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1 or n_out == 1:
        a[:, 0] = 1.0
        return a
    pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    frac = pos - lo
    rows = np.arange(n_out)
    a[rows, lo] = 1.0 - frac
    a[rows, lo + 1] += frac
    return a


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    """Corner-aligned bilinear up-sampling of ``x[N,C,H,W]`` by an integer factor."""
    _check_ndim("bilinear_upsample", x, 4, "input")
    if factor < 1:
        raise ValueError(f"bilinear_upsample: factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    h, w = x.shape[2:]
    ah = interpolation_matrix(h, factor * h, x.dtype)
    aw = interpolation_matrix(w, factor * w, x.dtype)
    out = ah @ x.data @ aw.T

    def backward(g):
        accumulate(x, ah.T @ g @ aw)

    return make_result(out, (x,), backward, "bilinear_upsample")


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map over the last axis: ``x @ weight.T + bias``."""
    d_out, d_in = weight.shape
    if x.shape[-1] != d_in:
        raise ShapeError("linear", "d_in", d_in, x.shape[-1])
    if bias.shape != (d_out,):
        raise ShapeError("linear", "d_out", (d_out,), bias.shape)
    out = x.data @ weight.data.T + bias.data

    def backward(g):
        if x.requires_grad:
            accumulate(x, g @ weight.data)
        g2 = g.reshape(-1, d_out)
        if weight.requires_grad:
            accumulate(weight, g2.T @ x.data.reshape(-1, d_in))
        if bias.requires_grad:
            accumulate(bias, g2.sum(axis=0))

    return make_result(out, (x, weight, bias), backward, "linear")


def grouped_linear(x: Tensor, weight: Tensor, bias: Tensor, transpose: bool = False) -> Tensor:
    """Independent linear layer per group.

    ``x[N,L,p]``, ``weight[L,m,p]`` and ``bias[L,m]`` give ``[N,L,m]``. With
    ``transpose=True`` the same weight maps ``x[N,L,m]`` back to ``[N,L,p]``
    through its transpose; ``bias`` is then ``[L,p]``.
    """
    _check_ndim("grouped_linear", x, 3, "input")
    groups, m, p = weight.shape
    d_in, d_out = (m, p) if transpose else (p, m)
    if x.shape[1] != groups:
        raise ShapeError("grouped_linear", "L", groups, x.shape[1])
    if x.shape[2] != d_in:
        raise ShapeError("grouped_linear", "d_in", d_in, x.shape[2])
    if bias.shape != (groups, d_out):
        raise ShapeError("grouped_linear", "bias", (groups, d_out), bias.shape)
    # operator per group with shape [L, d_in, d_out]
    op = weight.data if transpose else weight.data.transpose(0, 2, 1)
    xl = x.data.transpose(1, 0, 2)  # [L,N,d_in]
    out = (xl @ op).transpose(1, 0, 2) + bias.data

    def backward(g):
        gl = g.transpose(1, 0, 2)  # [L,N,d_out]
        if x.requires_grad:
            accumulate(x, (gl @ op.transpose(0, 2, 1)).transpose(1, 0, 2))
        if weight.requires_grad:
            gop = xl.transpose(0, 2, 1) @ gl  # [L,d_in,d_out]
            accumulate(weight, gop if transpose else gop.transpose(0, 2, 1))
        if bias.requires_grad:
            accumulate(bias, g.sum(axis=0))

    return make_result(out, (x, weight, bias), backward, "grouped_linear")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        accumulate(x, g * mask)

    return make_result(np.where(mask, x.data, 0).astype(x.dtype), (x,), backward, "relu")


def top_k_indices(v: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest magnitudes along the last axis, ascending.

    Ties on magnitude go to the lower index.
    """
    m = v.shape[-1]
    if not 1 <= k <= m:
        raise ValueError(f"k must satisfy 1 <= k <= {m}, got {k}")
    order = np.argsort(-np.abs(v), axis=-1, kind="stable")[..., :k]
    return np.sort(order, axis=-1)


def top_k_mask(v: np.ndarray, k: int) -> np.ndarray:
    idx = top_k_indices(v, k)
    mask = np.zeros(v.shape, dtype=bool)
    np.put_along_axis(mask, idx, True, axis=-1)
    return mask


def top_k_sparsify(x, k: int):
    """Keep the k largest-magnitude entries along the last axis, zero the rest.

    Accepts a Tensor (differentiable, gradient flows through kept entries only)
    or a plain array.
    """
    if not isinstance(x, Tensor):
        v = np.asarray(x)
        return np.where(top_k_mask(v, k), v, 0).astype(v.dtype, copy=False)
    mask = top_k_mask(x.data, k)

    def backward(g):
        accumulate(x, g * mask)

    return make_result(np.where(mask, x.data, 0).astype(x.dtype), (x,), backward, "top_k_sparsify")


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            accumulate(t, g[tuple(sl)])

    out = np.concatenate([t.data for t in tensors], axis=axis)
    return make_result(out, tuple(tensors), backward, "concat")


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean squared error against a constant target."""
    target = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError("mse_loss", "shape", pred.shape, target.shape)
    diff = pred.data - target
    n = diff.size

    def backward(g):
        accumulate(pred, g * (2.0 / n) * diff)

    return make_result(np.mean(diff * diff, dtype=pred.dtype), (pred,), backward, "mse_loss")
