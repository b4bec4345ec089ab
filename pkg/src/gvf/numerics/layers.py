"""Layer forward/backward primitives on plain numpy arrays.

Conventions:
  * Spatial tensors are [C, H, W] or batched [B, C, H, W]; dense inputs are
    [D] or [B, D]. Unbatched inputs are promoted internally and squeezed on
    the way out.
  * Flow fields are [2, H, W]: channel 0 is the x (column) offset, channel 1
    the y (row) offset. Warping is backward-sampling: output pixel (x, y)
    reads the source at (x + fx, y + fy), with sample coordinates clamped to
    the image rectangle.
  * Backward functions accumulate parameter gradients in place (``gw``,
    ``gb``) and return the input gradient, so BPTT sums naturally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import as_strided


class ShapeError(ValueError):
    """Input shape incompatible with a layer's parameters."""


@dataclass
class LayerParams:
    """One layer's weights and biases plus matching gradient accumulators."""

    name: str
    w: np.ndarray
    b: np.ndarray
    gw: np.ndarray = field(default=None)  # type: ignore[assignment]
    gb: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.gw is None:
            self.gw = np.zeros_like(self.w)
        if self.gb is None:
            self.gb = np.zeros_like(self.b)
        if self.gw.shape != self.w.shape or self.gb.shape != self.b.shape:
            raise ShapeError(f"{self.name}: gradient shapes must mirror parameter shapes")

    def zero_grad(self):
        self.gw.fill(0.0)
        self.gb.fill(0.0)

    def copy(self) -> "LayerParams":
        return LayerParams(self.name, self.w.copy(), self.b.copy())


def affine_params(rng: np.random.Generator, d_in: int, d_out: int, scale: float | None = None,
                  name: str = "affine") -> LayerParams:
    if scale is None:
        scale = float(np.sqrt(1.0 / d_in))
    w = rng.uniform(-scale, scale, size=(d_in, d_out))
    return LayerParams(name, w, np.zeros(d_out))


def conv_params(rng: np.random.Generator, c_in: int, c_out: int, k: int,
                scale: float | None = None, name: str = "conv") -> LayerParams:
    fan_in = c_in * k * k
    if scale is None:
        scale = float(np.sqrt(1.0 / fan_in))
    w = rng.uniform(-scale, scale, size=(c_out, c_in, k, k))
    return LayerParams(name, w, np.zeros(c_out))


def lstm_params(rng: np.random.Generator, d_in: int, d_hidden: int,
                name: str = "lstm") -> LayerParams:
    # Single stacked matrix over [x, h]; gate order i, f, g, o.
    scale = float(np.sqrt(1.0 / (d_in + d_hidden)))
    w = rng.uniform(-scale, scale, size=(d_in + d_hidden, 4 * d_hidden))
    b = np.zeros(4 * d_hidden)
    b[d_hidden:2 * d_hidden] = 1.0  # forget-gate bias
    return LayerParams(name, w, b)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# affine


def affine_forward(x: np.ndarray, p: LayerParams):
    if x.shape[-1] != p.w.shape[0]:
        raise ShapeError(f"{p.name}: input dim {x.shape[-1]} != weight input dim {p.w.shape[0]}")
    y = x @ p.w + p.b
    return y, x


def affine_backward(p: LayerParams, cache, gy: np.ndarray) -> np.ndarray:
    x = cache
    x2 = x.reshape(-1, x.shape[-1])
    g2 = gy.reshape(-1, gy.shape[-1])
    p.gw += x2.T @ g2
    p.gb += g2.sum(axis=0)
    return gy @ p.w.T


def affine(x: np.ndarray, p: LayerParams, grad_out: np.ndarray | None = None):
    """y = xW + b. With ``grad_out``, also returns the input gradient and
    accumulates parameter gradients."""
    y, cache = affine_forward(x, p)
    if grad_out is None:
        return y
    if grad_out.shape != y.shape:
        raise ShapeError(f"{p.name}: grad_out shape {grad_out.shape} != output {y.shape}")
    return y, affine_backward(p, cache, grad_out)


# ---------------------------------------------------------------------------
# conv2d (cross-correlation)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    b, c = xp.shape[:2]
    s = xp.strides
    view = as_strided(
        xp,
        shape=(b, c, ho, wo, kh, kw),
        strides=(s[0], s[1], stride * s[2], stride * s[3], s[2], s[3]),
    )
    return np.ascontiguousarray(view.transpose(0, 2, 3, 1, 4, 5)).reshape(b * ho * wo, c * kh * kw)


def conv2d_forward(x: np.ndarray, p: LayerParams, stride: int = 1, padding: int = 0):
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    b, c_in, h, w = x.shape
    c_out, c_in_w, kh, kw = p.w.shape
    if c_in != c_in_w:
        raise ShapeError(f"{p.name}: input channels {c_in} != kernel channels {c_in_w}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(f"{p.name}: kernel {kh}x{kw} does not fit padded input {h}x{w} (pad {padding})")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    y = cols @ p.w.reshape(c_out, -1).T + p.b
    y = np.ascontiguousarray(y.reshape(b, ho, wo, c_out).transpose(0, 3, 1, 2))
    cache = (cols, x.shape, stride, padding, ho, wo, squeeze)
    return (y[0] if squeeze else y), cache


def conv2d_backward(p: LayerParams, cache, gy: np.ndarray) -> np.ndarray:
    cols, xshape, stride, padding, ho, wo, squeeze = cache
    if squeeze:
        gy = gy[None]
    b, c_in, h, w = xshape
    c_out, _, kh, kw = p.w.shape
    g2 = gy.transpose(0, 2, 3, 1).reshape(b * ho * wo, c_out)
    p.gw += (g2.T @ cols).reshape(p.w.shape)
    p.gb += g2.sum(axis=0)
    gcols = (g2 @ p.w.reshape(c_out, -1)).reshape(b, ho, wo, c_in, kh, kw)
    gxp = np.zeros((b, c_in, h + 2 * padding, w + 2 * padding), dtype=gy.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    gx = gxp[:, :, padding:padding + h, padding:padding + w]
    return gx[0] if squeeze else gx


def conv2d(x: np.ndarray, p: LayerParams, stride: int = 1, padding: int = 0,
           grad_out: np.ndarray | None = None):
    y, cache = conv2d_forward(x, p, stride, padding)
    if grad_out is None:
        return y
    if grad_out.shape != y.shape:
        raise ShapeError(f"{p.name}: grad_out shape {grad_out.shape} != output {y.shape}")
    return y, conv2d_backward(p, cache, grad_out)


# ---------------------------------------------------------------------------
# LSTM cell


def lstm_step_forward(x: np.ndarray, h: np.ndarray, c: np.ndarray, p: LayerParams):
    squeeze = x.ndim == 1
    if squeeze:
        x, h, c = x[None], h[None], c[None]
    dh = h.shape[-1]
    if x.shape[-1] + dh != p.w.shape[0] or p.w.shape[1] != 4 * dh:
        raise ShapeError(f"{p.name}: dims of x/h inconsistent with weight {p.w.shape}")
    xh = np.concatenate([x, h], axis=-1)
    z = xh @ p.w + p.b
    i = sigmoid(z[:, :dh])
    f = sigmoid(z[:, dh:2 * dh])
    g = np.tanh(z[:, 2 * dh:3 * dh])
    o = sigmoid(z[:, 3 * dh:])
    c2 = f * c + i * g
    tc2 = np.tanh(c2)
    h2 = o * tc2
    cache = (xh, c, i, f, g, o, tc2, squeeze)
    if squeeze:
        return h2[0], c2[0], cache
    return h2, c2, cache


def lstm_step_backward(p: LayerParams, cache, dh2: np.ndarray, dc2: np.ndarray):
    """Returns (dx, dh_prev, dc_prev); accumulates into p.gw/p.gb."""
    xh, c, i, f, g, o, tc2, squeeze = cache
    if squeeze:
        dh2, dc2 = dh2[None], dc2[None]
    dh = c.shape[-1]
    do = dh2 * tc2
    dc = dc2 + dh2 * o * (1.0 - tc2 * tc2)
    di = dc * g
    df = dc * c
    dg = dc * i
    dc_prev = dc * f
    dz = np.concatenate(
        [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=-1)
    p.gw += xh.T @ dz
    p.gb += dz.sum(axis=0)
    dxh = dz @ p.w.T
    dx, dh_prev = dxh[:, :xh.shape[-1] - dh], dxh[:, xh.shape[-1] - dh:]
    if squeeze:
        return dx[0], dh_prev[0], dc_prev[0]
    return dx, dh_prev, dc_prev


def lstm_step(x: np.ndarray, h: np.ndarray, c: np.ndarray, p: LayerParams):
    """Forward-only LSTM cell step, returns (h', c')."""
    h2, c2, _ = lstm_step_forward(x, h, c, p)
    return h2, c2


# ---------------------------------------------------------------------------
# bilinear warp


def _gather_corners(src_flat, y0, x0, w):
    b, c = src_flat.shape[:2]
    bi = np.arange(b)[:, None, None]
    ci = np.arange(c)[None, :, None]
    i00 = (y0 * w + x0)[:, None, :]
    i01 = (y0 * w + x0 + 1)[:, None, :]
    i10 = ((y0 + 1) * w + x0)[:, None, :]
    i11 = ((y0 + 1) * w + x0 + 1)[:, None, :]
    return (src_flat[bi, ci, i00], src_flat[bi, ci, i01],
            src_flat[bi, ci, i10], src_flat[bi, ci, i11], (i00, i01, i10, i11))


def bilinear_warp_forward(src: np.ndarray, flow: np.ndarray):
    squeeze = src.ndim == 3
    if squeeze:
        src, flow = src[None], flow[None]
    b, c, h, w = src.shape
    if flow.shape != (b, 2, h, w):
        raise ShapeError(f"flow shape {flow.shape} does not match source spatial dims {(b, 2, h, w)}")
    gy, gx = np.meshgrid(np.arange(h, dtype=src.dtype), np.arange(w, dtype=src.dtype), indexing="ij")
    rx = gx + flow[:, 0]
    ry = gy + flow[:, 1]
    sx = np.clip(rx, 0.0, w - 1.0).reshape(b, h * w)
    sy = np.clip(ry, 0.0, h - 1.0).reshape(b, h * w)
    x0 = np.minimum(np.floor(sx), w - 2).astype(np.int64)
    y0 = np.minimum(np.floor(sy), h - 2).astype(np.int64)
    wx = sx - x0
    wy = sy - y0
    src_flat = src.reshape(b, c, h * w)
    v00, v01, v10, v11, idx = _gather_corners(src_flat, y0, x0, w)
    wxe = wx[:, None, :]
    wye = wy[:, None, :]
    out = ((1 - wye) * ((1 - wxe) * v00 + wxe * v01)
           + wye * ((1 - wxe) * v10 + wxe * v11))
    out = out.reshape(b, c, h, w)
    # clamp kills the flow gradient off the image rectangle
    in_x = ((rx > 0.0) & (rx < w - 1.0)).reshape(b, h * w)
    in_y = ((ry > 0.0) & (ry < h - 1.0)).reshape(b, h * w)
    cache = (src_flat.shape, (v00, v01, v10, v11), idx, wx, wy, in_x, in_y, squeeze)
    return (out[0] if squeeze else out), cache


def bilinear_warp_backward(cache, gout: np.ndarray):
    """Returns (grad_src, grad_flow)."""
    (b, c, hw), corners, idx, wx, wy, in_x, in_y, squeeze = cache
    if squeeze:
        gout = gout[None]
    h_w = gout.shape[2] * gout.shape[3]
    g = gout.reshape(b, c, h_w)
    v00, v01, v10, v11 = corners
    wxe, wye = wx[:, None, :], wy[:, None, :]
    w00 = (1 - wye) * (1 - wxe)
    w01 = (1 - wye) * wxe
    w10 = wye * (1 - wxe)
    w11 = wye * wxe

    gsrc_flat = np.zeros(b * c * hw, dtype=gout.dtype)
    base = (np.arange(b)[:, None, None] * c + np.arange(c)[None, :, None]) * hw
    for wgt, ix in zip((w00, w01, w10, w11), idx):
        flat_idx = np.broadcast_to(base + ix, g.shape).ravel()
        gsrc_flat += np.bincount(flat_idx, weights=(g * wgt).ravel(), minlength=b * c * hw)
    gsrc = gsrc_flat.reshape(b, c, *gout.shape[2:])

    dout_dsx = ((1 - wye) * (v01 - v00) + wye * (v11 - v10))
    dout_dsy = ((1 - wxe) * (v10 - v00) + wxe * (v11 - v01))
    gfx = (g * dout_dsx).sum(axis=1) * in_x
    gfy = (g * dout_dsy).sum(axis=1) * in_y
    gflow = np.stack([gfx, gfy], axis=1).reshape(b, 2, *gout.shape[2:])
    if squeeze:
        return gsrc[0], gflow[0]
    return gsrc, gflow


def bilinear_warp(src: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward-warp ``src`` by ``flow``: out(x,y) = src(x+fx, y+fy), clamped."""
    out, _ = bilinear_warp_forward(src, flow)
    return out


# ---------------------------------------------------------------------------
# channel softmax


def channel_softmax_forward(x: np.ndarray):
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    s = e / e.sum(axis=1, keepdims=True)
    return (s[0] if squeeze else s), (s, squeeze)


def channel_softmax_backward(cache, gout: np.ndarray) -> np.ndarray:
    s, squeeze = cache
    if squeeze:
        gout = gout[None]
    dot = (gout * s).sum(axis=1, keepdims=True)
    gx = s * (gout - dot)
    return gx[0] if squeeze else gx


def channel_softmax(x: np.ndarray) -> np.ndarray:
    """Softmax across the channel axis: at each (h, w) the K outputs sum to 1."""
    out, _ = channel_softmax_forward(x)
    return out


# ---------------------------------------------------------------------------
# small helpers used by the model decoders


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(mask, gy: np.ndarray) -> np.ndarray:
    return gy * mask


def upsample2x_forward(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor 2x upsampling along the last two axes."""
    return x.repeat(2, axis=-2).repeat(2, axis=-1)


def upsample2x_backward(gy: np.ndarray) -> np.ndarray:
    return (gy[..., 0::2, 0::2] + gy[..., 0::2, 1::2]
            + gy[..., 1::2, 0::2] + gy[..., 1::2, 1::2])
