"""Predictor network: conv encoder + dense LSTM over pooled features +
upsampling decoder emitting a bounded flow field and compositing masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gvf.numerics import (
    LayerParams,
    affine_backward,
    affine_forward,
    affine_params,
    bilinear_warp_backward,
    bilinear_warp_forward,
    channel_softmax_backward,
    channel_softmax_forward,
    conv2d_backward,
    conv2d_forward,
    conv_params,
    lstm_params,
    lstm_step_backward,
    lstm_step_forward,
    relu_backward,
    relu_forward,
    upsample2x_backward,
    upsample2x_forward,
)


@dataclass(frozen=True)
class PredictorConfig:
    image_size: int = 48
    context_frames: int = 2
    action_dim: int = 4
    action_scale: tuple = (0.08, 0.08, 0.08, 0.3)
    enc_channels: tuple = (16, 32)
    lstm_hidden: int = 192
    max_flow: float = 4.0

    def __post_init__(self):
        if self.image_size % 8 != 0:
            raise ValueError("image_size must be divisible by 8")
        if self.context_frames < 1:
            raise ValueError("context_frames must be >= 1")

    @property
    def base_hw(self) -> int:
        return self.image_size // 8

    @property
    def base_dim(self) -> int:
        return self.enc_channels[1] * self.base_hw * self.base_hw


@dataclass
class PredictorModel:
    config: PredictorConfig
    params: dict  # name -> LayerParams

    def param_list(self) -> list[LayerParams]:
        return [self.params[k] for k in sorted(self.params)]

    def astype(self, dtype) -> "PredictorModel":
        cast = {
            k: LayerParams(p.name, p.w.astype(dtype), p.b.astype(dtype))
            for k, p in self.params.items()
        }
        return PredictorModel(self.config, cast)

    def copy(self) -> "PredictorModel":
        return PredictorModel(self.config, {k: p.copy() for k, p in self.params.items()})


def init_predictor(config: PredictorConfig, seed: int = 0) -> PredictorModel:
    """Scaled-uniform init everywhere; the output head starts at zero so the
    model begins as an identity (zero-flow) predictor."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x9ED1)))
    c1, c2 = config.enc_channels
    h = config.lstm_hidden
    params = {
        "enc1": conv_params(rng, 3 + config.action_dim, c1, 3, name="enc1"),
        "enc2": conv_params(rng, c1, c2, 3, name="enc2"),
        "fc_in": affine_params(rng, config.base_dim, h, name="fc_in"),
        "lstm": lstm_params(rng, h, h, name="lstm"),
        "fc_out": affine_params(rng, h, config.base_dim, name="fc_out"),
        "dec1": conv_params(rng, c2, c1, 3, name="dec1"),
        "dec2": conv_params(rng, c1, c1, 3, name="dec2"),
        "dec3": LayerParams("dec3", np.zeros((4, c1, 3, 3)), np.zeros(4)),
    }
    return PredictorModel(config, params)


@dataclass
class PredictorState:
    h: np.ndarray               # [B, hidden]
    c: np.ndarray               # [B, hidden]
    first_frame: np.ndarray | None   # [B, 3, H, W], compositing source
    prev_pred: np.ndarray | None     # [B, 3, H, W]
    step_index: int = 0


def init_state(model: PredictorModel, batch: int, dtype=np.float64) -> PredictorState:
    h = np.zeros((batch, model.config.lstm_hidden), dtype=dtype)
    return PredictorState(h, h.copy(), None, None, 0)


def _avgpool2x(x: np.ndarray) -> np.ndarray:
    return upsample2x_backward(x) * 0.25


def _avgpool2x_backward(g: np.ndarray) -> np.ndarray:
    return upsample2x_forward(g) * 0.25


def step_forward(model: PredictorModel, state: PredictorState, actions: np.ndarray,
                 true_frame: np.ndarray | None = None):
    """One predictor step over a batch.

    Returns (new_state, predicted_frame, flow, cache). The input frame is
    ``true_frame`` when given, otherwise the previous prediction; below
    ``context_frames`` steps a true frame is mandatory.
    """
    cfg = model.config
    p = model.params
    if true_frame is not None:
        x_in, own_input = true_frame, False
    else:
        if state.step_index < cfg.context_frames:
            raise ValueError(
                f"step {state.step_index} < context_frames {cfg.context_frames}: "
                "a ground-truth frame is required")
        if state.prev_pred is None:
            raise ValueError("no previous prediction available")
        x_in, own_input = state.prev_pred, True
    first = state.first_frame if state.first_frame is not None else x_in

    b, _, hh, ww = x_in.shape
    a = (np.asarray(actions, dtype=x_in.dtype)
         / np.asarray(cfg.action_scale, dtype=x_in.dtype))
    tile = np.broadcast_to(a[:, :, None, None], (b, cfg.action_dim, hh, ww))
    x = np.concatenate([x_in, tile], axis=1)

    e1, c_e1 = conv2d_forward(x, p["enc1"], stride=2, padding=1)
    r1, m1 = relu_forward(e1)
    e2, c_e2 = conv2d_forward(r1, p["enc2"], stride=2, padding=1)
    r2, m2 = relu_forward(e2)
    pooled = _avgpool2x(r2)
    flat = pooled.reshape(b, -1)
    emb, c_fc_in = affine_forward(flat, p["fc_in"])
    r3, m3 = relu_forward(emb)
    h2, c2s, c_lstm = lstm_step_forward(r3, state.h, state.c, p["lstm"])
    d0, c_fc_out = affine_forward(h2, p["fc_out"])
    r4, m4 = relu_forward(d0)
    d1 = r4.reshape(pooled.shape)
    u1 = upsample2x_forward(d1)
    d2, c_d1 = conv2d_forward(u1, p["dec1"], stride=1, padding=1)
    r5, m5 = relu_forward(d2)
    u2 = upsample2x_forward(r5)
    d3, c_d2 = conv2d_forward(u2, p["dec2"], stride=1, padding=1)
    r6, m6 = relu_forward(d3)
    u3 = upsample2x_forward(r6)
    d4, c_d3 = conv2d_forward(u3, p["dec3"], stride=1, padding=1)

    th = np.tanh(d4[:, :2])
    flow = th * cfg.max_flow
    masks, c_sm = channel_softmax_forward(d4[:, 2:4])
    warped, c_warp = bilinear_warp_forward(x_in, flow)
    pred = masks[:, 0:1] * warped + masks[:, 1:2] * first

    if not np.all(np.isfinite(pred)):
        raise FloatingPointError("non-finite activations in predictor step")

    new_state = PredictorState(h2, c2s, first, pred, state.step_index + 1)
    cache = dict(
        own_input=own_input, x_shape=x.shape, c_e1=c_e1, m1=m1, c_e2=c_e2, m2=m2,
        pooled_shape=pooled.shape, c_fc_in=c_fc_in, m3=m3, c_lstm=c_lstm,
        c_fc_out=c_fc_out, m4=m4, c_d1=c_d1, m5=m5, c_d2=c_d2, m6=m6, c_d3=c_d3,
        th=th, c_sm=c_sm, c_warp=c_warp, masks=masks, warped=warped, first=first,
    )
    return new_state, pred, flow, cache


def step_backward(model: PredictorModel, cache: dict, d_pred: np.ndarray,
                  d_h: np.ndarray, d_c: np.ndarray):
    """Backward through one step. Accumulates parameter grads; returns
    (d_input_frame, d_h_prev, d_c_prev). d_input_frame is nonzero only from
    the warp/encoder paths and feeds the previous step when the input was the
    model's own prediction."""
    cfg = model.config
    p = model.params
    masks = cache["masks"]
    warped = cache["warped"]
    first = cache["first"]

    d_m0 = (d_pred * warped).sum(axis=1, keepdims=True)
    d_m1 = (d_pred * first).sum(axis=1, keepdims=True)
    d_warped = d_pred * masks[:, 0:1]
    d_masks = np.concatenate([d_m0, d_m1], axis=1)
    d_mask_logits = channel_softmax_backward(cache["c_sm"], d_masks)
    d_xin_warp, d_flow = bilinear_warp_backward(cache["c_warp"], d_warped)

    th = cache["th"]
    d_d4 = np.concatenate([d_flow * cfg.max_flow * (1.0 - th * th), d_mask_logits], axis=1)

    d_u3 = conv2d_backward(p["dec3"], cache["c_d3"], d_d4)
    d_r6 = upsample2x_backward(d_u3)
    d_d3 = relu_backward(cache["m6"], d_r6)
    d_u2 = conv2d_backward(p["dec2"], cache["c_d2"], d_d3)
    d_r5 = upsample2x_backward(d_u2)
    d_d2 = relu_backward(cache["m5"], d_r5)
    d_u1 = conv2d_backward(p["dec1"], cache["c_d1"], d_d2)
    d_d1 = upsample2x_backward(d_u1)
    d_r4 = d_d1.reshape(d_d1.shape[0], -1)
    d_d0 = relu_backward(cache["m4"], d_r4)
    d_h2 = affine_backward(p["fc_out"], cache["c_fc_out"], d_d0) + d_h
    d_r3, d_h_prev, d_c_prev = lstm_step_backward(p["lstm"], cache["c_lstm"], d_h2, d_c)
    d_emb = relu_backward(cache["m3"], d_r3)
    d_flat = affine_backward(p["fc_in"], cache["c_fc_in"], d_emb)
    d_pooled = d_flat.reshape(cache["pooled_shape"])
    d_r2 = _avgpool2x_backward(d_pooled)
    d_e2 = relu_backward(cache["m2"], d_r2)
    d_r1 = conv2d_backward(p["enc2"], cache["c_e2"], d_e2)
    d_e1 = relu_backward(cache["m1"], d_r1)
    d_x = conv2d_backward(p["enc1"], cache["c_e1"], d_e1)
    d_xin = d_x[:, :3] + d_xin_warp
    return d_xin, d_h_prev, d_c_prev


def predictor_step(model: PredictorModel, state: PredictorState, actions: np.ndarray,
                   true_frame: np.ndarray | None = None):
    """Inference-only step: (new_state, predicted_frame, flow)."""
    new_state, pred, flow, _ = step_forward(model, state, actions, true_frame)
    return new_state, pred, flow
