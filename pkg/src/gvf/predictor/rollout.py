"""Predictor rollouts and designated-pixel distribution propagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gvf.numerics import bilinear_warp
from gvf.predictor.model import PredictorModel, init_state, step_forward

# Inference always evaluates samples in fixed-size chunks so BLAS sees the
# same shapes no matter how callers batch; results are bit-identical whether
# sequences are evaluated one at a time or a hundred at a time.
EVAL_CHUNK = 8


@dataclass
class Rollout:
    frames: np.ndarray       # [M, H, 3, h, w] predicted frames
    flows: np.ndarray        # [M, H, 2, h, w]
    pixel_dists: np.ndarray  # [M, P, H, h, w] float64, each sums to 1

    def horizon(self) -> int:
        return self.frames.shape[1]


def initial_pixel_distribution(designated, hw: tuple) -> np.ndarray:
    """Delta distribution: 1 at each designated (row, col), zero elsewhere."""
    h, w = hw
    out = np.zeros((len(designated), h, w))
    for i, (r, c) in enumerate(designated):
        if not (0 <= r < h and 0 <= c < w):
            raise ValueError(f"designated pixel {(r, c)} outside {hw}")
        out[i, int(r), int(c)] = 1.0
    return out


def propagate_pixel_distribution(pd: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Warp a probability map by the flow field and renormalize.

    Backward warping does not conserve mass, so the result is renormalized;
    vanishing mass (pathologically concentrated flow) is an error.
    """
    squeeze = pd.ndim == 2
    if squeeze:
        pd = pd[None, None]
        flow = flow[None]
    b = pd.shape[0]
    warped = bilinear_warp(pd.astype(np.float64), flow.astype(np.float64))
    sums = warped.sum(axis=(2, 3), keepdims=True)
    if np.any(sums < 1e-9):
        raise ValueError("pixel distribution mass vanished under the flow field")
    out = warped / sums
    return out[0, 0] if squeeze else out


def rollout(model: PredictorModel, context_frames: np.ndarray,
            context_actions: np.ndarray, actions: np.ndarray,
            designated) -> Rollout:
    """Roll out M action sequences from shared context.

    context_frames: [C, 3, h, w] with the last frame being the present;
    context_actions: [C-1, 4], the actions executed between context frames;
    actions: [M, H, 4] candidate futures; designated: list of (row, col).
    """
    cfg = model.config
    context_frames = np.asarray(context_frames)
    actions = np.asarray(actions)
    if context_frames.shape[0] != cfg.context_frames:
        raise ValueError(
            f"expected {cfg.context_frames} context frames, got {context_frames.shape[0]}")
    m, horizon = actions.shape[0], actions.shape[1]
    dtype = model.params["lstm"].w.dtype
    hw = context_frames.shape[-2:]

    state = init_state(model, m, dtype=dtype)
    ctx = np.broadcast_to(
        context_frames[:, None].astype(dtype),
        (cfg.context_frames, m, 3, *hw))
    for i in range(cfg.context_frames - 1):
        a = np.broadcast_to(np.asarray(context_actions[i], dtype=dtype), (m, actions.shape[2]))
        state, _, _, _ = step_forward(model, state, a, true_frame=np.ascontiguousarray(ctx[i]))

    pd = initial_pixel_distribution(designated, hw)[None].repeat(m, axis=0)  # [M,P,h,w]
    frames = np.empty((m, horizon, 3, *hw), dtype=dtype)
    flows = np.empty((m, horizon, 2, *hw), dtype=dtype)
    pdists = np.empty((m, len(designated), horizon, *hw))
    for j in range(horizon):
        true = np.ascontiguousarray(ctx[-1]) if j == 0 else None
        state, pred, flow, _ = step_forward(model, state, actions[:, j].astype(dtype), true)
        frames[:, j] = pred
        flows[:, j] = flow
        pd = propagate_pixel_distribution(pd, flow)
        pdists[:, :, j] = pd
    return Rollout(frames, flows, pdists)


def rollout_many(model: PredictorModel, context_frames: np.ndarray,
                 context_actions: np.ndarray, actions: np.ndarray,
                 designated, chunk: int = EVAL_CHUNK) -> Rollout:
    """Chunked rollout over M sequences, bit-identical to one-at-a-time."""
    actions = np.asarray(actions)
    m = actions.shape[0]
    pieces = []
    for s in range(0, m, chunk):
        block = actions[s:s + chunk]
        if block.shape[0] < chunk:  # pad; padded results are discarded
            pad = np.repeat(block[-1:], chunk - block.shape[0], axis=0)
            padded = np.concatenate([block, pad], axis=0)
            r = rollout(model, context_frames, context_actions, padded, designated)
            pieces.append(Rollout(r.frames[:block.shape[0]], r.flows[:block.shape[0]],
                                  r.pixel_dists[:block.shape[0]]))
        else:
            pieces.append(rollout(model, context_frames, context_actions, block, designated))
    return Rollout(
        np.concatenate([p.frames for p in pieces]),
        np.concatenate([p.flows for p in pieces]),
        np.concatenate([p.pixel_dists for p in pieces]),
    )
