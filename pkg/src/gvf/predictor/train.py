"""Predictor training: L1 reconstruction over BPTT windows with scheduled
sampling ramping from teacher forcing to fully autoregressive inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gvf.numerics import OptimizerState, adam_update
from gvf.predictor.model import (
    PredictorConfig,
    PredictorModel,
    init_predictor,
    init_state,
    step_backward,
    step_forward,
)


@dataclass(frozen=True)
class PredictorTrainConfig:
    steps: int = 4000
    batch_size: int = 8
    pred_horizon: int = 8       # supervised steps after the context
    lr: float = 1e-3
    loss: str = "l1"            # "l1" (default) or "l2"
    sched_ramp_frac: float = 0.5
    val_fraction: float = 0.1
    val_every: int = 250
    val_horizon: int = 5
    grad_clip: float = 5.0
    seed: int = 0


class TrainingDiverged(RuntimeError):
    pass


def scheduled_sampling_prob(step: int, total: int, ramp_frac: float) -> float:
    """Probability of feeding the model its own prediction; 0 at step 0,
    1 from the end of the ramp on."""
    ramp = max(1, int(round(total * ramp_frac)))
    return float(np.clip(step / ramp, 0.0, 1.0))


def _loss_and_grad(pred, target, kind, scale):
    err = pred - target
    if kind == "l1":
        return np.abs(err).sum() * scale, np.sign(err) * scale
    if kind == "l2":
        return (err ** 2).sum() * scale, 2.0 * err * scale
    raise ValueError(f"unknown loss {kind!r}")


def sequence_loss(model: PredictorModel, frames: np.ndarray, actions: np.ndarray,
                  own_mask: np.ndarray, loss_kind: str = "l1",
                  compute_grads: bool = True) -> float:
    """Loss of one BPTT window batch; accumulates param grads when asked.

    frames: [B, C+K+1, 3, h, w]; actions: [B, C+K, 4]; own_mask: [B, C+K]
    booleans choosing the model's own prediction as input (only meaningful
    for steps >= context_frames).
    """
    cfg = model.config
    b, n_frames = frames.shape[:2]
    n_steps = n_frames - 1
    c = cfg.context_frames
    state = init_state(model, b, dtype=frames.dtype)
    caches = []
    inputs_own = []
    preds = []
    scale = 1.0 / ((n_steps - (c - 1)) * b * frames[0, 0].size)

    loss = 0.0
    grads_of_pred = []
    for t in range(n_steps):
        if t < c:
            x_in = frames[:, t]
            own = np.zeros(b, dtype=bool)
        else:
            own = own_mask[:, t]
            x_in = np.where(own[:, None, None, None], state.prev_pred, frames[:, t])
        state, pred, _flow, cache = step_forward(model, state, actions[:, t], true_frame=x_in)
        caches.append(cache)
        inputs_own.append(own)
        preds.append(pred)
        if t >= c - 1:
            step_loss, g = _loss_and_grad(pred, frames[:, t + 1], loss_kind, scale)
            loss += step_loss
            grads_of_pred.append(g)
        else:
            grads_of_pred.append(np.zeros_like(pred))

    if not compute_grads:
        return float(loss)

    d_h = np.zeros_like(state.h)
    d_c = np.zeros_like(state.c)
    d_next_input = None
    for t in reversed(range(n_steps)):
        d_pred = grads_of_pred[t].copy()
        if d_next_input is not None:
            # the next step consumed this prediction for own-input samples
            own = inputs_own[t + 1]
            d_pred += d_next_input * own[:, None, None, None]
        d_next_input, d_h, d_c = step_backward(model, caches[t], d_pred, d_h, d_c)
    return float(loss)


def _clip_grads(params, max_norm: float):
    total = 0.0
    for p in params:
        total += float((p.gw ** 2).sum() + (p.gb ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        s = max_norm / norm
        for p in params:
            p.gw *= s
            p.gb *= s


def _windows(rng, trajs, n, length):
    idx = rng.integers(0, len(trajs), size=n)
    out = []
    for i in idx:
        t = trajs[int(i)]
        start = int(rng.integers(0, len(t.actions) - length + 1))
        out.append((int(i), start))
    return out


def _batch_from_windows(trajs, windows, length):
    frames = np.stack([trajs[i].frames()[s:s + length + 1] for i, s in windows])
    frames = frames.transpose(0, 1, 4, 2, 3)  # [B, T+1, 3, h, w]
    actions = np.stack([trajs[i].actions[s:s + length] for i, s in windows])
    return np.ascontiguousarray(frames), actions


def validation_l1(model: PredictorModel, trajs, horizon: int) -> tuple[float, float]:
    """Autoregressive per-pixel L1 at the given horizon on fixed windows,
    plus the copy-last-context-frame persistence baseline."""
    cfg = model.config
    c = cfg.context_frames
    total = base = 0.0
    count = 0
    for t in trajs:
        frames = np.ascontiguousarray(t.frames().transpose(0, 3, 1, 2))
        actions = t.actions
        start = 0
        if len(actions) < start + c - 1 + horizon:
            continue
        state = init_state(model, 1)
        for i in range(c - 1):
            state, _, _, _ = step_forward(model, state, actions[i][None], frames[i][None])
        pred = None
        for j in range(horizon):
            tstep = c - 1 + j
            true = frames[tstep][None] if j == 0 else None
            state, pred, _, _ = step_forward(model, state, actions[tstep][None], true)
        target = frames[c - 1 + horizon]
        total += float(np.abs(pred[0] - target).mean())
        base += float(np.abs(frames[c - 1] - target).mean())
        count += 1
    if count == 0:
        raise ValueError("no validation sequences long enough")
    return total / count, base / count


def train_predictor(trajectories, model_config: PredictorConfig | None = None,
                    train_config: PredictorTrainConfig | None = None,
                    log_every: int = 0):
    """Train on a mixture of trajectories; returns (best model, history)."""
    if not trajectories:
        raise ValueError("empty dataset")
    mc = model_config or PredictorConfig()
    tc = train_config or PredictorTrainConfig()
    rng = np.random.default_rng(np.random.SeedSequence((tc.seed, 0x9ED7)))
    model = init_predictor(mc, seed=tc.seed)
    params = model.param_list()
    opt = OptimizerState(lr=tc.lr)

    n_val = max(1, int(len(trajectories) * tc.val_fraction))
    order = rng.permutation(len(trajectories))
    val = [trajectories[i] for i in order[:n_val]]
    train = [trajectories[i] for i in order[n_val:]] or val

    length = mc.context_frames + tc.pred_horizon
    history = {"loss": [], "val": [], "val_steps": [], "persistence": None}
    best = (np.inf, model.copy())
    for step_i in range(tc.steps):
        p_own = scheduled_sampling_prob(step_i, tc.steps, tc.sched_ramp_frac)
        windows = _windows(rng, train, tc.batch_size, length)
        frames, actions = _batch_from_windows(train, windows, length)
        own_mask = rng.uniform(size=(tc.batch_size, length)) < p_own
        own_mask[:, :mc.context_frames] = False
        loss = sequence_loss(model, frames, actions, own_mask, tc.loss)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss diverged at step {step_i}")
        _clip_grads(params, tc.grad_clip)
        adam_update(params, opt)
        history["loss"].append(loss)

        if step_i % tc.val_every == 0 or step_i == tc.steps - 1:
            v, baseline = validation_l1(model, val, tc.val_horizon)
            history["val"].append(v)
            history["val_steps"].append(step_i)
            history["persistence"] = baseline
            if v < best[0]:
                best = (v, model.copy())
            if log_every:
                print(f"[predictor] step {step_i:5d} loss {loss:.5f} "
                      f"val@{tc.val_horizon} {v:.5f} (persist {baseline:.5f}) p_own {p_own:.2f}")

    history["best_val"] = best[0]
    return best[1], history
