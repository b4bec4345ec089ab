import numpy as np
import pytest

from gvf.numerics import grad_check
from gvf.predictor import (
    PredictorConfig,
    PredictorTrainConfig,
    init_predictor,
    initial_pixel_distribution,
    predictor_step,
    propagate_pixel_distribution,
    rollout,
    rollout_many,
    train_predictor,
)
from gvf.predictor.model import init_state
from gvf.predictor.train import scheduled_sampling_prob, sequence_loss

TINY = PredictorConfig(image_size=8, enc_channels=(2, 3), lstm_hidden=6)


def random_frames(rng, n, cfg):
    return rng.uniform(0.0, 1.0, size=(n, 3, cfg.image_size, cfg.image_size))


def random_actions(rng, n):
    return rng.uniform(-0.05, 0.05, size=(n, 4))


# ---------------------------------------------------------------------------
# predictor_step


def test_zero_init_decoder_gives_zero_flow_and_blend():
    model = init_predictor(TINY, seed=0)
    rng = np.random.default_rng(0)
    f0, f1 = random_frames(rng, 2, TINY)
    state = init_state(model, 1)
    state, _, flow = predictor_step(model, state, random_actions(rng, 1), f0[None])
    state, pred, flow = predictor_step(model, state, random_actions(rng, 1), f1[None])
    assert np.max(np.abs(flow)) == 0.0
    # masks are uniform at zero logits: blend of (warped) input and first frame
    assert np.allclose(pred[0], 0.5 * f1 + 0.5 * f0, atol=1e-12)


def test_step_requires_context_frame():
    model = init_predictor(TINY, seed=0)
    state = init_state(model, 1)
    with pytest.raises(ValueError):
        predictor_step(model, state, np.zeros((1, 4)), None)


def test_step_deterministic():
    model = init_predictor(TINY, seed=1)
    rng = np.random.default_rng(3)
    f = random_frames(rng, 1, TINY)
    a = random_actions(rng, 1)
    s1, p1, fl1 = predictor_step(model, init_state(model, 1), a, f)
    s2, p2, fl2 = predictor_step(model, init_state(model, 1), a, f)
    assert np.array_equal(p1, p2) and np.array_equal(fl1, fl2)


def test_flow_bound_respected():
    model = init_predictor(TINY, seed=2)
    # blow up the head weights; tanh must still bound the flow
    model.params["dec3"].w[...] = np.random.default_rng(0).normal(0, 10, model.params["dec3"].w.shape)
    rng = np.random.default_rng(4)
    for _ in range(50):
        state = init_state(model, 2)
        _, _, flow = predictor_step(model, state, random_actions(rng, 2), random_frames(rng, 2, TINY))
        assert np.max(np.abs(flow)) <= TINY.max_flow + 1e-12


# ---------------------------------------------------------------------------
# pixel distribution propagation


def test_propagate_identity():
    rng = np.random.default_rng(5)
    pd = rng.uniform(0, 1, (6, 6))
    pd /= pd.sum()
    out = propagate_pixel_distribution(pd, np.zeros((2, 6, 6)))
    assert np.max(np.abs(out - pd)) < 1e-12


def test_propagate_unit_shift():
    # delta at (x=3, y=2); flow +1 in x moves it to (x=2, y=2)
    pd = np.zeros((6, 6))
    pd[2, 3] = 1.0
    flow = np.zeros((2, 6, 6))
    flow[0] = 1.0
    out = propagate_pixel_distribution(pd, flow)
    assert out[2, 2] == pytest.approx(1.0)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_propagate_renormalizes():
    rng = np.random.default_rng(6)
    for _ in range(25):
        pd = rng.uniform(0, 1, (8, 8))
        pd /= pd.sum()
        flow = rng.uniform(-3, 3, (2, 8, 8))
        out = propagate_pixel_distribution(pd, flow)
        assert abs(out.sum() - 1.0) < 1e-6
        assert np.all(out >= 0)


def test_propagate_vanishing_mass_is_error():
    pd = np.zeros((8, 8))
    pd[0, 0] = 1.0
    flow = np.full((2, 8, 8), 5.0)  # nothing samples the corner
    with pytest.raises(ValueError):
        propagate_pixel_distribution(pd, flow)


# ---------------------------------------------------------------------------
# rollout


def test_rollout_h1_single_context_matches_single_step():
    cfg = PredictorConfig(image_size=8, enc_channels=(2, 3), lstm_hidden=6, context_frames=1)
    model = init_predictor(cfg, seed=3)
    model.params["dec3"].w[...] = np.random.default_rng(1).normal(0, 0.3, model.params["dec3"].w.shape)
    rng = np.random.default_rng(7)
    frame = random_frames(rng, 1, cfg)
    act = random_actions(rng, 1)
    r = rollout(model, frame, np.zeros((0, 4)), act[None], [(4, 4)])
    state = init_state(model, 1)
    _, pred, flow = predictor_step(model, state, act, frame)
    assert np.array_equal(r.frames[0, 0], pred[0])
    assert np.array_equal(r.flows[0, 0], flow[0])


def test_rollout_zero_flow_keeps_distribution():
    model = init_predictor(TINY, seed=4)  # zero-init head
    rng = np.random.default_rng(8)
    ctx = random_frames(rng, 2, TINY)
    acts = random_actions(rng, 12).reshape(1, 12, 4)
    r = rollout(model, ctx, np.zeros((1, 4)), acts, [(2, 5)])
    p0 = initial_pixel_distribution([(2, 5)], (8, 8))[0]
    for t in range(12):
        assert np.max(np.abs(r.pixel_dists[0, 0, t] - p0)) < 1e-12


def test_rollout_batch_equals_sequential_bitexact():
    cfg = PredictorConfig(image_size=16, enc_channels=(4, 6), lstm_hidden=12)
    model = init_predictor(cfg, seed=5)
    model.params["dec3"].w[...] = np.random.default_rng(2).normal(0, 0.2, model.params["dec3"].w.shape)
    rng = np.random.default_rng(9)
    ctx = random_frames(rng, 2, cfg)
    acts = rng.uniform(-0.06, 0.06, size=(13, 5, 4))
    batched = rollout_many(model, ctx, np.zeros((1, 4)), acts, [(3, 3)])
    for m in range(13):
        single = rollout_many(model, ctx, np.zeros((1, 4)), acts[m:m + 1], [(3, 3)])
        assert np.array_equal(batched.frames[m], single.frames[0])
        assert np.array_equal(batched.flows[m], single.flows[0])
        assert np.array_equal(batched.pixel_dists[m], single.pixel_dists[0])


def test_rollout_wrong_context_count():
    model = init_predictor(TINY, seed=0)
    rng = np.random.default_rng(10)
    with pytest.raises(ValueError):
        rollout(model, random_frames(rng, 1, TINY), np.zeros((0, 4)),
                np.zeros((1, 3, 4)), [(0, 0)])


# ---------------------------------------------------------------------------
# training objective gradient (2-step rollout) and schedule


def test_training_objective_gradient_vs_fd():
    rng = np.random.default_rng(11)
    model = init_predictor(TINY, seed=6)
    model.params["dec3"].w[...] = rng.normal(0, 0.3, model.params["dec3"].w.shape)
    frames = random_frames(rng, 4, TINY)[None]  # C=2 context + 2 supervised
    actions = random_actions(rng, 3)[None]
    own = np.array([[False, False, True]])  # exercise the feedback path

    def fn():
        return sequence_loss(model, frames, actions, own, "l1")

    report = grad_check(fn, model.param_list(), tol=1e-4)
    assert report.passed, str(report)


def test_scheduled_sampling_endpoints():
    assert scheduled_sampling_prob(0, 100, 0.5) == 0.0
    assert scheduled_sampling_prob(50, 100, 0.5) == 1.0
    assert scheduled_sampling_prob(100, 100, 0.5) == 1.0
    assert 0.0 < scheduled_sampling_prob(25, 100, 0.5) < 1.0


def test_train_predictor_loss_decreases():
    from gvf.sim2d import SimConfig, TaskSpec, collect_random

    sim_cfg = SimConfig(image_size=16)
    trajs = collect_random(TaskSpec(), 6, 13, sim_cfg, length=14)
    mc = PredictorConfig(image_size=16, enc_channels=(4, 6), lstm_hidden=16)
    tc = PredictorTrainConfig(steps=80, batch_size=4, pred_horizon=4,
                              val_every=40, val_horizon=3, seed=1)
    model, hist = train_predictor(trajs, mc, tc)
    losses = hist["loss"]
    first = np.median(losses[: len(losses) // 10])
    last = np.median(losses[-len(losses) // 10:])
    assert last < first
    assert model.config == mc


def test_train_predictor_empty_dataset():
    with pytest.raises(ValueError):
        train_predictor([], TINY, PredictorTrainConfig(steps=1))
