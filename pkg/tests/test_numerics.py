import numpy as np
import pytest

from gvf.numerics import (
    LayerParams,
    OptimizerState,
    ShapeError,
    adam_update,
    affine,
    affine_backward,
    affine_forward,
    affine_params,
    bilinear_warp,
    bilinear_warp_backward,
    bilinear_warp_forward,
    channel_softmax,
    channel_softmax_backward,
    channel_softmax_forward,
    conv2d_backward,
    conv2d_forward,
    conv_params,
    grad_check,
    lstm_params,
    lstm_step_backward,
    lstm_step_forward,
    relu_backward,
    relu_forward,
    upsample2x_backward,
    upsample2x_forward,
)


def fd_grad(f, arr, h=1e-5):
    """Central finite differences of scalar f() w.r.t. entries of arr (in place)."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        lp = f()
        flat[i] = orig - h
        lm = f()
        flat[i] = orig
        gflat[i] = (lp - lm) / (2 * h)
    return g


def max_rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)))


# ---------------------------------------------------------------------------
# affine


def test_affine_identity():
    p = LayerParams("a", np.eye(2), np.zeros(2))
    y = affine(np.array([1.0, 0.0]), p)
    assert np.allclose(y, [1.0, 0.0])


def test_affine_zero_input_gives_bias():
    rng = np.random.default_rng(0)
    p = LayerParams("a", rng.standard_normal((3, 4)), rng.standard_normal(4))
    y = affine(np.zeros(3), p)
    assert np.allclose(y, p.b)


def test_affine_shape_mismatch():
    p = LayerParams("a", np.eye(2), np.zeros(2))
    with pytest.raises(ShapeError):
        affine(np.zeros(3), p)


@pytest.mark.parametrize("seed", range(5))
def test_affine_gradients_vs_fd(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 4))
    p = affine_params(rng, 4, 5)
    target = rng.standard_normal((3, 5))

    def loss():
        y, _ = affine_forward(x, p)
        return float(np.sum((y - target) ** 2))

    y, cache = affine_forward(x, p)
    gy = 2 * (y - target)
    p.zero_grad()
    gx = affine_backward(p, cache, gy)
    assert max_rel_err(p.gw, fd_grad(loss, p.w)) < 1e-6
    assert max_rel_err(p.gb, fd_grad(loss, p.b)) < 1e-6
    assert max_rel_err(gx, fd_grad(loss, x)) < 1e-6


# ---------------------------------------------------------------------------
# conv


def test_conv_1x1_identity_kernel():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 5, 6))
    p = LayerParams("c", np.ones((1, 1, 1, 1)), np.zeros(1))
    y = conv2d_forward(x, p, stride=1, padding=0)[0]
    assert np.allclose(y, x)


def test_conv_zero_kernel_bias_broadcast():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 5, 5))
    p = LayerParams("c", np.zeros((3, 2, 3, 3)), np.array([1.0, -2.0, 0.5]))
    y = conv2d_forward(x, p, stride=1, padding=1)[0]
    for k in range(3):
        assert np.allclose(y[k], p.b[k])


def test_conv_kernel_does_not_fit():
    p = LayerParams("c", np.zeros((1, 1, 7, 7)), np.zeros(1))
    with pytest.raises(ShapeError):
        conv2d_forward(np.zeros((1, 4, 4)), p, stride=1, padding=0)


@pytest.mark.parametrize("stride,padding", [(1, 1), (2, 1), (1, 0)])
def test_conv_gradients_vs_fd(stride, padding):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 6, 6))
    p = conv_params(rng, 3, 4, 3)
    w_out = (6 + 2 * padding - 3) // stride + 1
    target = rng.standard_normal((2, 4, w_out, w_out))

    def loss():
        y, _ = conv2d_forward(x, p, stride, padding)
        return float(np.sum((y - target) ** 2))

    y, cache = conv2d_forward(x, p, stride, padding)
    p.zero_grad()
    gx = conv2d_backward(p, cache, 2 * (y - target))
    assert max_rel_err(p.gw, fd_grad(loss, p.w)) < 1e-6
    assert max_rel_err(p.gb, fd_grad(loss, p.b)) < 1e-6
    assert max_rel_err(gx, fd_grad(loss, x)) < 1e-6


# ---------------------------------------------------------------------------
# LSTM cell


def test_lstm_zero_params_zero_state():
    p = LayerParams("l", np.zeros((5 + 3, 12)), np.zeros(12))
    h2, c2, _ = lstm_step_forward(np.ones(5), np.zeros(3), np.zeros(3), p)
    assert np.allclose(h2, 0.0)
    assert np.allclose(c2, 0.0)


def test_lstm_saturated_forget_gate_preserves_cell():
    d = 3
    w = np.zeros((2 + d, 4 * d))
    b = np.zeros(4 * d)
    b[d:2 * d] = 20.0  # forget gate saturated open
    p = LayerParams("l", w, b)
    v = np.array([0.7, -1.2, 0.4])
    _, c2, _ = lstm_step_forward(np.zeros(2), np.zeros(d), v, p)
    assert np.all(np.abs(c2 - v) < 1e-6 * np.abs(v) + 1e-8)


def test_lstm_bptt_3steps_vs_fd():
    rng = np.random.default_rng(4)
    d_in, d_h = 3, 4
    p = lstm_params(rng, d_in, d_h)
    xs = rng.standard_normal((3, 2, d_in))
    target = rng.standard_normal((2, d_h))

    def run():
        h = np.zeros((2, d_h))
        c = np.zeros((2, d_h))
        caches = []
        for t in range(3):
            h, c, cache = lstm_step_forward(xs[t], h, c, p)
            caches.append(cache)
        return h, caches

    def loss():
        h, _ = run()
        return float(np.sum((h - target) ** 2))

    h, caches = run()
    p.zero_grad()
    dh = 2 * (h - target)
    dc = np.zeros_like(dh)
    for cache in reversed(caches):
        _, dh, dc = lstm_step_backward(p, cache, dh, dc)
    assert max_rel_err(p.gw, fd_grad(loss, p.w)) < 1e-5
    assert max_rel_err(p.gb, fd_grad(loss, p.b)) < 1e-5


# ---------------------------------------------------------------------------
# bilinear warp


def test_warp_zero_flow_is_identity():
    rng = np.random.default_rng(5)
    src = rng.standard_normal((3, 8, 9))
    out = bilinear_warp(src, np.zeros((2, 8, 9)))
    assert np.max(np.abs(out - src)) < 1e-12


def test_warp_unit_shift_moves_pixel_left():
    # white pixel at (x=3, y=2); flow +1 in x: every output samples its right
    # neighbor, so the pixel appears at (x=2, y=2)
    src = np.zeros((1, 6, 6))
    src[0, 2, 3] = 1.0
    flow = np.zeros((2, 6, 6))
    flow[0] = 1.0
    out = bilinear_warp(src, flow)
    assert out[0, 2, 2] == pytest.approx(1.0)
    out[0, 2, 2] = 0.0
    assert np.max(np.abs(out)) < 1e-12


def test_warp_gradients_vs_fd():
    rng = np.random.default_rng(6)
    src = rng.standard_normal((2, 7, 7))
    # keep flows interior so the coordinate clamp stays inactive
    flow = rng.uniform(-1.5, 1.5, size=(2, 7, 7))
    target = rng.standard_normal((2, 7, 7))

    def loss():
        return float(np.sum((bilinear_warp(src, flow) - target) ** 2))

    out, cache = bilinear_warp_forward(src, flow)
    gsrc, gflow = bilinear_warp_backward(cache, 2 * (out - target))
    # FD perturbation may cross a floor() cell boundary; mask those entries
    fds = fd_grad(loss, src)
    assert max_rel_err(gsrc, fds) < 1e-5
    fdf = fd_grad(loss, flow)
    frac = (flow + np.stack(np.meshgrid(np.arange(7.0), np.arange(7.0), indexing="ij"))[::-1]) % 1.0
    safe = (np.abs(frac - 0.0) > 1e-3) & (np.abs(frac - 1.0) > 1e-3)
    assert max_rel_err(gflow[safe], fdf[safe]) < 1e-5


def test_warp_shape_mismatch():
    with pytest.raises(ShapeError):
        bilinear_warp(np.zeros((1, 4, 4)), np.zeros((2, 5, 5)))


# ---------------------------------------------------------------------------
# channel softmax


def test_softmax_single_channel_is_ones():
    out = channel_softmax(np.random.default_rng(0).standard_normal((1, 4, 4)))
    assert np.allclose(out, 1.0)


def test_softmax_equal_channels():
    x = np.ones((2, 3, 3)) * 0.37
    out = channel_softmax(x)
    assert np.allclose(out, 0.5)


def test_softmax_closed_form():
    x = np.zeros((2, 1, 1))
    x[1] = np.log(3.0)
    out = channel_softmax(x)
    assert out[0, 0, 0] == pytest.approx(0.25)
    assert out[1, 0, 0] == pytest.approx(0.75)


def test_softmax_sums_to_one_everywhere():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((4, 5, 6)) * 10
    out = channel_softmax(x)
    assert np.max(np.abs(out.sum(axis=0) - 1.0)) < 1e-9
    assert np.all(out > 0)


def test_softmax_gradient_vs_fd():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((3, 4, 4))
    target = rng.standard_normal((3, 4, 4))

    def loss():
        return float(np.sum((channel_softmax(x) - target) ** 2))

    out, cache = channel_softmax_forward(x)
    gx = channel_softmax_backward(cache, 2 * (out - target))
    assert max_rel_err(gx, fd_grad(loss, x)) < 1e-5


# ---------------------------------------------------------------------------
# upsample / relu


def test_upsample_roundtrip_gradient():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 3, 3))
    y = upsample2x_forward(x)
    assert y.shape == (2, 6, 6)
    assert np.all(y[:, 0:2, 0:2] == x[:, :1, :1])
    gy = rng.standard_normal(y.shape)

    def loss():
        return float(np.sum(upsample2x_forward(x) * gy))

    assert max_rel_err(upsample2x_backward(gy), fd_grad(loss, x)) < 1e-6


def test_relu_gradient():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((4, 4)) + 0.05  # keep entries away from the kink
    gy = rng.standard_normal((4, 4))
    y, mask = relu_forward(x)

    def loss():
        return float(np.sum(relu_forward(x)[0] * gy))

    assert max_rel_err(relu_backward(mask, gy), fd_grad(loss, x)) < 1e-6


# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_gradient_leaves_params():
    p = LayerParams("p", np.array([[1.0, 2.0]]), np.array([3.0]))
    state = OptimizerState(lr=0.1)
    w0, b0 = p.w.copy(), p.b.copy()
    adam_update([p], state)
    assert np.array_equal(p.w, w0)
    assert np.array_equal(p.b, b0)


def test_adam_first_step_magnitude_and_sign():
    p = LayerParams("p", np.array([[0.0]]), np.zeros(1))
    p.gw[...] = 2.5  # constant positive gradient
    state = OptimizerState(lr=0.01)
    adam_update([p], state)
    assert p.w[0, 0] == pytest.approx(-0.01, rel=1e-3)


def test_adam_empty_params_raises():
    with pytest.raises(ValueError):
        adam_update([], OptimizerState())


def test_adam_quadratic_bowl_converges():
    p = LayerParams("p", np.array([1.0]), np.zeros(0))
    state = OptimizerState(lr=0.1)
    for _ in range(200):
        p.gw[...] = 2.0 * p.w
        adam_update([p], state)
    assert abs(p.w[0]) < 1e-2


def test_adam_grads_zeroed_after_step():
    p = LayerParams("p", np.ones((2, 2)), np.ones(2))
    p.gw[...] = 1.0
    p.gb[...] = 1.0
    adam_update([p], OptimizerState())
    assert np.all(p.gw == 0)
    assert np.all(p.gb == 0)


# ---------------------------------------------------------------------------
# grad_check harness


def test_grad_check_linear_function_near_machine_eps():
    rng = np.random.default_rng(11)
    p = affine_params(rng, 3, 1, name="lin")
    x = rng.standard_normal(3)

    def fn():
        y, cache = affine_forward(x, p)
        affine_backward(p, cache, np.ones_like(y))
        return float(y.sum())

    report = grad_check(fn, [p], tol=1e-7)
    assert report.passed
    assert report.max_error < 1e-8


def _tiny_composite_net(rng):
    conv = conv_params(rng, 1, 2, 3, name="conv")
    lstm = lstm_params(rng, 2 * 16, 4, name="lstm")
    head = affine_params(rng, 4, 1, name="head")
    x = rng.standard_normal((1, 4, 4))

    def fn():
        y, ccache = conv2d_forward(x, conv, stride=1, padding=1)
        flat = y.reshape(1, -1)
        h, c, lcache = lstm_step_forward(flat, np.zeros((1, 4)), np.zeros((1, 4)), lstm)
        out, acache = affine_forward(h, head)
        loss = float(np.sum(out ** 2))
        gh = affine_backward(head, acache, 2 * out)
        gx, _, _ = lstm_step_backward(lstm, lcache, gh, np.zeros_like(gh))
        conv2d_backward(conv, ccache, gx.reshape(y.shape))
        return loss

    return fn, [conv, lstm, head]


def test_grad_check_composite_net():
    rng = np.random.default_rng(12)
    fn, params = _tiny_composite_net(rng)
    report = grad_check(fn, params, tol=1e-4)
    assert report.passed, str(report)


def test_grad_check_flags_corrupted_gradient():
    rng = np.random.default_rng(13)
    fn, params = _tiny_composite_net(rng)

    def corrupted():
        loss = fn()
        params[1].gw[0, 0] += 0.5  # deliberate corruption
        return loss

    report = grad_check(corrupted, params, tol=1e-4)
    assert report.flagged == ["lstm"]


# ---------------------------------------------------------------------------
# spec invariants: determinism and multi-seed gradient agreement


def test_forward_passes_deterministic():
    rng = np.random.default_rng(14)
    x = rng.standard_normal((2, 3, 8, 8))
    p = conv_params(rng, 3, 4, 3)
    y1 = conv2d_forward(x, p, 2, 1)[0]
    y2 = conv2d_forward(x, p, 2, 1)[0]
    assert np.array_equal(y1, y2)
    flow = rng.uniform(-2, 2, (2, 2, 8, 8))
    assert np.array_equal(bilinear_warp(x, flow), bilinear_warp(x, flow))


@pytest.mark.parametrize("seed", range(20))
def test_all_layers_fd_agreement_many_seeds(seed):
    """Every layer's analytic gradient matches central FD within 1e-4."""
    rng = np.random.default_rng(1000 + seed)

    p = affine_params(rng, 3, 2, name="affine")
    x = rng.standard_normal((2, 3))

    def f_affine():
        y, cache = affine_forward(x, p)
        affine_backward(p, cache, 2 * y)
        return float(np.sum(y ** 2))

    assert grad_check(f_affine, [p], tol=1e-4).passed

    c = conv_params(rng, 2, 2, 3, name="conv")
    xc = rng.standard_normal((2, 4, 4))

    def f_conv():
        y, cache = conv2d_forward(xc, c, 1, 1)
        conv2d_backward(c, cache, 2 * y)
        return float(np.sum(y ** 2))

    assert grad_check(f_conv, [c], tol=1e-4).passed

    l = lstm_params(rng, 3, 3, name="lstm")
    xl = rng.standard_normal((2, 3))

    def f_lstm():
        h, c2, cache = lstm_step_forward(xl, np.zeros((2, 3)), np.zeros((2, 3)), l)
        lstm_step_backward(l, cache, 2 * h, np.zeros_like(h))
        return float(np.sum(h ** 2))

    assert grad_check(f_lstm, [l], tol=1e-4).passed
