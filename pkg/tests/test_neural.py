import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l2nas.neural import IDENTITY, SIGMOID, AdamState, Mlp, adam_step, check_loss


def fd_grads(net, x, dy, h=1e-6):
    """Central differences of sum(dy * net(x)) w.r.t. every parameter and input."""
    def objective():
        return float(np.sum(dy * net(x)))

    pgrads = []
    for p in net.params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = objective()
            p[idx] = orig - h
            down = objective()
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        pgrads.append(g)
    xg = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = objective()
        x[idx] = orig - h
        down = objective()
        x[idx] = orig
        xg[idx] = (up - down) / (2 * h)
    return pgrads, xg


def rel_err(a, b):
    return np.abs(a - b).max() / max(1.0, np.abs(a).max(), np.abs(b).max())


def test_init_reproducible_and_bounded():
    a = Mlp.init([30, 128, 128, 128, 30], SIGMOID, np.random.default_rng(0))
    b = Mlp.init([30, 128, 128, 128, 30], SIGMOID, np.random.default_rng(0))
    np.testing.assert_array_equal(a.flat, b.flat)
    assert a.dims == [30, 128, 128, 128, 30]
    for w in a.weights:
        bound = 1 / math.sqrt(w.shape[0])
        assert np.abs(w).max() <= bound
    assert all((bb == 0).all() for bb in a.biases)


def test_init_requires_three_hidden_layers():
    with pytest.raises(ValueError):
        Mlp.init([4, 8, 4], SIGMOID, np.random.default_rng(0))


def test_zero_weight_outputs():
    rng = np.random.default_rng(0)
    for act, expected in ((SIGMOID, 0.5), (IDENTITY, 0.0)):
        net = Mlp.init([3, 4, 4, 4, 2], act, rng)
        net.flat[:] = 0
        np.testing.assert_array_equal(net(rng.random((5, 3))), expected)


def test_one_unit_net_by_hand():
    # 1-1-1-1-1: y = sigmoid(w4 * relu(w3 * relu(w2 * relu(w1*x + b1) + b2) + b3) + b4)
    net = Mlp([np.array([[2.0]]), np.array([[-1.0]]), np.array([[3.0]]), np.array([[0.5]])],
              [np.array([0.1]), np.array([1.0]), np.array([-0.2]), np.array([0.3])], SIGMOID)
    x = 0.4
    h1 = max(2.0 * x + 0.1, 0)  # 0.9
    h2 = max(-1.0 * h1 + 1.0, 0)  # 0.1
    h3 = max(3.0 * h2 - 0.2, 0)  # 0.1
    y = 1 / (1 + math.exp(-(0.5 * h3 + 0.3)))
    assert net(np.array([[x]]))[0, 0] == pytest.approx(y, rel=1e-14)


def test_width_mismatch():
    net = Mlp.init([3, 4, 4, 4, 2], SIGMOID, np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 4)))


def test_sigmoid_extreme_logits_without_overflow():
    net = Mlp([np.zeros((1, 1))] * 3 + [np.array([[1.0]])],
              [np.zeros(1), np.zeros(1), np.array([800.0]), np.zeros(1)], SIGMOID)
    with np.errstate(over="raise", invalid="raise"):
        assert net(np.zeros((1, 1)))[0, 0] == 1.0
        net.biases[2][0] = 0.0
        net.biases[3][0] = -700.0
        y = net(np.zeros((1, 1)))[0, 0]
    assert 0 < y < 1e-300


@pytest.mark.parametrize("act", [SIGMOID, IDENTITY])
def test_backward_matches_finite_differences(act):
    rng = np.random.default_rng(1)
    net = Mlp.init([8, 10, 9, 8, 8 if act == SIGMOID else 1], act, rng)
    for b in net.biases:
        b[:] = rng.normal(0, 0.1, size=b.shape)
    x = rng.random((4, 8))
    dy = rng.normal(size=(4, net.dims[-1]))
    _, cache = net.forward(x)
    grads, dx = net.backward(cache, dy)
    fgrads, fdx = fd_grads(net, x, dy)
    for g, f in zip(grads, fgrads):
        assert rel_err(g, f) < 1e-4
    assert rel_err(dx, fdx) < 1e-4


def test_backward_zero_and_linearity():
    rng = np.random.default_rng(2)
    net = Mlp.init([5, 6, 6, 6, 3], SIGMOID, rng)
    x = rng.random((3, 5))
    _, cache = net.forward(x)
    grads, dx = net.backward(cache, np.zeros((3, 3)))
    assert all((g == 0).all() for g in grads) and (dx == 0).all()
    dy = rng.normal(size=(3, 3))
    g1, dx1 = net.backward(cache, dy)
    g2, dx2 = net.backward(cache, 2 * dy)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(b, 2 * a, rtol=1e-15, atol=0)
    np.testing.assert_allclose(dx2, 2 * dx1, rtol=1e-15, atol=0)


def test_backward_shape_mismatch():
    net = Mlp.init([3, 4, 4, 4, 2], SIGMOID, np.random.default_rng(0))
    _, cache = net.forward(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        net.backward(cache, np.zeros((2, 3)))


def test_relu_subgradient_at_zero():
    # pre-activation exactly 0 in the first hidden unit -> no gradient through it
    net = Mlp([np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]])],
              [np.zeros(1)] * 4, IDENTITY)
    _, cache = net.forward(np.array([[0.0]]))
    grads, dx = net.backward(cache, np.ones((1, 1)))
    assert dx[0, 0] == 0.0
    assert grads[0][0, 0] == 0.0


def test_flat_views_share_memory():
    net = Mlp.init([3, 4, 4, 4, 2], SIGMOID, np.random.default_rng(0))
    net.flat[:] = 1.5
    assert all((w == 1.5).all() for w in net.weights)
    gflat, _ = net.backward_flat(net.forward(np.ones((1, 3)))[1], np.ones((1, 2)))
    grads, _ = net.backward(net.forward(np.ones((1, 3)))[1], np.ones((1, 2)))
    np.testing.assert_array_equal(gflat, np.concatenate([g.ravel() for g in grads]))


def test_serialisation_round_trip():
    net = Mlp.init([3, 4, 4, 4, 2], SIGMOID, np.random.default_rng(0))
    back = Mlp.from_dict(net.to_dict())
    np.testing.assert_array_equal(back.flat, net.flat)
    assert back.out_act == SIGMOID


# --- adam -------------------------------------------------------------------------


def test_adam_first_step_by_hand():
    theta = [np.array([0.0])]
    st_ = AdamState.zeros_like(theta, lr=0.1)
    adam_step(theta, [np.array([1.0])], st_)
    # m_hat = v_hat = 1
    assert theta[0][0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-15)
    assert st_.t == 1


def test_adam_zero_grad_noop():
    theta = [np.array([0.7, -0.2])]
    st_ = AdamState.zeros_like(theta, lr=0.1)
    adam_step(theta, [np.zeros(2)], st_)
    np.testing.assert_array_equal(theta[0], [0.7, -0.2])


def test_adam_monotone_with_constant_grad():
    theta = [np.array([0.0])]
    st_ = AdamState.zeros_like(theta, lr=0.01)
    seen = [0.0]
    for _ in range(5):
        adam_step(theta, [np.array([2.0])], st_)
        seen.append(theta[0][0])
    assert all(b < a for a, b in zip(seen, seen[1:]))


def test_adam_betas_default():
    st_ = AdamState.zeros_like([np.zeros(1)], lr=1e-4)
    assert (st_.beta1, st_.beta2, st_.eps) == (0.9, 0.99, 1e-8)


# --- check loss ---------------------------------------------------------------------


def test_check_loss_examples():
    assert check_loss(1.0, 0.0, 0.9) == pytest.approx((0.9, -0.9))
    loss, d = check_loss(-1.0, 0.0, 0.9)
    assert loss == pytest.approx(0.1) and d == pytest.approx(0.1)
    assert check_loss(0.3, 0.3, 0.9) == (0.0, pytest.approx(0.1))


def test_check_loss_rejects_bad_tau():
    for tau in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            check_loss(0, 0, tau)


@settings(max_examples=200, deadline=None)
@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100), st.floats(0.01, 0.99))
def test_check_loss_nonneg_and_convex(r, q1, q2, tau):
    l1, _ = check_loss(r, q1, tau)
    l2, _ = check_loss(r, q2, tau)
    lm, _ = check_loss(r, (q1 + q2) / 2, tau)
    assert l1 >= 0 and l2 >= 0
    assert lm <= 0.5 * (l1 + l2) + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.01, 0.99))
def test_check_loss_derivative_matches_fd(r, q, tau):
    if abs(r - q) < 1e-3:
        return
    _, d = check_loss(r, q, tau)
    h = 1e-6
    fd = (check_loss(r, q + h, tau)[0] - check_loss(r, q - h, tau)[0]) / (2 * h)
    assert d == pytest.approx(fd, abs=1e-6)


def golden_section(f, lo, hi, iters=200):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    for _ in range(iters):
        if f(c) < f(d):
            b = d
        else:
            a = c
        c, d = b - g * (b - a), a + g * (b - a)
    return (a + b) / 2


@pytest.mark.parametrize("tau", [0.5, 0.9, 0.95])
def test_check_loss_minimiser_is_quantile(tau):
    rng = np.random.default_rng(int(tau * 100))
    sample = np.sort(rng.normal(size=1000))
    c = golden_section(lambda c: check_loss(sample, c, tau)[0].mean(), sample[0], sample[-1])
    # any minimiser lies between the ceil(n tau)-th order statistic and its neighbour
    k = math.ceil(1000 * tau) - 1
    assert sample[k - 1] - 1e-9 <= c <= sample[k + 1] + 1e-9
