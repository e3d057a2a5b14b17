"""Finite-difference verification of every differentiable block.

Central differences at 64-bit on randomized small shapes, compared against
the hand-written backward passes. The conv forward additionally gets an
independent oracle from scipy.signal.correlate2d.
"""

import numpy as np
import pytest
from scipy.signal import correlate2d

from twinsim.policy.nn import (
    Conv2d,
    GlobalAvgPool,
    Linear,
    Tanh,
    flat_grads,
    flat_params,
    mse_loss,
    set_flat_params,
    zero_grads,
)
from twinsim.policy.model import (
    ImageEncoder,
    Policy,
    VelocityFieldNet,
    cfm_loss,
    tau_embedding,
)

EPS = 1e-6
TOL = 1e-4


def max_rel_err(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    den = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
    return float((np.abs(a - n) / den).max())


def central_diff(f, arr):
    """d f / d arr by central differences, mutating arr entries in place."""
    g = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + EPS
        hi = f()
        flat[i] = keep - EPS
        lo = f()
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * EPS)
    return g


def probe(rng, shape):
    """Fixed random projection turning a block output into a scalar."""
    r = rng.standard_normal(shape)
    return r, lambda y: float(np.sum(y * r))


def test_linear_grads_match_central_differences():
    rng = np.random.default_rng(0)
    lin = Linear(4, 3, rng)
    x = rng.standard_normal((5, 4))
    r, scal = probe(rng, (5, 3))

    y = lin.forward(x)
    dx = lin.backward(r)
    f = lambda: scal(lin.forward(x))
    assert max_rel_err(lin.gW, central_diff(f, lin.W)) < TOL
    assert max_rel_err(lin.gb, central_diff(f, lin.b)) < TOL
    assert max_rel_err(dx, central_diff(f, x)) < TOL
    assert y.shape == (5, 3)


def test_tanh_grads_match_central_differences():
    rng = np.random.default_rng(1)
    act = Tanh()
    x = rng.standard_normal((4, 6))
    r, scal = probe(rng, (4, 6))

    act.forward(x)
    dx = act.backward(r)
    assert max_rel_err(dx, central_diff(lambda: scal(act.forward(x)), x)) < TOL


def test_conv_grads_match_central_differences():
    rng = np.random.default_rng(2)
    conv = Conv2d(2, 3, rng)
    x = rng.standard_normal((2, 2, 6, 5))
    y = conv.forward(x)
    assert y.shape == (2, 3, 3, 3)
    r, scal = probe(rng, y.shape)

    zero_grads(conv)
    conv.forward(x)
    dx = conv.backward(r)
    f = lambda: scal(conv.forward(x))
    assert max_rel_err(conv.gW, central_diff(f, conv.W)) < TOL
    assert max_rel_err(conv.gb, central_diff(f, conv.b)) < TOL
    assert max_rel_err(dx, central_diff(f, x)) < TOL


def test_conv_forward_matches_scipy_correlate():
    rng = np.random.default_rng(3)
    conv = Conv2d(3, 4, rng)
    x = rng.standard_normal((2, 3, 8, 8))
    y = conv.forward(x)

    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    for b in range(2):
        for o in range(4):
            acc = sum(
                correlate2d(xp[b, c], conv.W[o, c], mode="valid")
                for c in range(3)
            )
            expected = acc[::2, ::2] + conv.b[o]
            np.testing.assert_allclose(y[b, o], expected, rtol=0, atol=1e-12)


def test_global_avg_pool_grads_match_central_differences():
    rng = np.random.default_rng(4)
    pool = GlobalAvgPool()
    x = rng.standard_normal((3, 2, 4, 5))
    r, scal = probe(rng, (3, 2))

    pool.forward(x)
    dx = pool.backward(r)
    assert max_rel_err(dx, central_diff(lambda: scal(pool.forward(x)), x)) < TOL


def test_mse_loss_grad_matches_central_differences():
    rng = np.random.default_rng(5)
    pred = rng.standard_normal((6, 7))
    target = rng.standard_normal((6, 7))

    _, dpred = mse_loss(pred, target)
    num = central_diff(lambda: mse_loss(pred, target)[0], pred)
    assert max_rel_err(dpred, num) < TOL


def test_velocity_net_input_jacobian_matches_central_differences():
    # forward-pass JVP check: perturbing trajectory and observation inputs
    rng = np.random.default_rng(6)
    net = VelocityFieldNet(m=2, d=1, obs_dim=3, rng=rng, hidden=(5,))
    set_flat_params(net, rng.standard_normal(flat_params(net).size) * 0.3)
    A = rng.standard_normal((3, net.flat_dim))
    obs = rng.standard_normal((3, 3))
    tau = rng.uniform(0.0, 1.0, 3)
    r, scal = probe(rng, (3, net.flat_dim))

    net.forward(A, tau, obs)
    dx = net.backward(r)
    dA = dx[:, : net.flat_dim]
    dobs = dx[:, net.flat_dim + 16 :]
    f = lambda: scal(net.forward(A, tau, obs))
    assert max_rel_err(dA, central_diff(f, A)) < TOL
    assert max_rel_err(dobs, central_diff(f, obs)) < TOL


def _perturbed(policy, rng):
    # fresh nets have a zero output layer, which would zero every upstream
    # gradient; randomize so the check exercises all parameters
    theta = flat_params(policy)
    set_flat_params(policy, theta + 0.2 * rng.standard_normal(theta.size))
    return policy


def test_cfm_loss_grads_match_central_differences_state_kind():
    rng = np.random.default_rng(7)
    net = VelocityFieldNet(m=2, d=1, obs_dim=8, rng=rng, hidden=(6,))
    policy = _perturbed(Policy("state", net), rng)
    obs = rng.standard_normal((3, 8))
    tgt = rng.standard_normal((3, net.flat_dim))

    _, grad = cfm_loss(policy, obs, tgt, seed=77)

    theta = flat_params(policy)
    assert theta.size == grad.size
    num = np.zeros_like(theta)
    for i in range(theta.size):
        keep = theta[i]
        theta[i] = keep + EPS
        set_flat_params(policy, theta)
        hi = cfm_loss(policy, obs, tgt, seed=77)[0]
        theta[i] = keep - EPS
        set_flat_params(policy, theta)
        lo = cfm_loss(policy, obs, tgt, seed=77)[0]
        theta[i] = keep
        num[i] = (hi - lo) / (2.0 * EPS)
    set_flat_params(policy, theta)
    assert max_rel_err(grad, num) < TOL


def test_cfm_loss_grads_match_central_differences_camera_kind():
    # joint check through the conv encoder: gradients must flow from the
    # loss through the velocity net into conv weights
    rng = np.random.default_rng(8)
    enc = ImageEncoder(rng, channels=(2, 3), feat_dim=4)
    net = VelocityFieldNet(m=2, d=1, obs_dim=1 + 4, rng=rng, hidden=(5,))
    policy = _perturbed(Policy("static-cam", net, enc), rng)
    q = rng.standard_normal((2, 1))
    images = rng.uniform(0.0, 1.0, (2, 3, 8, 8))
    tgt = rng.standard_normal((2, net.flat_dim))
    obs = (q, images)

    _, grad = cfm_loss(policy, obs, tgt, seed=13)

    theta = flat_params(policy)
    num = np.zeros_like(theta)
    for i in range(theta.size):
        keep = theta[i]
        theta[i] = keep + EPS
        set_flat_params(policy, theta)
        hi = cfm_loss(policy, obs, tgt, seed=13)[0]
        theta[i] = keep - EPS
        set_flat_params(policy, theta)
        lo = cfm_loss(policy, obs, tgt, seed=13)[0]
        theta[i] = keep
        num[i] = (hi - lo) / (2.0 * EPS)
    set_flat_params(policy, theta)
    enc_grad_norm = float(np.abs(grad[-sum(a.size for a in enc.param_arrays()):]).max())
    assert enc_grad_norm > 0.0
    assert max_rel_err(grad, num) < TOL


def test_tau_embedding_values():
    emb = tau_embedding([0.0, 0.25])
    assert emb.shape == (2, 16)
    np.testing.assert_allclose(emb[0, :8], 0.0, atol=1e-15)
    np.testing.assert_allclose(emb[0, 8:], 1.0, atol=1e-15)
    freqs = np.pi * 2.0 ** np.arange(8)
    np.testing.assert_allclose(emb[1, :8], np.sin(0.25 * freqs), atol=1e-15)
    np.testing.assert_allclose(emb[1, 8:], np.cos(0.25 * freqs), atol=1e-15)
