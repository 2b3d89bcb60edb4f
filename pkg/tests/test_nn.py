import math

import numpy as np
import pytest
from scipy import stats

from uavppo import nn
from uavppo.nn import Adam, Mlp


def finite_diff(f, params, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of every array in ``params``."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = f()
            p[i] = old - h
            down = f()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def assert_grads_close(analytic, numeric, tol=1e-4):
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        rel = np.abs(a - n) / denom
        assert rel.max() <= tol, rel.max()


def random_net(rng, sizes=(4, 6, 3), hidden="tanh", out="linear"):
    net = Mlp.build(sizes, rng, hidden_act=hidden, out_act=out)
    for b in net.biases:
        b[:] = rng.normal(0, 0.3, b.shape)
    return net


def test_forward_zero_net():
    net = Mlp([np.zeros((3, 2)), np.zeros((2, 3))], [np.zeros(3), np.zeros(2)], ["linear", "linear"])
    np.testing.assert_array_equal(net.forward([1.0, -2.0]), [0.0, 0.0])


def test_forward_identity():
    net = Mlp([np.eye(3)], [np.zeros(3)], ["linear"])
    x = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(net.forward(x), x)


def test_forward_deterministic_and_batched(rng):
    net = random_net(rng)
    x = rng.normal(size=(5, 4))
    np.testing.assert_array_equal(net.forward(x), net.forward(x))
    np.testing.assert_allclose(net.forward(x)[2], net.forward(x[2]))


def test_forward_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        random_net(rng).forward(np.ones(5))


def test_layer_chain_validation():
    with pytest.raises(ValueError):
        Mlp([np.zeros((3, 2)), np.zeros((2, 4))], [np.zeros(3), np.zeros(2)], ["tanh", "linear"])
    with pytest.raises(ValueError):
        Mlp([np.zeros((3, 2))], [np.zeros(3)], ["sigmoid"])


def test_backward_requires_forward(rng):
    with pytest.raises(RuntimeError):
        random_net(rng).backward(np.ones(3))


def test_backward_linear_scalar():
    net = Mlp([np.array([[1.7]])], [np.zeros(1)], ["linear"])
    net.forward([2.5])
    dw, db = net.backward([1.0])
    assert dw[0, 0] == 2.5
    assert db[0] == 1.0


def test_backward_zero_upstream(rng):
    net = random_net(rng)
    net.forward(rng.normal(size=(3, 4)))
    for g in net.backward(np.zeros((3, 3))):
        assert not g.any()


@pytest.mark.parametrize("act", ["tanh", "relu", "softplus", "linear"])
def test_backward_matches_finite_differences(act, rng):
    net = random_net(rng, (4, 7, 5, 3), hidden=act, out=act if act != "relu" else "linear")
    x = rng.normal(size=(6, 4))
    w = rng.normal(size=(6, 3))

    def loss():
        return float(np.sum(w * net.forward(x) ** 2))

    out = net.forward(x)
    grads = net.backward(2 * w * out)
    assert_grads_close(grads, finite_diff(loss, net.params()))


def test_input_gradient(rng):
    net = random_net(rng)
    x = rng.normal(size=4)
    net.forward(x)
    net.backward(np.ones(3))
    (num,) = finite_diff(lambda: float(net.forward(x).sum()), [x])
    np.testing.assert_allclose(net.input_grad, num, rtol=1e-6, atol=1e-9)


# -- categorical --------------------------------------------------------------

def test_softmax_sum_and_shift_invariance(rng):
    z = rng.normal(size=(10, 50)) * 5
    p = nn.softmax(z)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(p > 0)
    np.testing.assert_allclose(nn.softmax(z + 123.4), p, atol=1e-9)


def test_categorical_heads_gradients(rng):
    z = rng.normal(size=(3, 6))
    a = np.array([0, 4, 5])
    w = rng.normal(size=3)

    def f():
        return float(np.sum(w * nn.log_softmax(z)[np.arange(3), a]) + nn.categorical_entropy(z).sum())

    onehot = np.eye(6)[a]
    analytic = w[:, None] * (onehot - nn.softmax(z)) + nn.categorical_entropy_grad(z)
    assert_grads_close([analytic], finite_diff(f, [z]))


def test_eps_greedy_uniform_when_eps_one():
    rng = np.random.default_rng(0)
    k, n = 8, 100_000
    counts = np.bincount([nn.categorical_sample_eps_greedy(np.eye(k)[0], 1.0, rng) for _ in range(n)], minlength=k)
    sd = math.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(counts - n / k) < 3 * sd)


def test_eps_greedy_one_hot_when_eps_zero(rng):
    probs = np.array([0.0, 0.0, 1.0, 0.0])
    assert {nn.categorical_sample_eps_greedy(probs, 0.0, rng) for _ in range(1000)} == {2}


def test_eps_greedy_mixture():
    rng = np.random.default_rng(1)
    n = 100_000
    draws = np.array([nn.categorical_sample_eps_greedy([0.5, 0.5, 0, 0], 0.2, rng) for _ in range(n)])
    p2 = np.mean(draws == 2)
    # 0.2 * 1/4 = 0.05
    assert abs(p2 - 0.05) < 3 * math.sqrt(0.05 * 0.95 / n)
    assert abs(np.mean(draws == 0) - 0.45) < 0.01


# -- Gaussian -------------------------------------------------------------------

def test_gaussian_logprob_examples():
    assert nn.gaussian_logprob(np.zeros(2), np.ones(2), np.zeros(2)) == pytest.approx(-math.log(2 * math.pi))
    assert nn.gaussian_logprob(np.zeros(2), np.ones(2), np.array([1.0, 0.0])) == pytest.approx(
        -math.log(2 * math.pi) - 0.5)


def test_gaussian_logprob_matches_scipy(rng):
    for _ in range(20):
        mu, sigma, a = rng.normal(size=2), rng.uniform(0.1, 3, 2), rng.normal(size=2) * 2
        ref = stats.norm.logpdf(a, mu, sigma).sum()
        assert abs(nn.gaussian_logprob(mu, sigma, a) - ref) < 1e-8


def test_gaussian_head_gradients(rng):
    raw = rng.normal(size=(4, 4))
    a = rng.normal(size=(4, 2))
    w = rng.normal(size=4)
    floor = 1e-3

    def f():
        mu, sigma = nn.gaussian_params(raw, floor)
        return float(np.sum(w * nn.gaussian_logprob(mu, sigma, a)) + 0.3 * nn.gaussian_entropy(sigma).sum())

    mu, sigma = nn.gaussian_params(raw, floor)
    d_mu, d_sigma = nn.gaussian_logprob_grads(mu, sigma, a)
    analytic = nn.gaussian_raw_grad(raw, w[:, None] * d_mu, w[:, None] * d_sigma + 0.3 / sigma)
    assert_grads_close([analytic], finite_diff(f, [raw]))


def test_gaussian_sigma_floor():
    _, sigma = nn.gaussian_params(np.array([0.0, 0.0, -800.0, -50.0]), 0.01)
    assert np.all(sigma >= 0.01)


def test_gaussian_sampling_moments():
    rng = np.random.default_rng(4)
    mu, sigma = np.array([1.5, -0.5]), np.array([0.3, 2.0])
    x = mu + sigma * rng.standard_normal((100_000, 2))
    np.testing.assert_allclose(x.mean(axis=0), mu, rtol=0.02)
    np.testing.assert_allclose(x.std(axis=0), sigma, rtol=0.02)


# -- Adam -------------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    w = np.array([1.0, -2.0])
    opt = Adam([w], lr=0.1)
    opt.step([w], [np.zeros(2)])
    np.testing.assert_array_equal(w, [1.0, -2.0])


def test_adam_first_step_size():
    w = np.array([1.0, 1.0])
    opt = Adam([w], lr=0.01)
    opt.step([w], [np.array([3.0, -0.2])])
    np.testing.assert_allclose(w, [0.99, 1.01], atol=1e-6)


def test_adam_quadratic_bowl():
    w = np.array([1.0])
    opt = Adam([w], lr=1e-2)
    for _ in range(500):
        opt.step([w], [2 * w])
    assert abs(w[0]) < 1e-3


def test_adam_shape_mismatch():
    w = np.zeros(3)
    opt = Adam([w])
    with pytest.raises(ValueError):
        opt.step([w], [np.zeros(2)])


def test_adam_step_on_net(rng):
    net = random_net(rng)
    before = [p.copy() for p in net.params()]
    nn.adam_step(net, nn.zeros_like_params(net), 0.1, Adam(net.params()))
    for a, b in zip(before, net.params()):
        np.testing.assert_array_equal(a, b)


# -- checkpoints ------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, rng):
    net = random_net(rng)
    nn.save_mlp(net, tmp_path / "net.npz")
    loaded = nn.load_mlp(tmp_path / "net.npz")
    x = rng.normal(size=4)
    np.testing.assert_array_equal(loaded.forward(x), net.forward(x))
    assert loaded.activations == net.activations


def test_checkpoint_rejects_shape_mismatch(tmp_path, rng):
    path = tmp_path / "net.npz"
    np.savez(path, **nn.net_arrays(random_net(rng)))
    other = random_net(rng, (4, 8, 3))
    with np.load(path) as data, pytest.raises(ValueError, match="does not match"):
        nn.load_net_arrays(other, data)
