import math

import numpy as np
import pytest

from scooptoss import nets
from scooptoss.errors import CheckpointError
from scooptoss.nets import (Mlp, PolicyNet, elu, gaussian_log_prob,
                            load_checkpoint, log_softmax, save_checkpoint,
                            softmax)


# --- forward -------------------------------------------------------------

def test_elu_probe_value():
    z = np.array([[-1.0, 0.0, 2.0]])
    out = elu(z)
    assert out[0, 0] == pytest.approx(math.exp(-1) - 1, abs=1e-12)
    assert out[0, 0] == pytest.approx(-0.6321205588285577)
    assert out[0, 1] == 0.0 and out[0, 2] == 2.0


def test_zero_parameters_give_zero_output():
    net = Mlp([4, 8, 3], np.random.default_rng(0))
    for p in net.parameters():
        p[...] = 0.0
    out, _ = net.forward(np.ones((5, 4)))
    assert np.all(out == 0.0)


def test_single_unit_hand_forward():
    net = Mlp([1, 1, 1], np.random.default_rng(0))
    net.weights[0][...] = 2.0
    net.biases[0][...] = 0.5
    net.weights[1][...] = 3.0
    net.biases[1][...] = -1.0
    x = np.array([[-1.0]])
    h = math.expm1(2.0 * -1.0 + 0.5)           # ELU of -1.5
    assert net(x)[0, 0] == pytest.approx(3.0 * h - 1.0, abs=1e-12)


def test_dimension_mismatch_rejected():
    net = Mlp([4, 8, 3], np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.forward(np.ones((2, 5)))


def test_forward_deterministic():
    net = PolicyNet(28, 5, seed=3)
    x = np.random.default_rng(0).normal(size=(7, 28))
    a = net.actor(x)
    b = net.actor(x)
    assert np.array_equal(a, b)


# --- heads ----------------------------------------------------------------

def test_gaussian_log_prob_at_mean_unit_sigma():
    mean = np.zeros((1, 5))
    logp = gaussian_log_prob(mean, mean, np.zeros(5))
    assert logp[0] == pytest.approx(-2.5 * math.log(2 * math.pi), abs=1e-12)
    assert logp[0] == pytest.approx(-4.594692666023363)


def test_categorical_uniform_and_shift_invariant():
    logits = np.array([[0.0, 0.0]])
    assert softmax(logits)[0] == pytest.approx([0.5, 0.5], abs=1e-12)
    shifted = softmax(logits + 7.3)
    assert shifted[0] == pytest.approx([0.5, 0.5], abs=1e-12)
    probs = softmax(np.array([[1.0, -0.5]]))
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.argmax(probs) == np.argmax(softmax(np.array([[1.0, -0.5]]) + 100))


def test_sampling_reproducible():
    net = PolicyNet(28, 5, seed=3)
    obs = np.random.default_rng(1).normal(size=(6, 28))
    a1, lp1, v1 = net.sample(obs, np.random.default_rng(42))
    a2, lp2, v2 = net.sample(obs, np.random.default_rng(42))
    assert np.array_equal(a1, a2) and np.array_equal(lp1, lp2)
    # density is consistent with log_prob()
    np.testing.assert_allclose(net.log_prob(obs, a1), lp1, atol=1e-12)


def test_log_std_clamp():
    net = PolicyNet(28, 5, seed=0)
    net.log_std[...] = 9.0
    net.clamp_log_std()
    assert np.all(net.log_std == nets.LOG_STD_MAX)


# --- backward: hand cases and finite differences ------------------------------

def test_linear_layer_gradient_outer_product():
    net = Mlp([3, 2], np.random.default_rng(0), out_gain=1.0)
    x = np.array([[1.0, -2.0, 0.5]])
    out, cache = net.forward(x)
    grads = net.backward(cache, out)  # d(0.5*||out||^2)/dW = x^T out
    np.testing.assert_allclose(grads[0], x.T @ out, atol=1e-12)
    np.testing.assert_allclose(grads[1], out[0], atol=1e-12)


def test_zero_loss_zero_grads():
    net = Mlp([4, 6, 2], np.random.default_rng(1))
    out, cache = net.forward(np.random.default_rng(2).normal(size=(3, 4)))
    grads = net.backward(cache, np.zeros_like(out))
    assert all(np.all(g == 0) for g in grads)


def fd_gradient(loss_fn, params, coords, h=1e-6):
    """Central finite differences of a scalar loss at sampled coordinates."""
    out = []
    for pi, flat_idx in coords:
        p = params[pi]
        orig = p.flat[flat_idx]
        p.flat[flat_idx] = orig + h
        up = loss_fn()
        p.flat[flat_idx] = orig - h
        down = loss_fn()
        p.flat[flat_idx] = orig
        out.append((up - down) / (2 * h))
    return np.array(out)


def sample_coords(params, rng, k=30):
    coords = []
    for _ in range(k):
        pi = int(rng.integers(len(params)))
        coords.append((pi, int(rng.integers(params[pi].size))))
    return coords


def test_mlp_gradcheck_against_finite_differences():
    rng = np.random.default_rng(7)
    net = Mlp([28, 16, 12, 5], rng, out_gain=1.0)
    x = rng.normal(size=(9, 28))
    w_mix = rng.normal(size=(9, 5))

    def loss_fn():
        out, _ = net.forward(x)
        return float((w_mix * out).sum() + 0.5 * (out ** 2).sum())

    out, cache = net.forward(x)
    grads = net.backward(cache, w_mix + out)
    params = net.parameters()
    coords = sample_coords(params, rng, k=40)
    analytic = np.array([grads[pi].flat[idx] for pi, idx in coords])
    numeric = fd_gradient(loss_fn, params, coords)
    denom = np.maximum(np.abs(numeric), 1e-8)
    assert np.max(np.abs(analytic - numeric) / denom) < 1e-4


# --- checkpoint io -------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    net = PolicyNet(28, 5, seed=11)
    net.log_std[...] = np.linspace(-1, 0.5, 5)
    path = tmp_path / "p.bin"
    save_checkpoint(net, path, seed_lineage="seed=11",
                    metadata={"mode": "approach"})
    loaded, manifest = load_checkpoint(path)
    for a, b in zip(net.parameters(), loaded.parameters()):
        assert np.array_equal(a, b) and a.dtype == b.dtype
    assert manifest["seed_lineage"] == "seed=11"
    assert manifest["metadata"]["mode"] == "approach"


def test_checkpoint_wrong_obs_dim_rejected(tmp_path):
    net = PolicyNet(28, 5, seed=0)
    path = tmp_path / "p.bin"
    save_checkpoint(net, path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_obs_dim=33)


def test_checkpoint_legacy_version_rejected(tmp_path):
    net = PolicyNet(28, 5, seed=0)
    path = tmp_path / "p.bin"
    save_checkpoint(net, path)
    raw = bytearray(path.read_bytes())
    raw[4] = 99  # bump the version field
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_garbage_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"definitely not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_categorical_checkpoint_roundtrip(tmp_path):
    net = PolicyNet(28, 2, kind="categorical", seed=5, dtype=np.float32)
    path = tmp_path / "m.bin"
    save_checkpoint(net, path)
    loaded, manifest = load_checkpoint(path)
    assert loaded.kind == "categorical" and loaded.log_std is None
    assert manifest["dtype"] == np.dtype(np.float32).str
    for a, b in zip(net.parameters(), loaded.parameters()):
        assert np.array_equal(a, b)
