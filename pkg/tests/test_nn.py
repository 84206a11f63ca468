import numpy as np
import pytest

from gelforce import nn


def test_zero_weight_dense_gives_zero_output():
    rng = np.random.default_rng(0)
    lyr = nn.Dense(4, 3, rng, np.float64)
    lyr.params[0][:] = 0.0
    net = nn.Network([nn.Branch([lyr])], head=[])
    out, _ = nn.forward(net, rng.standard_normal((5, 4)))
    assert np.count_nonzero(out) == 0


def test_identity_conv_passthrough():
    rng = np.random.default_rng(1)
    c = nn.Conv2D(3, 3, 1, rng=rng, dtype=np.float64)
    c.params[0][:] = np.eye(3)
    c.params[1][:] = 0.0
    x = rng.standard_normal((2, 6, 5, 3))
    y, _ = c.forward(x)
    assert np.array_equal(y, x)


def test_two_layer_dense_matches_hand_matmul():
    rng = np.random.default_rng(2)
    l1 = nn.Dense(3, 2, rng, np.float64)
    l2 = nn.Dense(2, 1, rng, np.float64)
    w1 = np.array([[1.0, -1.0], [0.5, 2.0], [0.0, 1.0]])
    b1 = np.array([0.1, -0.2])
    w2 = np.array([[2.0], [-3.0]])
    b2 = np.array([0.5])
    l1.params[0][:] = w1
    l1.params[1][:] = b1
    l2.params[0][:] = w2
    l2.params[1][:] = b2
    net = nn.Network([nn.Branch([l1, l2])], head=[])
    x = np.array([[1.0, 2.0, 3.0]])
    out, _ = nn.forward(net, x)
    want = (x @ w1 + b1) @ w2 + b2
    assert np.allclose(out, want, atol=1e-15)


def test_forward_deterministic_bitwise():
    rng = np.random.default_rng(3)
    layers = [nn.Conv2D(1, 4, 3, 1, 1, rng, np.float32), nn.ReLU(), nn.MaxPool2D(2)]
    net = nn.Network([nn.Branch(layers, ())], head=[nn.Dense(4, 1, rng, np.float32)])
    x = rng.standard_normal((3, 8, 8, 1)).astype(np.float32)
    a, _ = nn.forward(net, x)
    b, _ = nn.forward(net, x)
    assert np.array_equal(a, b)


def test_backward_zero_loss_grad_gives_zero_grads():
    rng = np.random.default_rng(4)
    layers = [nn.Dense(3, 4, rng, np.float64), nn.Tanh(), nn.Dense(4, 1, rng, np.float64)]
    net = nn.Network([nn.Branch(layers)], head=[])
    x = rng.standard_normal((2, 3))
    out, cache = nn.forward(net, x)
    grads = nn.backward(net, cache, np.zeros_like(out))
    assert all(np.count_nonzero(g) == 0 for g in grads)


def test_single_dense_mse_closed_form_gradient():
    rng = np.random.default_rng(5)
    lyr = nn.Dense(3, 1, rng, np.float64)
    net = nn.Network([nn.Branch([lyr])], head=[])
    x = rng.standard_normal((8, 3))
    t = rng.standard_normal((8, 1))
    out, cache = nn.forward(net, x)
    loss, dout = nn.mse_loss(out, t)
    gw, gb = nn.backward(net, cache, dout)
    want_w = 2.0 * x.T @ (out - t) / len(x)
    want_b = 2.0 * (out - t).sum(axis=0) / len(x)
    assert np.allclose(gw, want_w, atol=1e-12)
    assert np.allclose(gb, want_b, atol=1e-12)


def test_shape_mismatch_raises():
    rng = np.random.default_rng(6)
    net = nn.Network([nn.Branch([nn.Dense(3, 1, rng, np.float64)])], head=[])
    with pytest.raises(Exception):
        nn.forward(net, rng.standard_normal((2, 5)))


# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_gradient_is_identity():
    rng = np.random.default_rng(7)
    net = nn.Network([nn.Branch([nn.Dense(3, 2, rng, np.float64)])], head=[])
    before = [p.copy() for p in net.parameters()]
    state = nn.AdamState.for_network(net)
    nn.adam_step(net, [np.zeros_like(p) for p in net.parameters()], state)
    for b, p in zip(before, net.parameters()):
        assert np.array_equal(b, p)
    assert state.step == 1


def test_adam_single_step_closed_form():
    # standard bias-corrected Adam at t=1: m_hat = g, v_hat = g^2, so
    # delta = -lr * g / (|g| + eps)
    rng = np.random.default_rng(8)
    lyr = nn.Dense(1, 1, rng, np.float64)
    lyr.params[0][:] = 0.7
    lyr.params[1][:] = 0.0
    net = nn.Network([nn.Branch([lyr])], head=[])
    lr = 4e-5
    state = nn.AdamState.for_network(net, lr=lr)
    g = 1.0
    grads = [np.full_like(lyr.params[0], g), np.zeros_like(lyr.params[1])]
    nn.adam_step(net, grads, state)
    want_delta = -lr * g / (abs(g) + state.eps)
    assert lyr.params[0][0, 0] == pytest.approx(0.7 + want_delta, abs=1e-18)


def test_adam_default_lr_matches_training_config():
    state = nn.AdamState(m=[], v=[])
    assert state.lr == 4e-5
    assert state.beta1 == 0.9 and state.beta2 == 0.999


def test_adam_rejects_non_finite_gradients():
    rng = np.random.default_rng(9)
    net = nn.Network([nn.Branch([nn.Dense(2, 1, rng, np.float64)])], head=[])
    state = nn.AdamState.for_network(net)
    bad = [np.full((2, 1), np.nan), np.zeros(1)]
    with pytest.raises(nn.TrainingError) as exc:
        nn.adam_step(net, bad, state)
    assert "branch0/layer0/dense" in str(exc.value)


def test_adam_converges_on_quadratic():
    rng = np.random.default_rng(10)
    lyr = nn.Dense(1, 1, rng, np.float64)
    net = nn.Network([nn.Branch([lyr])], head=[])
    state = nn.AdamState.for_network(net, lr=0.05)
    x = np.ones((1, 1))
    t = np.array([[2.5]])
    for _ in range(600):
        out, cache = nn.forward(net, x)
        _, dout = nn.mse_loss(out, t)
        nn.adam_step(net, nn.backward(net, cache, dout), state)
    out, _ = nn.forward(net, x)
    assert out[0, 0] == pytest.approx(2.5, abs=1e-3)


# ---------------------------------------------------------------------------
# weights file


def test_weights_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(11)
    layers = [nn.Conv2D(1, 3, 3, 2, 1, rng, np.float32), nn.ReLU(),
              nn.ResidualBlock(3, 6, 2, rng, np.float32), nn.MaxPool2D(2)]
    net = nn.Network([nn.Branch(layers, taps=(2,))],
                     head=[nn.Dense(6, 4, rng, np.float32), nn.Tanh(),
                           nn.Dense(4, 1, rng, np.float32)])
    nn.save_weights(net, tmp_path / "w.gfnw")
    back = nn.load_weights(tmp_path / "w.gfnw")
    x = rng.standard_normal((2, 8, 8, 1)).astype(np.float32)
    a, _ = nn.forward(net, x)
    b, _ = nn.forward(back, x)
    assert np.array_equal(a, b)
    for p, q in zip(net.parameters(), back.parameters()):
        assert np.array_equal(p, q)
        assert p.dtype == q.dtype


def test_weights_bad_magic(tmp_path):
    (tmp_path / "junk.bin").write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(nn.WeightsFormatError):
        nn.load_weights(tmp_path / "junk.bin")


def test_history_csv(tmp_path):
    nn.write_history(tmp_path / "h.csv", [
        {"epoch": 0, "train_loss": 1.5, "val_loss": 2.0},
        {"epoch": 1, "train_loss": 0.5, "val_loss": 1.0},
    ])
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss"
    assert lines[1].startswith("0,1.5,")
