import numpy as np
import pytest

from gelforce import nn
from gelforce.force import build_model


def test_linear_net_quadratic_loss_near_exact():
    rng = np.random.default_rng(0)
    layers = [nn.Dense(4, 3, rng, np.float64), nn.Dense(3, 1, rng, np.float64)]
    net = nn.Network([nn.Branch(layers)], head=[])
    x = rng.standard_normal((6, 4))
    t = rng.standard_normal((6, 1))
    assert nn.grad_check(net, x, t, eps=1e-5) < 1e-8


def test_conv_relu_net_away_from_kinks():
    rng = np.random.default_rng(1)
    layers = [nn.Conv2D(2, 4, 3, 1, 1, rng, np.float64), nn.ReLU(),
              nn.Conv2D(4, 2, 3, 2, 1, rng, np.float64), nn.ReLU()]
    net = nn.Network([nn.Branch(layers, ())], head=[nn.Dense(2, 1, rng, np.float64)])
    x = rng.standard_normal((2, 6, 6, 2)) + 0.5
    t = rng.standard_normal((2, 1))
    assert nn.grad_check(net, x, t, eps=1e-5) < 1e-4


def test_eps_validation():
    rng = np.random.default_rng(2)
    net = nn.Network([nn.Branch([nn.Dense(2, 1, rng, np.float64)])], head=[])
    x = rng.standard_normal((2, 2))
    t = rng.standard_normal((2, 1))
    with pytest.raises(ValueError):
        nn.grad_check(net, x, t, eps=0.0)
    with pytest.raises(ValueError):
        nn.grad_check(net, x, t, eps=1e-2)


def test_requires_float64():
    rng = np.random.default_rng(3)
    net = nn.Network([nn.Branch([nn.Dense(2, 1, rng, np.float32)])], head=[])
    with pytest.raises(ValueError):
        nn.grad_check(net, rng.standard_normal((1, 2)).astype(np.float32),
                      np.zeros((1, 1), dtype=np.float32), eps=1e-5)


@pytest.mark.parametrize("make_layer,in_shape", [
    (lambda rng: nn.Dense(5, 3, rng, np.float64), (3, 5)),
    (lambda rng: nn.Conv2D(2, 3, 3, 1, 1, rng, np.float64), (2, 5, 5, 2)),
    (lambda rng: nn.Conv2D(2, 3, 3, 2, 1, rng, np.float64), (2, 5, 5, 2)),
    (lambda rng: nn.ResidualBlock(2, 2, 1, None, np.float64), (2, 4, 4, 2)),
    (lambda rng: nn.ResidualBlock(2, 4, 2, None, np.float64), (2, 4, 4, 2)),
])
def test_every_parametric_layer_kind(make_layer, in_shape):
    rng = np.random.default_rng(4)
    lyr = make_layer(rng)
    if len(in_shape) == 4:
        net = nn.Network([nn.Branch([lyr], ())],
                         head=[nn.Dense(lyr.params[-2].shape[-1] if lyr.kind != "dense"
                                        else 3, 1, rng, np.float64)])
    else:
        net = nn.Network([nn.Branch([lyr])], head=[])
    x = rng.standard_normal(in_shape) + 0.3
    out, _ = nn.forward(net, x)
    t = rng.standard_normal(out.shape)
    assert nn.grad_check(net, x, t, eps=1e-5) < 1e-4


@pytest.mark.parametrize("act", [nn.ReLU, nn.Tanh])
def test_activation_layers(act):
    rng = np.random.default_rng(5)
    layers = [nn.Dense(4, 6, rng, np.float64), act(), nn.Dense(6, 1, rng, np.float64)]
    net = nn.Network([nn.Branch(layers)], head=[])
    x = rng.standard_normal((4, 4)) + 0.2
    t = rng.standard_normal((4, 1))
    assert nn.grad_check(net, x, t, eps=1e-5) < 1e-4


def test_maxpool_and_gap():
    rng = np.random.default_rng(6)
    layers = [nn.Conv2D(1, 3, 3, 1, 1, rng, np.float64), nn.Tanh(), nn.MaxPool2D(2)]
    net = nn.Network([nn.Branch(layers, ())], head=[nn.Dense(3, 1, rng, np.float64)])
    x = rng.standard_normal((2, 6, 6, 1))
    t = rng.standard_normal((2, 1))
    assert nn.grad_check(net, x, t, eps=1e-5) < 1e-4


def test_tap_concat_architecture():
    rng = np.random.default_rng(7)
    layers = [nn.Conv2D(1, 2, 3, 2, 1, rng, np.float64), nn.Tanh(),
              nn.ResidualBlock(2, 3, 2, rng, np.float64),
              nn.ResidualBlock(3, 4, 2, rng, np.float64)]
    net = nn.Network([nn.Branch(layers, taps=(2, 3))],
                     head=[nn.Dense(7, 4, rng, np.float64), nn.Tanh(),
                           nn.Dense(4, 1, rng, np.float64)])
    x = rng.standard_normal((2, 8, 8, 1))
    t = rng.standard_normal((2, 1))
    assert nn.grad_check(net, x, t, eps=1e-5) < 1e-4


@pytest.mark.parametrize("kind", ["rgbmod", "d", "dmod", "rgbmod_d"])
def test_composed_force_architectures(kind):
    # seeds fixed to keep ReLU pre-activations away from kinks (the
    # finite-difference contract); sampled parameters keep runtime bounded
    rng = np.random.default_rng(3)
    m = build_model(kind, (16, 16), seed=0, dtype=np.float64)
    if kind == "rgbmod":
        x = rng.standard_normal((2, 16, 16, 3))
    elif kind == "rgbmod_d":
        x = [rng.standard_normal((2, 16, 16, 3)), rng.standard_normal((2, 16, 16, 1))]
    else:
        x = rng.standard_normal((2, 16, 16, 1))
    t = rng.standard_normal((2, 1))
    err = nn.grad_check(m.net, x, t, eps=1e-5, max_per_array=3,
                        rng=np.random.default_rng(12))
    assert err < 1e-4
