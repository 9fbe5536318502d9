import math

import numpy as np
import pytest

from gradcheck import check
from tripletdiff import numeric as nn
from tripletdiff.numeric import (AdamState, CheckpointError, Graph, NonFiniteError, ShapeError, StaleGraphError,
                                 adam_step, load_checkpoint, save_checkpoint)
from tripletdiff.numeric.checkpoint import dumps, loads


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def _weighted(g, t, r):
    return nn.total(t * g.constant(r))


OPS = {
    "add": (lambda g, p, r: _weighted(g, p["a"] + p["b"], r), {"a": (4, 3), "b": (3,)}, (4, 3)),
    "mul": (lambda g, p, r: _weighted(g, p["a"] * p["b"], r), {"a": (4, 3), "b": (4, 1)}, (4, 3)),
    "matmul": (lambda g, p, r: _weighted(g, p["a"] @ p["b"], r), {"a": (4, 3), "b": (3, 5)}, (4, 5)),
    "conv_causal": (lambda g, p, r: _weighted(g, nn.causal_dilated_conv1d(p["x"], p["k"], 2), r),
                    {"x": (9, 3), "k": (3, 3, 2)}, (9, 2)),
    "conv_acausal": (lambda g, p, r: _weighted(g, nn.conv1d(p["x"], p["k"], 3, causal=False), r),
                     {"x": (9, 3), "k": (2, 3, 2)}, (9, 2)),
    "sigmoid": (lambda g, p, r: _weighted(g, nn.sigmoid(p["a"]), r), {"a": (5, 4)}, (5, 4)),
    "relu": (lambda g, p, r: _weighted(g, nn.relu(p["a"]), r), {"a": (5, 4)}, (5, 4)),
    "channel_norm": (lambda g, p, r: _weighted(g, nn.channel_norm(p["a"], 2), r), {"a": (5, 6)}, (5, 6)),
    "concat": (lambda g, p, r: _weighted(g, nn.concat_channels([p["a"], p["b"]]), r),
               {"a": (4, 2), "b": (4, 3)}, (4, 5)),
    "slice": (lambda g, p, r: _weighted(g, nn.slice_channels(p["a"], 1, 4), r), {"a": (4, 5)}, (4, 3)),
    "mean": (lambda g, p, r: nn.mean(p["a"] * p["a"]), {"a": (3, 4)}, None),
}


@pytest.mark.parametrize("op", sorted(OPS))
def test_op_gradients(op, rng):
    build, shapes, out_shape = OPS[op]
    r = rng.standard_normal(out_shape) if out_shape else None
    params = {k: _away_from_zero(rng, s) for k, s in shapes.items()}
    errors = check(lambda g, p: build(g, p, r), params, 20, rng)
    assert max(errors) < 1e-4, (op, max(errors))


def test_two_layer_network_gradients(rng):
    params = {"w1": rng.standard_normal((4, 6)), "b1": rng.standard_normal(6),
              "w2": rng.standard_normal((6, 2)), "b2": rng.standard_normal(2)}
    x = rng.standard_normal((8, 4))

    def build(g, p):
        h = nn.relu(g.constant(x) @ p["w1"] + p["b1"])
        return nn.mean(nn.sigmoid(h @ p["w2"] + p["b2"]))

    assert max(check(build, params, 60, rng)) < 1e-4


def test_trivial_gradients():
    g = Graph()
    p = g.param("p", np.array([1.0, -2.0, 3.0]))
    assert np.array_equal(g.backward(nn.total(p))["p"], np.ones(3))
    g = Graph()
    p = g.param("p", np.array([1.0, -2.0, 3.0]))
    assert np.allclose(g.backward(nn.total(p * p))["p"], [2.0, -4.0, 6.0])


def test_forward_examples():
    g = Graph()
    assert np.array_equal((g.constant(np.ones((2, 3))) @ g.constant(np.ones((3, 2)))).data, np.full((2, 2), 3.0))
    assert float(nn.sigmoid(g.constant(np.zeros(1))).data[0]) == 0.5


def test_causal_conv_shift():
    x = np.arange(1.0, 7.0).reshape(6, 1)
    k = np.zeros((3, 1, 1))
    k[0, 0, 0] = 1.0  # tap on frame t - 2
    g = Graph()
    out = nn.causal_dilated_conv1d(g.constant(x), g.constant(k), 1).data[:, 0]
    assert out.tolist() == [0, 0, 1, 2, 3, 4]
    k = np.zeros((3, 1, 1))
    k[2, 0, 0] = 1.0  # last tap is the current frame
    out = nn.causal_dilated_conv1d(g.constant(x), g.constant(k), 1).data[:, 0]
    assert out.tolist() == x[:, 0].tolist()


def test_conv_causality_and_acausal_leak(rng):
    x = rng.standard_normal((20, 2))
    k = rng.standard_normal((3, 2, 2))
    for causal in (True, False):
        g = Graph()
        a = nn.conv1d(g.constant(x), g.constant(k), 2, causal=causal).data
        y = x.copy()
        y[12:] += 1.0
        b = nn.conv1d(g.constant(y), g.constant(k), 2, causal=causal).data
        if causal:
            assert np.array_equal(a[:12], b[:12])
        else:
            assert not np.array_equal(a[:12], b[:12])


def test_graph_errors():
    g = Graph()
    p = g.param("p", np.ones(3))
    with pytest.raises(ShapeError):
        g.backward(p * 2.0)
    loss = nn.total(p)
    g.backward(loss)
    with pytest.raises(StaleGraphError):
        g.backward(loss)
    g = Graph()
    with pytest.raises(NonFiniteError):
        g.param("p", np.ones(2)) * np.inf
    with pytest.raises(ShapeError):
        nn.conv1d(g.constant(np.ones((4, 2))), g.constant(np.ones((3, 3, 1))))
    with pytest.raises(ShapeError):
        nn.conv1d(g.constant(np.ones((4, 2))), g.constant(np.ones((3, 2, 1))), dilation=0)


def test_unused_parameter_gets_zero_gradient():
    g = Graph()
    p = g.param("p", np.ones(2))
    g.param("q", np.ones((2, 2)))
    grads = g.backward(nn.total(p))
    assert np.array_equal(grads["q"], np.zeros((2, 2)))


def test_adam_zero_gradient_is_identity():
    p = {"w": np.array([1.0, -2.0], np.float32)}
    adam_step(AdamState(lr=0.1, weight_decay=0.0), p, {"w": np.zeros(2, np.float32)})
    assert p["w"].tolist() == [1.0, -2.0]


def test_adam_descends():
    p = {"w": np.array([1.0])}
    adam_step(AdamState(lr=0.1, weight_decay=0.0), p, {"w": np.array([1.0])})
    assert p["w"][0] < 1.0


def test_adam_two_steps_by_hand():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    p = {"w": np.array([1.0])}
    state = AdamState(lr=lr, weight_decay=0.0)
    adam_step(state, p, {"w": np.array([0.5])})
    adam_step(state, p, {"w": np.array([-1.0])})
    # hand recurrence
    m1, v1 = 0.1 * 0.5, 0.001 * 0.25
    w1 = 1.0 - lr * (m1 / 0.1) / (math.sqrt(v1 / 0.001) + eps)
    m2, v2 = b1 * m1 + 0.1 * -1.0, b2 * v1 + 0.001 * 1.0
    w2 = w1 - lr * (m2 / (1 - b1**2)) / (math.sqrt(v2 / (1 - b2**2)) + eps)
    assert state.step == 2
    assert p["w"][0] == pytest.approx(w2, abs=1e-12)


def test_adam_weight_decay_and_missing_gradient():
    p = {"w": np.array([2.0])}
    adam_step(AdamState(lr=0.1, weight_decay=0.5), p, {"w": np.array([0.0])})
    assert p["w"][0] == pytest.approx(1.9)  # decay term alone drives a full-size first step
    with pytest.raises(KeyError):
        adam_step(AdamState(), {"w": np.ones(1)}, {})


def test_checkpoint_round_trip(tmp_path, rng):
    tensors = {"a": rng.standard_normal((3, 4)).astype(np.float32), "b.c": np.float32(rng.standard_normal(5)),
               "scalar": np.array(1.5, np.float32)}
    save_checkpoint(tmp_path / "m.ckpt", tensors)
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].tobytes() == tensors[k].tobytes() and back[k].shape == tensors[k].shape
    blob = (tmp_path / "m.ckpt").read_bytes()
    assert blob[:4] == b"DSL1"


def test_checkpoint_corruption(rng):
    blob = dumps({"a": np.ones((2, 2), np.float32)})
    with pytest.raises(CheckpointError):
        loads(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError):
        loads(blob[:-3])
    with pytest.raises(CheckpointError):
        loads(blob[:10])
    with pytest.raises(CheckpointError):
        loads(blob[:4] + (2).to_bytes(4, "little") + blob[8:])
