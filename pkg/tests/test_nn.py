import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intmpc.nn import (MAGIC, AdamState, Checkpoint, Mlp, ShapeMismatch, adam_step,
                       checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint)


def test_forward_by_hand():
    net = Mlp((2, 2, 1))
    net.W[0][...] = [[1, -1], [2, 1]]
    net.b[0][...] = [0.5, -10]
    net.W[1][...] = [[3], [4]]
    net.b[1][...] = [1]
    # hidden = relu([1 + 4 + .5, -1 + 2 - 10]) = [5.5, 0]
    assert net(np.array([1.0, 2.0]))[0] == pytest.approx(3 * 5.5 + 1)


def test_parameter_views_share_memory():
    net = Mlp((3, 4, 2))
    net.params[:] = np.arange(net.params.size)
    assert net.W[0][0, 0] == 0 and net.b[0][0] == 12 and net.W[1][0, 0] == 16
    net.W[1][...] = -1
    assert np.all(net.params[16:24] == -1)


@pytest.mark.parametrize("batch", [False, True])
def test_backward_matches_finite_differences(batch):
    rng = np.random.default_rng(0)
    net = Mlp.init((5, 7, 6, 2), rng)
    net.params += rng.normal(0, 0.1, net.params.size)  # nonzero biases keep ReLUs off their kinks
    x = rng.normal(size=(4, 5)) if batch else rng.normal(size=5)
    w = rng.normal(size=(4, 2)) if batch else rng.normal(size=2)
    out, cache = net.forward(x, return_cache=True)
    gp, gx = net.backward(cache, w)

    def loss(p, xx):
        return float(np.sum(Mlp(net.sizes, p)(xx) * w))

    h = 1e-6
    fd = np.array([(loss(net.params + h * e, x) - loss(net.params - h * e, x)) / (2 * h)
                   for e in np.eye(net.params.size)])
    np.testing.assert_allclose(gp, fd, rtol=1e-5, atol=1e-7)
    fdx = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        d = np.zeros_like(x)
        d[idx] = h
        fdx[idx] = (loss(net.params, x + d) - loss(net.params, x - d)) / (2 * h)
    np.testing.assert_allclose(gx, fdx, rtol=1e-5, atol=1e-7)


def test_shape_errors():
    net = Mlp((3, 2))
    with pytest.raises(ShapeMismatch):
        net(np.zeros(4))
    with pytest.raises(ShapeMismatch):
        Mlp((3, 2), np.zeros(5))
    _, cache = net.forward(np.zeros(3), return_cache=True)
    with pytest.raises(ShapeMismatch):
        net.backward(cache, np.zeros(3))


def test_adam_recurrence():
    """Two steps against the bias-corrected recurrence written out by hand."""
    p = np.array([1.0, -2.0])
    g1, g2 = np.array([0.5, -1.0]), np.array([0.1, 0.3])
    s = AdamState.like(p, lr=0.01)
    adam_step(p, g1, s)
    adam_step(p, g2, s)
    m = 0.1 * (0.9 * g1) + 0.1 * g2
    v = 0.999 * 0.001 * g1**2 + 0.001 * g2**2
    step1 = 0.01 * g1 / (np.abs(g1) + 1e-8)
    step2 = 0.01 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    np.testing.assert_allclose(p, np.array([1.0, -2.0]) - step1 - step2, rtol=1e-12)
    assert s.t == 2


def test_adam_minimizes_quadratic():
    p = np.array([3.0, -4.0])
    s = AdamState.like(p, lr=0.05)
    for _ in range(2000):
        adam_step(p, 2 * p, s)
    assert np.abs(p).max() < 1e-3


def test_checkpoint_byte_layout():
    net = Mlp((1, 1))
    net.params[:] = [2.0, -1.0]
    data = checkpoint_bytes(Checkpoint({"pi": net}, {"K": 2.0}))
    expected = (MAGIC + struct.pack("<III", 1, 1, 1)
                + struct.pack("<H", 2) + b"pi" + struct.pack("<III", 2, 1, 1)
                + struct.pack("<dd", 2.0, -1.0)
                + struct.pack("<H", 1) + b"K" + struct.pack("<d", 2.0))
    assert data == expected


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=2, max_size=4), st.integers(0, 2**31))
def test_checkpoint_round_trip(sizes, seed):
    rng = np.random.default_rng(seed)
    ck = Checkpoint({"a": Mlp.init(sizes, rng), "b": Mlp.init(sizes[::-1], rng)},
                    {"x": float(rng.normal()), "y": 3.0})
    data = checkpoint_bytes(ck)
    back = checkpoint_from_bytes(data)
    assert checkpoint_bytes(back) == data
    for name in ck.nets:
        np.testing.assert_array_equal(back.nets[name].params, ck.nets[name].params)
    assert back.scalars == ck.scalars


def test_checkpoint_file_and_corruption(tmp_path):
    ck = Checkpoint({"a": Mlp((2, 3))}, {})
    save_checkpoint(ck, tmp_path / "c.bin")
    assert load_checkpoint(tmp_path / "c.bin").nets["a"].sizes == (2, 3)
    data = checkpoint_bytes(ck)
    with pytest.raises(ValueError):
        checkpoint_from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        checkpoint_from_bytes(data + b"\0")
