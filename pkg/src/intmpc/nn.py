"""Small dense networks: forward/backward passes, Adam and checkpoints.

Parameters of an :class:`Mlp` live in one flat float64 vector; per-layer
weights ``W[i]`` (shape ``(n_in, n_out)``) and biases ``b[i]`` are views
into it, so optimizers and target-network averaging act on a single array.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ShapeMismatch(ValueError):
    pass


class Mlp:
    """ReLU hidden layers, linear output."""

    def __init__(self, sizes, params=None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ShapeMismatch("need at least input and output sizes")
        n = sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))
        if params is None:
            params = np.zeros(n)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (n,):
            raise ShapeMismatch(f"expected {n} parameters, got {params.shape}")
        self.params = params.copy()
        self._bind()

    def _bind(self):
        self.W, self.b = [], []
        off = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            self.W.append(self.params[off:off + a * b].reshape(a, b))
            off += a * b
            self.b.append(self.params[off:off + b])
            off += b

    @classmethod
    def init(cls, sizes, rng: np.random.Generator) -> "Mlp":
        """He-style uniform fan-in initialization, zero biases."""
        net = cls(sizes)
        for W in net.W:
            bound = np.sqrt(6.0 / W.shape[0])
            W[...] = rng.uniform(-bound, bound, size=W.shape)
        return net

    @property
    def n_layers(self) -> int:
        return len(self.W)

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, self.params)

    def set_params(self, params):
        self.params[...] = params

    def forward(self, x, return_cache: bool = False):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[-1] != self.sizes[0]:
            raise ShapeMismatch(f"input dim {h.shape[-1]} != {self.sizes[0]}")
        acts = [h]
        for i in range(self.n_layers):
            z = h @ self.W[i] + self.b[i]
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
            acts.append(h)
        out = h[0] if single else h
        if return_cache:
            return out, (single, acts)
        return out

    __call__ = forward

    def backward(self, cache, grad_out):
        """Parameter gradient (flat, same layout as ``params``) and input gradient."""
        single, acts = cache
        g = np.asarray(grad_out, dtype=np.float64)
        g = g[None, :] if single else g
        if g.shape != acts[-1].shape:
            raise ShapeMismatch("upstream gradient shape does not match output")
        grads = np.empty_like(self.params)
        offs = []
        off = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            offs.append(off)
            off += a * b + b
        for i in range(self.n_layers - 1, -1, -1):
            if i < self.n_layers - 1:
                g = g * (acts[i + 1] > 0.0)
            a, b = self.W[i].shape
            o = offs[i]
            grads[o:o + a * b] = (acts[i].T @ g).ravel()
            grads[o + a * b:o + a * b + b] = g.sum(axis=0)
            g = g @ self.W[i].T
        return grads, (g[0] if single else g)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params, lr: float = 3e-4, **kw) -> "AdamState":
        p = np.asarray(params, dtype=np.float64)
        return cls(np.zeros_like(p), np.zeros_like(p), 0, lr, **kw)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> np.ndarray:
    """In-place bias-corrected Adam update; returns ``params``."""
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ShapeMismatch("parameter, gradient and moment shapes differ")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads * grads
    mhat = state.m / (1.0 - state.beta1 ** state.t)
    vhat = state.v / (1.0 - state.beta2 ** state.t)
    params -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params


# Checkpoint layout (all little-endian):
#   b"IMPC" | u32 version | u32 n_nets | u32 n_scalars
#   per net:    u16 name_len | name (utf-8) | u32 n_sizes | u32 sizes[n_sizes]
#               | f64 params[...]   (per layer: W row-major (n_in, n_out), then b)
#   per scalar: u16 name_len | name (utf-8) | f64 value
MAGIC = b"IMPC"
VERSION = 1


@dataclass
class Checkpoint:
    nets: dict = field(default_factory=dict)      # name -> Mlp
    scalars: dict = field(default_factory=dict)   # name -> float


def _name(buf: bytearray, name: str):
    raw = name.encode("utf-8")
    buf += struct.pack("<H", len(raw)) + raw


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    buf = bytearray(MAGIC)
    buf += struct.pack("<III", VERSION, len(ckpt.nets), len(ckpt.scalars))
    for name, net in ckpt.nets.items():
        _name(buf, name)
        buf += struct.pack(f"<I{len(net.sizes)}I", len(net.sizes), *net.sizes)
        buf += net.params.astype("<f8").tobytes()
    for name, val in ckpt.scalars.items():
        _name(buf, name)
        buf += struct.pack("<d", float(val))
    return bytes(buf)


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    if data[:4] != MAGIC:
        raise ValueError("not a checkpoint file")
    version, n_nets, n_scalars = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 16

    def read_name():
        nonlocal off
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        s = data[off:off + n].decode("utf-8")
        off += n
        return s

    ckpt = Checkpoint()
    for _ in range(n_nets):
        name = read_name()
        (n_sizes,) = struct.unpack_from("<I", data, off)
        off += 4
        sizes = struct.unpack_from(f"<{n_sizes}I", data, off)
        off += 4 * n_sizes
        n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        params = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64)
        off += 8 * n
        ckpt.nets[name] = Mlp(sizes, params)
    for _ in range(n_scalars):
        name = read_name()
        (ckpt.scalars[name],) = struct.unpack_from("<d", data, off)
        off += 8
    if off != len(data):
        raise ValueError("trailing bytes in checkpoint")
    return ckpt


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes())
