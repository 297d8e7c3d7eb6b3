"""Small fully connected networks with hand-written backprop, Adam, and a binary checkpoint."""

from __future__ import annotations

import io
import json
import struct

import numpy as np

CHECKPOINT_MAGIC = b"SAGCNET\0"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class MLP:
    """``tanh`` hidden layers, configurable output activation ('linear' or 'tanh').

    Weights are stored as ``W`` with shape (fan_in, fan_out) so a batch ``X``
    of shape (N, fan_in) maps to ``X @ W + b``.
    """

    def __init__(self, sizes, out_activation="linear", rng=None, final_scale=3e-3):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if out_activation not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {out_activation!r}")
        self.out_activation = out_activation
        rng = np.random.default_rng(0) if rng is None else rng
        self.params: list[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            lim = final_scale if k == n_layers - 1 else 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-lim, lim, size=fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def copy(self) -> "MLP":
        other = MLP.__new__(MLP)
        other.sizes = self.sizes
        other.out_activation = self.out_activation
        other.params = [p.copy() for p in self.params]
        return other

    def forward(self, X, keep=False):
        a = np.atleast_2d(np.asarray(X, dtype=float))
        cache = [a]
        for k in range(self.n_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            z = a @ W + b
            last = k == self.n_layers - 1
            if not last or self.out_activation == "tanh":
                a = np.tanh(z)
            else:
                a = z
            cache.append(a)
        return (a, cache) if keep else a

    def backward(self, cache, grad_out):
        """Gradients of ``sum(grad_out * output)`` w.r.t. parameters and input."""
        grads = [None] * len(self.params)
        delta = np.atleast_2d(np.asarray(grad_out, dtype=float))
        for k in reversed(range(self.n_layers)):
            a_out = cache[k + 1]
            last = k == self.n_layers - 1
            if not last or self.out_activation == "tanh":
                delta = delta * (1.0 - a_out * a_out)
            a_in = cache[k]
            grads[2 * k] = a_in.T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            delta = delta @ self.params[2 * k].T
        return grads, delta

    def soft_update_from(self, src: "MLP", tau: float):
        # p += tau (q - p) leaves p bit-identical when q == p
        for p, q in zip(self.params, src.params):
            p += tau * (q - p)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        if self.lr == 0.0:
            return
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# Checkpoint layout (all integers little-endian):
#   8 bytes   magic "SAGCNET\0"
#   u32       format version
#   u32       length of a UTF-8 JSON metadata block, then the block
#   u32       number of networks
#   per network:
#     u16 name length, name (UTF-8)
#     u8  output activation (0 linear, 1 tanh)
#     u32 number of layer sizes L, then L x u32 sizes
#     for each layer: W as float64 '<f8' row-major (fan_in x fan_out), then b
def save_networks(path_or_buf, nets: dict, meta: dict | None = None):
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(nets)))
    for name, net in nets.items():
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", 1 if net.out_activation == "tanh" else 0))
        buf.write(struct.pack("<I", len(net.sizes)))
        buf.write(struct.pack(f"<{len(net.sizes)}I", *net.sizes))
        for p in net.params:
            buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes(order="C"))
    data = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(data)
    else:
        with open(path_or_buf, "wb") as fh:
            fh.write(data)
    return data


def load_networks(path_or_buf):
    """Return ``(nets, meta)`` from a checkpoint written by :func:`save_networks`."""
    if hasattr(path_or_buf, "read"):
        data = path_or_buf.read()
    else:
        with open(path_or_buf, "rb") as fh:
            data = fh.read()
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(8)) != CHECKPOINT_MAGIC:
        raise CheckpointError("not a network checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (mlen,) = struct.unpack("<I", take(4))
    meta = json.loads(bytes(take(mlen)).decode())
    (count,) = struct.unpack("<I", take(4))
    nets = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = bytes(take(nlen)).decode()
        (act,) = struct.unpack("<B", take(1))
        (L,) = struct.unpack("<I", take(4))
        sizes = struct.unpack(f"<{L}I", take(4 * L))
        net = MLP.__new__(MLP)
        net.sizes = tuple(sizes)
        net.out_activation = "tanh" if act else "linear"
        net.params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            W = np.frombuffer(take(8 * fan_in * fan_out), dtype="<f8").reshape(fan_in, fan_out)
            b = np.frombuffer(take(8 * fan_out), dtype="<f8")
            net.params += [W.astype(np.float64), b.astype(np.float64)]
        nets[name] = net
    if pos != len(view):
        raise CheckpointError("trailing bytes after checkpoint")
    return nets, meta
