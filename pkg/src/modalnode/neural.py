"""Multilayer perceptron with Leaky ReLU hidden layers, written out by hand.

Parameters live in one flat float64 vector; per-layer weights (out, in) and
biases are views into it, stored layer by layer as W (row-major) then b.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MlpNetwork:
    def __init__(self, dims, alpha: float = 0.01, params=None, seed=None):
        self.dims = tuple(int(d) for d in dims)
        if len(self.dims) < 2 or min(self.dims) < 1:
            raise ValueError(f"invalid layer dimensions {self.dims}")
        self.alpha = float(alpha)
        self.seed = seed
        n = self.param_count_for(self.dims)
        if params is None:
            params = np.zeros(n)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (n,):
            raise ValueError(f"expected {n} parameters, got {params.shape}")
        self.params = params
        self._bind()

    @staticmethod
    def param_count_for(dims) -> int:
        return sum(o * i + o for i, o in zip(dims[:-1], dims[1:]))

    def _bind(self):
        self.weights, self.biases = [], []
        off = 0
        for i, o in zip(self.dims[:-1], self.dims[1:]):
            self.weights.append(self.params[off : off + o * i].reshape(o, i))
            off += o * i
            self.biases.append(self.params[off : off + o])
            off += o

    @property
    def param_count(self) -> int:
        return self.params.size

    @property
    def n_inputs(self) -> int:
        return self.dims[0]

    @property
    def hidden(self) -> int:
        return len(self.dims) - 2

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(self.dims, self.alpha, self.params.copy(), self.seed)

    def __call__(self, q):
        return mlp_forward(self, q)[0]

    def __repr__(self):
        return f"MlpNetwork(dims={self.dims}, alpha={self.alpha})"


def mlp_init(modes: int, hidden: int, width: int, alpha: float = 0.01, seed: int = 0) -> MlpNetwork:
    """Kaiming-normal weights (fan-in, Leaky ReLU gain), zero biases."""
    if hidden < 1 or width < 1:
        raise ValueError("need at least one hidden layer of positive width")
    dims = (modes,) + (width,) * hidden + (modes,)
    net = MlpNetwork(dims, alpha, seed=seed)
    rng = np.random.default_rng(seed)
    gain2 = 2.0 / (1.0 + alpha**2)
    for W in net.weights:
        W[...] = rng.normal(0.0, np.sqrt(gain2 / W.shape[1]), size=W.shape)
    return net


def leaky_relu(z, alpha):
    return np.where(z >= 0.0, z, alpha * z)


def mlp_forward(net: MlpNetwork, q):
    """Returns (output, tape). q is (..., n_inputs)."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] != net.n_inputs:
        raise ValueError(f"network expects {net.n_inputs} inputs, got {q.shape[-1]}")
    acts = [q]
    pre = []
    a = q
    last = len(net.weights) - 1
    for j, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W.T + b
        if j == last:
            return z, (acts, pre)
        pre.append(z)
        a = leaky_relu(z, net.alpha)
        acts.append(a)


def mlp_backward(net: MlpNetwork, tape, grad_out, grad_params=None):
    """Reverse pass of <grad_out, f(q)>, summed over any leading batch axes.

    Returns (grad_params, grad_input). When ``grad_params`` is given the
    parameter gradient is accumulated into it in place.
    """
    acts, pre = tape
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape[-1] != net.dims[-1] or grad_out.shape[:-1] != acts[0].shape[:-1]:
        raise ValueError("grad_out shape does not match the taped forward pass")
    if grad_params is None:
        grad_params = np.zeros_like(net.params)
    gW, gb = _views(net, grad_params)
    g = grad_out
    for j in range(len(net.weights) - 1, -1, -1):
        a = acts[j]
        g2 = g.reshape(-1, g.shape[-1])
        gW[j] += g2.T @ a.reshape(-1, a.shape[-1])
        gb[j] += g2.sum(axis=0)
        g = g @ net.weights[j]
        if j > 0:
            # subgradient at exactly zero taken as 1
            g = g * np.where(pre[j - 1] >= 0.0, 1.0, net.alpha)
    return grad_params, g


def _views(net, flat):
    Ws, bs = [], []
    off = 0
    for i, o in zip(net.dims[:-1], net.dims[1:]):
        Ws.append(flat[off : off + o * i].reshape(o, i))
        off += o * i
        bs.append(flat[off : off + o])
        off += o
    return Ws, bs


def count_mlp_ops(net_or_dims, activation_ops: int = 2) -> int:
    """Multiplications plus additions for one forward pass, naive mat-vec.

    Each output of an (in -> out) layer costs `in` multiplies, `in - 1`
    summations and one bias add, i.e. 2 * in * out per layer. Each Leaky ReLU
    unit counts ``activation_ops`` (a comparison and a multiply by default).
    For 100 -> 5 x 100 -> 100 this gives 120000 + 1000 = 121000.
    """
    dims = net_or_dims.dims if isinstance(net_or_dims, MlpNetwork) else tuple(net_or_dims)
    ops = sum(2 * i * o for i, o in zip(dims[:-1], dims[1:]))
    return ops + activation_ops * sum(dims[1:-1])


@dataclass
class AdamState:
    size: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Bias-corrected Adam; updates ``params`` and ``state`` in place."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    if not np.isfinite(grads).all():
        raise FloatingPointError("non-finite gradient passed to adam_step")
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads**2
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# --- model files -------------------------------------------------------------

MODEL_MAGIC = b"MNMODEL1"
MODEL_VERSION = 1


def save_model(net: MlpNetwork, path) -> None:
    widths = set(net.dims[1:-1])
    header = {
        "version": MODEL_VERSION,
        "M": net.dims[0],
        "H": net.hidden,
        "W": widths.pop() if len(widths) == 1 else None,
        "alpha": net.alpha,
        "seed": net.seed,
        "dims": list(net.dims),
        "layout": "per layer: W (out x in, row-major) then b; float64 little-endian",
    }
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + struct.pack("<I", len(blob)) + blob)
        fh.write(net.params.astype("<f8").tobytes())


def load_model(path) -> MlpNetwork:
    raw = Path(path).read_bytes()
    if raw[:8] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen])
    if header.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {header.get('version')}")
    dims = tuple(header["dims"])
    if dims[0] != header["M"] or dims[-1] != header["M"] or len(dims) - 2 != header["H"]:
        raise ValueError("model header dimensions are inconsistent")
    if header["W"] is not None and any(d != header["W"] for d in dims[1:-1]):
        raise ValueError("hidden widths do not match W")
    body = raw[12 + hlen :]
    n = MlpNetwork.param_count_for(dims)
    if len(body) != 8 * n:
        raise ValueError(f"{path}: expected {8 * n} parameter bytes, found {len(body)}")
    params = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return MlpNetwork(dims, header["alpha"], params, header.get("seed"))
