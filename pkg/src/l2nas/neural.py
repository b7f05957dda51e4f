"""Small dense networks with hand-written backprop, Adam, and the check loss.

Everything is float64. An :class:`Mlp` maps a batch ``(n, d_in)`` to
``(n, d_out)``; hidden layers use ReLU and the output is either a sigmoid
(actor) or the identity (critic).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMOID = "sigmoid"
IDENTITY = "identity"
HIDDEN_LAYERS = 3


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ForwardCache:
    inputs: list  # input of each layer
    pre: list  # pre-activation of each layer
    output: np.ndarray


class Mlp:
    """Parameters live in one flat vector ``flat``; ``weights``/``biases`` are views into it."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray], out_act: str):
        if out_act not in (SIGMOID, IDENTITY):
            raise ValueError(f"unknown output activation {out_act!r}")
        self.out_act = out_act
        shapes = []
        for w, b in zip(weights, biases):
            shapes += [np.shape(w), np.shape(b)]
        self._layout = [(sh, int(np.prod(sh))) for sh in shapes]
        self.flat = np.empty(sum(n for _, n in self._layout))
        views = self._views(self.flat)
        for view, arr in zip(views, (x for pair in zip(weights, biases) for x in pair)):
            view[...] = arr
        self.weights = views[0::2]
        self.biases = views[1::2]

    def _views(self, flat: np.ndarray) -> list[np.ndarray]:
        out, offset = [], 0
        for sh, n in self._layout:
            out.append(flat[offset : offset + n].reshape(sh))
            offset += n
        return out

    @classmethod
    def init(cls, dims: list[int], out_act: str, rng: np.random.Generator,
             hidden_layers: int | None = HIDDEN_LAYERS) -> "Mlp":
        """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"invalid layer dims {dims}")
        if hidden_layers is not None and len(dims) != hidden_layers + 2:
            raise ValueError(f"expected {hidden_layers} hidden layers, got dims {dims}")
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, out_act)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def params(self) -> list[np.ndarray]:
        """Parameter arrays in (W0, b0, W1, b1, ...) order; updated in place."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dims[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.dims[0]}")
        inputs, pre = [], []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            pre.append(z)
            if i < last:
                h = np.maximum(z, 0.0)
            elif self.out_act == SIGMOID:
                h = _sigmoid(z)
            else:
                h = z
        return h, ForwardCache(inputs, pre, h)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward_flat(self, cache: ForwardCache, dy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Like :meth:`backward` but returns the parameter gradient as one flat vector."""
        dy = np.asarray(dy, dtype=np.float64)
        if dy.shape != cache.output.shape:
            raise ValueError(f"upstream gradient shape {dy.shape} != output {cache.output.shape}")
        gflat = np.empty_like(self.flat)
        gviews = self._views(gflat)
        if self.out_act == SIGMOID:
            g = dy * cache.output * (1.0 - cache.output)
        else:
            g = dy
        for i in range(len(self.weights) - 1, -1, -1):
            np.matmul(cache.inputs[i].T, g, out=gviews[2 * i])
            np.sum(g, axis=0, out=gviews[2 * i + 1])
            g = g @ self.weights[i].T
            if i > 0:
                # ReLU subgradient at 0 is 0
                g = g * (cache.pre[i - 1] > 0)
        return gflat, g

    def backward(self, cache: ForwardCache, dy: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of ``sum(dy * y)`` w.r.t. params (same order as ``params``) and input."""
        gflat, dx = self.backward_flat(cache, dy)
        return self._views(gflat), dx

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "out_act": self.out_act,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        weights = [np.array(w, dtype=np.float64).reshape(a, b)
                   for w, a, b in zip(d["weights"], d["dims"][:-1], d["dims"][1:])]
        return cls(weights, [np.array(b, dtype=np.float64) for b in d["biases"]], d["out_act"])


@dataclass
class AdamState:
    lr: float
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, lr: float, beta1: float = 0.9, beta2: float = 0.99) -> "AdamState":
        return cls(lr, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   beta1=beta1, beta2=beta2)

    def to_dict(self) -> dict:
        return {
            "lr": self.lr, "t": self.t, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "m": [x.tolist() for x in self.m], "v": [x.tolist() for x in self.v],
        }

    @classmethod
    def from_dict(cls, d: dict, params) -> "AdamState":
        shape = lambda arr, p: np.array(arr, dtype=np.float64).reshape(p.shape)  # noqa: E731
        return cls(
            d["lr"],
            [shape(x, p) for x, p in zip(d["m"], params)],
            [shape(x, p) for x, p in zip(d["v"], params)],
            t=d["t"], beta1=d["beta1"], beta2=d["beta2"], eps=d["eps"],
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        sq = np.multiply(g, g)
        sq *= 1.0 - b2
        v += sq
        # sq is reused as the denominator sqrt(v_hat) + eps
        np.divide(v, c2, out=sq)
        np.sqrt(sq, out=sq)
        sq += state.eps
        step = np.divide(m, c1)
        step /= sq
        step *= state.lr
        p -= step


def check_loss(r, q, tau: float):
    """Pinball loss ``rho_tau(r - q)`` and its derivative with respect to ``q``.

    At ``r == q`` the subgradient ``1 - tau`` is used.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    x = np.asarray(r, dtype=np.float64) - np.asarray(q, dtype=np.float64)
    nonpos = x <= 0
    loss = x * (tau - nonpos)
    dq = np.where(nonpos, 1.0 - tau, -tau)
    if loss.ndim == 0:
        return float(loss), float(dq)
    return loss, dq
