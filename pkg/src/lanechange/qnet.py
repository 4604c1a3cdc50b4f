"""From-scratch fully connected Q-network.

Fixed 8-128-128-128-2 architecture with ReLU hidden layers, exact analytic
backpropagation for the squared TD-error loss, Adam (or plain gradient
descent) updates, and a versioned JSON checkpoint format. Everything is
float64.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

LAYER_DIMS = (8, 128, 128, 128, 2)

CHECKPOINT_VERSION = 1


@dataclass
class Network:
    """Weight matrices (out x in) and bias vectors for each layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "Network":
        return Network(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_network(rng: np.random.Generator) -> Network:
    """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases."""
    weights = []
    biases = []
    for fan_in, fan_out in zip(LAYER_DIMS[:-1], LAYER_DIMS[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return Network(weights=weights, biases=biases)


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Q-values [Q(s, CHANGE), Q(s, KEEP)] for one state or a batch."""
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.shape[1] != LAYER_DIMS[0]:
        raise ValueError(f"expected input of width {LAYER_DIMS[0]}, got {a.shape[1]}")
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w.T + b
        if i != last:
            np.maximum(a, 0.0, out=a)
    return a[0] if single else a


def _forward_cached(net: Network, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    activations = [x]
    pre_acts = []
    a = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        pre_acts.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        activations.append(a)
    return a, activations, pre_acts


def backward(
    net: Network,
    states: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
) -> tuple[Gradients, float]:
    """Exact gradient of the minibatch loss mean((y - Q(s, a))^2).

    The gradient flows only through the taken action's output; targets are
    treated as constants.
    """
    x = np.asarray(states, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != LAYER_DIMS[0]:
        raise ValueError("states must have shape (batch, 8)")
    a_idx = np.asarray(actions, dtype=np.int64)
    y = np.asarray(targets, dtype=np.float64)
    batch = x.shape[0]

    q, activations, pre_acts = _forward_cached(net, x)
    if not np.all(np.isfinite(q)):
        raise FloatingPointError("non-finite values in forward pass")

    rows = np.arange(batch)
    diff = q[rows, a_idx] - y
    loss = float(np.mean(diff**2))

    delta = np.zeros_like(q)
    delta[rows, a_idx] = 2.0 * diff / batch

    grad_w = [np.empty(0)] * len(net.weights)
    grad_b = [np.empty(0)] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        grad_w[i] = delta.T @ activations[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * (pre_acts[i - 1] > 0.0)
    return Gradients(weights=grad_w, biases=grad_b), loss


@dataclass
class OptimizerState:
    """Adam moments (or plain gradient descent when ``plain_sgd``)."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    plain_sgd: bool = False
    step: int = 0
    m_w: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)


def init_optimizer(net: Network, learning_rate: float, plain_sgd: bool = False) -> OptimizerState:
    return OptimizerState(
        learning_rate=learning_rate,
        plain_sgd=plain_sgd,
        m_w=[np.zeros_like(w) for w in net.weights],
        v_w=[np.zeros_like(w) for w in net.weights],
        m_b=[np.zeros_like(b) for b in net.biases],
        v_b=[np.zeros_like(b) for b in net.biases],
    )


def apply_update(net: Network, grads: Gradients, opt: OptimizerState) -> None:
    """One in-place optimizer step."""
    if opt.plain_sgd:
        for i in range(len(net.weights)):
            net.weights[i] -= opt.learning_rate * grads.weights[i]
            net.biases[i] -= opt.learning_rate * grads.biases[i]
        opt.step += 1
        return

    opt.step += 1
    bc1 = 1.0 - opt.beta1**opt.step
    bc2 = 1.0 - opt.beta2**opt.step
    for i in range(len(net.weights)):
        for params, grad, m, v in (
            (net.weights[i], grads.weights[i], opt.m_w[i], opt.v_w[i]),
            (net.biases[i], grads.biases[i], opt.m_b[i], opt.v_b[i]),
        ):
            m *= opt.beta1
            m += (1.0 - opt.beta1) * grad
            v *= opt.beta2
            v += (1.0 - opt.beta2) * grad**2
            m_hat = m / bc1
            v_hat = v / bc2
            params -= opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps)


def save_checkpoint(net: Network, path: str | Path, rng_state: Optional[dict] = None,
                    meta: Optional[dict] = None) -> None:
    """Write a portable JSON checkpoint that round-trips bit-exactly."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "dims": list(LAYER_DIMS),
        "layers": [
            {"weights": w.tolist(), "biases": b.tolist()}
            for w, b in zip(net.weights, net.biases)
        ],
        "rng_state": rng_state,
    }
    if meta:
        payload["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> tuple[Network, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    if tuple(payload["dims"]) != LAYER_DIMS:
        raise ValueError(f"checkpoint dims {payload['dims']} do not match {list(LAYER_DIMS)}")
    weights = []
    biases = []
    for layer in payload["layers"]:
        weights.append(np.asarray(layer["weights"], dtype=np.float64))
        biases.append(np.asarray(layer["biases"], dtype=np.float64))
    net = Network(weights=weights, biases=biases)
    for w, b, fan_in, fan_out in zip(net.weights, net.biases, LAYER_DIMS[:-1], LAYER_DIMS[1:]):
        if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
            raise ValueError("checkpoint layer shapes do not match the architecture")
    return net, {k: payload.get(k) for k in ("rng_state", "meta")}
