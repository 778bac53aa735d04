"""One-hidden-layer network: tanh hidden units, logistic output, MSE loss.

Parameters are flattened in the fixed order ``W1`` (row-major,
hidden x input), ``b1``, ``W2`` (hidden), ``b2``.  Every optimizer works on
that flat vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True, eq=False)
class NetworkParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_units(self) -> int:
        return self.W1.shape[0]

    @property
    def size(self) -> int:
        return n_params(self.input_dim, self.hidden_units)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2, [self.b2]])

    @classmethod
    def from_flat(cls, w: np.ndarray, input_dim: int, hidden_units: int) -> "NetworkParams":
        w = np.asarray(w, dtype=float)
        if w.shape != (n_params(input_dim, hidden_units),):
            raise ValueError(f"flat vector of length {w.shape} does not fit {input_dim}-{hidden_units}-1")
        h, i = hidden_units, input_dim
        W1 = w[: h * i].reshape(h, i).copy()
        b1 = w[h * i : h * i + h].copy()
        W2 = w[h * i + h : h * i + 2 * h].copy()
        return cls(W1, b1, W2, float(w[-1]))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat())))


def n_params(input_dim: int, hidden_units: int) -> int:
    return hidden_units * input_dim + 2 * hidden_units + 1


def init_network(input_dim: int, hidden_units: int, rng_seed: int = 0) -> NetworkParams:
    """Uniform weights in +-1/sqrt(fan_in) per layer, zero biases."""
    if input_dim < 1 or hidden_units < 1:
        raise ValueError("input_dim and hidden_units must be >= 1")
    rng = np.random.default_rng(rng_seed)
    a1 = 1.0 / np.sqrt(input_dim)
    a2 = 1.0 / np.sqrt(hidden_units)
    W1 = rng.uniform(-a1, a1, size=(hidden_units, input_dim))
    W2 = rng.uniform(-a2, a2, size=hidden_units)
    return NetworkParams(W1, np.zeros(hidden_units), W2, 0.0)


def _check_X(p: NetworkParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != p.input_dim:
        raise ValueError(f"expected (n, {p.input_dim}) input, got {X.shape}")
    return X


def _hidden(p: NetworkParams, X: np.ndarray) -> np.ndarray:
    return np.tanh(X @ p.W1.T + p.b1)


def forward(p: NetworkParams, X) -> np.ndarray:
    X = _check_X(p, X)
    return expit(_hidden(p, X) @ p.W2 + p.b2)


def loss_and_gradient(p: NetworkParams, X, y) -> tuple[float, np.ndarray]:
    """Mean squared error and its exact gradient in flat parameter order."""
    X = _check_X(p, X)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    A = _hidden(p, X)
    o = expit(A @ p.W2 + p.b2)
    r = o - y
    mse = float(r @ r) / n
    # d mse / d pre-output
    delta2 = (2.0 / n) * r * o * (1.0 - o)
    gW2 = A.T @ delta2
    gb2 = delta2.sum()
    delta1 = np.outer(delta2, p.W2) * (1.0 - A * A)
    gW1 = delta1.T @ X
    gb1 = delta1.sum(axis=0)
    return mse, np.concatenate([gW1.ravel(), gb1, gW2, [gb2]])


def jacobian(p: NetworkParams, X) -> np.ndarray:
    """d o_i / d theta_j, which equals d residual_i / d theta_j for r = o - y."""
    X = _check_X(p, X)
    n = X.shape[0]
    A = _hidden(p, X)
    o = expit(A @ p.W2 + p.b2)
    s = o * (1.0 - o)
    dA = s[:, None] * p.W2[None, :] * (1.0 - A * A)  # n x hidden
    JW1 = (dA[:, :, None] * X[:, None, :]).reshape(n, -1)
    return np.hstack([JW1, dA, s[:, None] * A, s[:, None]])
