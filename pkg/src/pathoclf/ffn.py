"""Fully connected feedforward classifier trained with Adam.

Loss is mean softmax cross-entropy plus ``l2/2 * sum(W**2)`` over weight
matrices (biases are not penalised). All parameters live in one flat float64
buffer; the per-layer weights and biases are views into it, which lets Adam
update everything with a few vector operations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .core import ConfigError, DataError, Dataset, NumericalError, Vocabulary, check_seed, make_rng

ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class FfnConfig:
    lr: float = 1e-3
    beta1: float = 0.90
    beta2: float = 0.99
    l2: float = 1e-4
    activation: str = "tanh"
    hidden_layers: int = 2
    hidden_units: int = 64
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.hidden_layers not in (2, 3):
            raise ConfigError(f"hidden_layers must be 2 or 3, got {self.hidden_layers}")
        if self.hidden_units < 1:
            raise ConfigError("hidden_units must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.l2 < 0:
            raise ConfigError("l2 must be >= 0")
        check_seed(self.seed)


def layer_sizes(dim: int, n_classes: int, cfg: FfnConfig) -> list[int]:
    return [dim] + [cfg.hidden_units] * cfg.hidden_layers + [n_classes]


class Params:
    """Flat parameter vector with per-layer ``weights``/``biases`` views."""

    def __init__(self, sizes, flat=None):
        self.sizes = list(sizes)
        total = sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))
        self.flat = np.zeros(total) if flat is None else np.asarray(flat, dtype=np.float64)
        if self.flat.shape != (total,):
            raise ValueError(f"expected {total} parameters, got {self.flat.shape}")
        self.weights, self.biases = [], []
        off = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            self.weights.append(self.flat[off:off + a * b].reshape(a, b))
            off += a * b
            self.biases.append(self.flat[off:off + b])
            off += b
        self.weight_mask = np.zeros(total, dtype=bool)
        off = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            self.weight_mask[off:off + a * b] = True
            off += a * b + b

    def copy(self) -> "Params":
        return Params(self.sizes, self.flat.copy())

    def zeros_like(self) -> "Params":
        return Params(self.sizes)


def init_params(sizes, seed: int) -> Params:
    p = Params(sizes)
    rng = make_rng(seed, 0xFF1)
    for w in p.weights:
        limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return p


def _act(z, kind):
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward_logits(params: Params, x: np.ndarray, activation: str) -> np.ndarray:
    a = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        a = z if i == last else _act(z, activation)
    return a


def loss_and_grad(params: Params, x: np.ndarray, y: np.ndarray, activation: str, l2: float,
                  grad: Params | None = None) -> tuple[float, Params]:
    """Mean cross-entropy + L2 penalty, and its gradient w.r.t. every parameter."""
    if x.shape[0] == 0:
        raise DataError("empty batch")
    if grad is None:
        grad = params.zeros_like()
    acts = [x]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w + b
        acts.append(z if i == last else _act(z, activation))
    logits = acts[-1]
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    n = x.shape[0]
    rows = np.arange(n)
    data_loss = float(np.mean(lse - z[rows, y]))
    penalty = 0.5 * l2 * sum(float(np.vdot(w, w)) for w in params.weights)
    delta = np.exp(z - lse[:, None])
    delta[rows, y] -= 1.0
    delta /= n
    for i in range(last, -1, -1):
        np.matmul(acts[i].T, delta, out=grad.weights[i])
        grad.weights[i] += l2 * params.weights[i]
        np.sum(delta, axis=0, out=grad.biases[i])
        if i > 0:
            back = delta @ params.weights[i].T
            if activation == "tanh":
                delta = back * (1.0 - acts[i] * acts[i])
            else:
                delta = back * (acts[i] > 0)
    return data_loss + penalty, grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


@numba.njit(cache=True)
def _adam(theta, g, m, v, lr, b1, b2, eps, c1, c2):
    for i in range(theta.size):
        m[i] = b1 * m[i] + (1.0 - b1) * g[i]
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
        theta[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)
    return theta


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, cfg: FfnConfig, t: int) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    _adam(params, grads, state.m, state.v, float(cfg.lr), float(cfg.beta1), float(cfg.beta2),
          float(cfg.adam_epsilon), 1.0 - cfg.beta1 ** t, 1.0 - cfg.beta2 ** t)


@dataclass(eq=False)
class FfnModel:
    family = "ffn"

    config: FfnConfig
    vocab: Vocabulary
    params: Params
    loss_curve: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.params.sizes[0]

    def _check(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise DataError(f"dimension mismatch: model expects D={self.dim}, got {x.shape[1]}")
        return x

    def forward(self, x) -> np.ndarray:
        return _softmax(forward_logits(self.params, self._check(x), self.config.activation))

    predict_proba = forward

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.forward(x), axis=1)

    def scores(self, x) -> np.ndarray:
        return self.forward(x)


def fit(data: Dataset, cfg: FfnConfig) -> FfnModel:
    if data.n_classes < 2:
        raise DataError("FFN needs K >= 2 classes")
    x = data.features
    y = data.labels
    sizes = layer_sizes(data.dim, data.n_classes, cfg)
    params = init_params(sizes, cfg.seed)
    grad = params.zeros_like()
    state = AdamState.zeros(params.flat.size)
    rng = make_rng(cfg.seed, 0xBA7C)
    batch = min(cfg.batch_size, data.n)
    t = 0
    curve = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(data.n)
        total = 0.0
        for start in range(0, data.n, batch):
            idx = perm[start:start + batch]
            # overflow surfaces as a non-finite loss, reported below
            with np.errstate(over="ignore", invalid="ignore"):
                loss, _ = loss_and_grad(params, x[idx], y[idx], cfg.activation, cfg.l2, grad)
            t += 1
            if not np.isfinite(loss):
                raise NumericalError(f"FFN training diverged at epoch {epoch + 1}, step {t}")
            adam_step(params.flat, grad.flat, state, cfg, t)
            total += loss * idx.size
        curve.append(total / data.n)
        if not np.all(np.isfinite(params.flat)):
            raise NumericalError(f"FFN parameters became non-finite in epoch {epoch + 1}")
    if not np.all(np.isfinite(params.flat)):
        raise NumericalError("FFN parameters became non-finite")
    return FfnModel(cfg, data.vocab, params, curve)
