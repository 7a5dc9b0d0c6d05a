"""Exact t-SNE for 2-D corpus maps.

Input affinities come from Gaussian conditionals whose bandwidths are found by
bisection so every row hits the requested perplexity; output affinities use a
Student-t kernel with one degree of freedom. Optimisation is plain gradient
descent with momentum, early exaggeration and per-coordinate adaptive gains.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ConfigError, DataError, Dataset, NumericalError, check_seed, make_rng


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    init_std: float = 1e-4
    min_gain: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.perplexity > 1:
            raise ConfigError("perplexity must be > 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be positive")
        check_seed(self.seed)


@dataclass(eq=False)
class TsneEmbedding:
    coords: np.ndarray
    ids: tuple[str, ...]
    labels: tuple[str, ...]
    corpus: tuple[str, ...]
    kl_trace: list[tuple[int, float]] = field(default_factory=list)

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "corpus", "label", "x", "y"])
            for i in range(self.coords.shape[0]):
                w.writerow([self.ids[i], self.corpus[i], self.labels[i],
                            f"{self.coords[i, 0]:.10g}", f"{self.coords[i, 1]:.10g}"])


def squared_distances(x: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _row_conditional(d: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Conditional row for precision ``beta`` and its entropy in nats."""
    shifted = d - d.min()
    p = np.exp(-beta * shifted)
    s = p.sum()
    h = np.log(s) + beta * np.dot(shifted, p) / s
    return p / s, h


def conditional_rows(d2: np.ndarray, perplexity: float, tol: float = 1e-10,
                     max_iter: int = 200) -> np.ndarray:
    """Row-stochastic matrix of conditionals p_{j|i} at the target perplexity."""
    n = d2.shape[0]
    if not 1 < perplexity < n:
        raise ConfigError(f"perplexity must lie in (1, N={n}), got {perplexity}")
    target = np.log(perplexity)
    out = np.zeros_like(d2)
    for i in range(n):
        d = np.delete(d2[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_iter):
            p, h = _row_conditional(d, beta)
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
        else:
            if abs(h - target) > 1e-6:
                raise NumericalError(f"perplexity search failed to bracket the target for point {i}")
        out[i, np.arange(n) != i] = p
    return out


def conditional_p(d2: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrised joint affinities ``(P + P^T) / 2N`` with zero diagonal."""
    d2 = np.asarray(d2, dtype=np.float64)
    cond = conditional_rows(d2, perplexity)
    p = (cond + cond.T) / (2.0 * d2.shape[0])
    return p / p.sum()


def student_q(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Output affinities Q and the unnormalised kernel ``1/(1+|yi-yj|^2)``."""
    num = 1.0 / (1.0 + squared_distances(y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(p: np.ndarray, y: np.ndarray) -> float:
    q, _ = student_q(y)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_gradient(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    q, num = student_q(y)
    w = (p - q) * num
    return 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)


def run_tsne(data: Dataset, cfg: TsneConfig = TsneConfig(), corpus: Sequence[str] | None = None,
             dims: int = 2) -> TsneEmbedding:
    n = data.n
    if n < 4:
        raise DataError("t-SNE needs at least 4 points")
    p = conditional_p(squared_distances(data.features), cfg.perplexity)
    rng = make_rng(cfg.seed, 0x75E)
    y = rng.standard_normal((n, dims)) * cfg.init_std
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    trace = []
    for it in range(1, cfg.iterations + 1):
        exag = cfg.exaggeration if it <= cfg.exaggeration_iters else 1.0
        mom = cfg.momentum if it <= cfg.momentum_switch else cfg.final_momentum
        grad = kl_gradient(exag * p, y)
        same = (grad > 0) == (update > 0)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, cfg.min_gain, out=gains)
        update = mom * update - cfg.learning_rate * gains * grad
        y = y + update
        y -= y.mean(axis=0)
        if it % 50 == 0 or it == cfg.iterations:
            kl = kl_divergence(p, y)
            if not np.isfinite(kl):
                raise NumericalError(f"t-SNE KL divergence became non-finite at iteration {it}")
            trace.append((it, kl))
    y -= y.mean(axis=0)
    labels = tuple(data.vocab.names[c] for c in data.labels)
    corpus = tuple(corpus) if corpus is not None else labels
    return TsneEmbedding(y, data.row_ids(), labels, corpus, trace)
