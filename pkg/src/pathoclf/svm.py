"""RBF-kernel soft-margin SVM trained with SMO, one-vs-one for multiclass.

The binary solver follows the LIBSVM formulation: minimise
``0.5 a'Qa - e'a`` subject to ``0 <= a <= C`` and ``y'a = 0`` with
``Q_ij = y_i y_j K(x_i, x_j)``, picking the working pair with second-order
information and stopping when the maximal KKT violation drops below ``tol``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import ConfigError, DataError, Dataset, Vocabulary

TAU = 1e-12
# memory budget for cached kernel rows, in float64 entries (64 MiB)
_CACHE_ENTRIES = 8 * 1024 * 1024


@dataclass(frozen=True)
class RbfSvmConfig:
    c: float = 1.0
    gamma: float = 0.1
    tol: float = 1e-3
    max_iter: int = 1_000_000
    standardize: bool = False

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError(f"C must be positive, got {self.c}")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_matrix(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix between the rows of ``a`` and ``b``."""
    sa = np.einsum("ij,ij->i", a, a)
    sb = np.einsum("ij,ij->i", b, b)
    d2 = sa[:, None] + sb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


@numba.njit(cache=True)
def _kernel_row(x, sq, i, gamma, out):
    n, d = x.shape
    for t in range(n):
        dot = 0.0
        for k in range(d):
            dot += x[i, k] * x[t, k]
        d2 = sq[i] + sq[t] - 2.0 * dot
        if d2 < 0.0:
            d2 = 0.0
        out[t] = np.exp(-gamma * d2)


@numba.njit(cache=True)
def _get_row(x, sq, gamma, cache, tags, i):
    slot = i % cache.shape[0]
    if tags[slot] != i:
        _kernel_row(x, sq, i, gamma, cache[slot])
        tags[slot] = i
    return cache[slot]


@numba.njit(cache=True)
def _smo(x, y, c, gamma, tol, max_iter, cache_rows):
    n = x.shape[0]
    sq = np.empty(n)
    for t in range(n):
        s = 0.0
        for k in range(x.shape[1]):
            s += x[t, k] * x[t, k]
        sq[t] = s
    cache = np.empty((cache_rows, n))
    tags = np.full(cache_rows, -1, dtype=np.int64)
    # RBF diagonal is exactly 1
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    converged = False
    while it < max_iter:
        # select i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < c:
                    v = -grad[t]
                    if v > gmax:
                        gmax = v
                        i = t
            else:
                if alpha[t] > 0:
                    v = grad[t]
                    if v > gmax:
                        gmax = v
                        i = t
        if i == -1:
            converged = True
            break
        ki = _get_row(x, sq, gamma, cache, tags, i).copy()
        # select j in I_low by second-order gain
        gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        for t in range(n):
            if y[t] > 0:
                in_low = alpha[t] > 0
                yg = grad[t]
            else:
                in_low = alpha[t] < c
                yg = -grad[t]
            if not in_low:
                continue
            if yg > gmax2:
                gmax2 = yg
            b = gmax + yg
            if b > 0:
                a = 2.0 - 2.0 * ki[t]
                if a <= 0:
                    a = TAU
                o = -(b * b) / a
                if o <= obj_min:
                    if o < obj_min or j == -1:
                        obj_min = o
                        j = t
        if gmax + gmax2 < tol or j == -1:
            converged = True
            break
        it += 1
        kj = _get_row(x, sq, gamma, cache, tags, j)
        # Q entries
        qii = 1.0
        qjj = 1.0
        qij = y[i] * y[j] * ki[j]
        old_ai = alpha[i]
        old_aj = alpha[j]
        if y[i] != y[j]:
            quad = qii + qjj + 2.0 * qij
            if quad <= 0:
                quad = TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = c - diff
            else:
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = c + diff
        else:
            quad = qii + qjj - 2.0 * qij
            if quad <= 0:
                quad = TAU
            delta = (grad[i] - grad[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > c:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = s - c
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > c:
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = s - c
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - old_ai
        daj = alpha[j] - old_aj
        for t in range(n):
            grad[t] += y[t] * (y[i] * ki[t] * dai + y[j] * kj[t] * daj)
    # bias: average over free vectors, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    s = 0.0
    nfree = 0
    for t in range(n):
        yg = y[t] * grad[t]
        if alpha[t] >= c:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            s += yg
    if nfree > 0:
        rho = s / nfree
    else:
        rho = (ub + lb) / 2.0
    return alpha, rho, it, converged


@dataclass(eq=False)
class BinarySvm:
    """Decision function ``f(x) = sum_i coef_i K(sv_i, x) + bias``.

    ``coef`` holds ``alpha_i * y_i``; ``alpha`` and ``support`` (row indices
    into the training set) are kept for auditing.
    """

    support_vectors: np.ndarray
    coef: np.ndarray
    bias: float
    gamma: float
    c: float
    alpha: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)
    n_iter: int = 0
    converged: bool = True

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.support_vectors.shape[1]:
            raise DataError(f"dimension mismatch: model expects D={self.support_vectors.shape[1]}, got {x.shape[1]}")
        if self.support_vectors.shape[0] == 0:
            return np.full(x.shape[0], self.bias)
        return rbf_matrix(x, self.support_vectors, self.gamma) @ self.coef + self.bias


def fit_binary(x: np.ndarray, y: np.ndarray, cfg: RbfSvmConfig) -> BinarySvm:
    """Train on rows ``x`` with labels ``y`` in {+1, -1}."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DataError("binary SVM needs both classes present")
    if not np.all(np.abs(y) == 1):
        raise DataError("binary labels must be +1 or -1")
    n = x.shape[0]
    cache_rows = max(2, min(n, _CACHE_ENTRIES // max(n, 1)))
    alpha, rho, n_iter, converged = _smo(x, y, float(cfg.c), float(cfg.gamma), float(cfg.tol),
                                         int(cfg.max_iter), cache_rows)
    if not converged:
        warnings.warn(f"SMO hit the iteration cap ({cfg.max_iter}) before reaching tol={cfg.tol}",
                      RuntimeWarning, stacklevel=2)
    sv = np.flatnonzero(alpha > 0)
    return BinarySvm(
        support_vectors=x[sv].copy(),
        coef=(alpha[sv] * y[sv]),
        bias=-float(rho),
        gamma=float(cfg.gamma),
        c=float(cfg.c),
        alpha=alpha,
        support=sv,
        n_iter=int(n_iter),
        converged=bool(converged),
    )


def dual_objective(alpha: np.ndarray, y: np.ndarray, kernel: np.ndarray) -> float:
    """``sum(a) - 0.5 * sum_ij a_i a_j y_i y_j K_ij`` (to be maximised)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ kernel @ ay)


@dataclass(eq=False)
class SvmModel:
    family = "svm"

    config: RbfSvmConfig
    vocab: Vocabulary
    pairs: list[tuple[int, int]]
    machines: list[BinarySvm]
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.machines[0].support_vectors.shape[1]

    def _prepare(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise DataError(f"dimension mismatch: model expects D={self.dim}, got {x.shape[1]}")
        if self.mean is not None:
            x = (x - self.mean) / self.scale
        return x

    def pairwise_decisions(self, x) -> np.ndarray:
        """N x P matrix of pairwise decision values, one column per class pair."""
        x = self._prepare(x)
        return np.column_stack([m.decision_function(x) for m in self.machines])

    def votes(self, x) -> np.ndarray:
        return tally_votes(self.pairwise_decisions(x), self.pairs, len(self.vocab))[0]

    def predict(self, x) -> np.ndarray:
        dec = self.pairwise_decisions(x)
        return decode_votes(dec, self.pairs, len(self.vocab))

    def scores(self, x) -> np.ndarray:
        """Per-class vote counts."""
        return self.votes(x).astype(np.float64)


def tally_votes(dec: np.ndarray, pairs, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Vote counts and summed |decision| of the won duels, per class.

    For pair ``(a, b)`` a non-negative decision is a vote for ``a``.
    """
    n = dec.shape[0]
    votes = np.zeros((n, k), dtype=np.int64)
    conf = np.zeros((n, k))
    rows = np.arange(n)
    for p, (a, b) in enumerate(pairs):
        d = dec[:, p]
        winner = np.where(d >= 0, a, b)
        votes[rows, winner] += 1
        conf[rows, winner] += np.abs(d)
    return votes, conf


def decode_votes(dec: np.ndarray, pairs, k: int) -> np.ndarray:
    """Majority vote; ties by summed |decision|, then lowest class index."""
    votes, conf = tally_votes(dec, pairs, k)
    out = np.empty(dec.shape[0], dtype=np.int64)
    for r in range(dec.shape[0]):
        tied = np.flatnonzero(votes[r] == votes[r].max())
        if tied.size == 1:
            out[r] = tied[0]
        else:
            out[r] = tied[int(np.argmax(conf[r, tied]))]
    return out


def fit(data: Dataset, cfg: RbfSvmConfig) -> SvmModel:
    k = data.n_classes
    if k < 2:
        raise DataError("SVM needs at least 2 classes in the vocabulary")
    counts = data.class_counts()
    if np.any(counts == 0):
        empty = [data.vocab.names[c] for c in np.flatnonzero(counts == 0)]
        raise DataError(f"classes with no training rows: {empty}")
    x = data.features
    mean = scale = None
    if cfg.standardize:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0
        x = (x - mean) / scale
    pairs, machines = [], []
    for a in range(k):
        for b in range(a + 1, k):
            rows = np.flatnonzero((data.labels == a) | (data.labels == b))
            y = np.where(data.labels[rows] == a, 1.0, -1.0)
            machines.append(fit_binary(x[rows], y, cfg))
            pairs.append((a, b))
    return SvmModel(cfg, data.vocab, pairs, machines, mean, scale)
