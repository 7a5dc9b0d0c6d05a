"""Second-order gradient tree boosting with a softmax objective.

One regression tree per class and round is grown on the per-row gradients
``g = p - onehot(y)`` and hessians ``h = p (1 - p)`` of the multiclass log-loss.
Splits are exact and greedy: every midpoint between consecutive distinct
values of every feature is scored with

    gain = 0.5 * (GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam))

and leaves get weight ``-G/(H+lam)``. A row goes left when ``x[f] < threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .core import ConfigError, DataError, Dataset, Vocabulary, check_seed


@dataclass(frozen=True)
class GbtConfig:
    max_depth: int = 6
    eta: float = 0.3
    min_child_weight: float = 1.0
    rounds: int = 100
    lam: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if not 0 < self.eta <= 1:
            raise ConfigError(f"eta must be in (0, 1], got {self.eta}")
        if self.min_child_weight < 0:
            raise ConfigError("min_child_weight must be >= 0")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        check_seed(self.seed)


@dataclass(eq=False)
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    hess: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def depth(self) -> int:
        return _depth(self.left, self.right)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return _predict_tree(np.ascontiguousarray(x, dtype=np.float64), self.feature, self.threshold,
                             self.left, self.right, self.value)


@numba.njit(cache=True)
def _depth(left, right):
    depth = np.zeros(left.size, dtype=np.int64)
    best = 0
    for nd in range(left.size):
        if left[nd] >= 0:
            depth[left[nd]] = depth[nd] + 1
            depth[right[nd]] = depth[nd] + 1
            if depth[nd] + 1 > best:
                best = depth[nd] + 1
    return best


@numba.njit(cache=True)
def _predict_tree(x, feature, threshold, left, right, value):
    out = np.empty(x.shape[0])
    for r in range(x.shape[0]):
        nd = 0
        while feature[nd] >= 0:
            if x[r, feature[nd]] < threshold[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        out[r] = value[nd]
    return out


@numba.njit(cache=True)
def _build(x, order, xs, g, h, max_depth, min_child_weight, lam):
    n, d = x.shape
    cap = 2 * n - 1
    if max_depth < 30:
        cap = min(cap, 2 ** (max_depth + 1) - 1)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    gsum = np.zeros(cap)
    hsum = np.zeros(cap)
    gain_out = np.zeros(cap)
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)
    node_of = np.zeros(n, dtype=np.int64)
    # per feature, row indices sorted by value and grouped into contiguous node segments
    idx = order.copy()
    vals = xs.copy()
    buf_i = np.empty(n, dtype=np.int64)
    buf_v = np.empty(n)
    go_left = np.zeros(n, dtype=np.bool_)
    for r in range(n):
        gsum[0] += g[r]
        hsum[0] += h[r]
    stop[0] = n
    n_nodes = 1
    active = np.zeros(1, dtype=np.int64)
    for depth in range(max_depth):
        nxt = np.empty(2 * active.size, dtype=np.int64)
        n_next = 0
        for a in range(active.size):
            nd = active[a]
            G = gsum[nd]
            H = hsum[nd]
            parent = G * G / (H + lam)
            best = parent
            best_f = -1
            best_t = 0.0
            lo = start[nd]
            hi = stop[nd]
            for f in range(d):
                gl = 0.0
                hl = 0.0
                prev = vals[f, lo]
                for q in range(lo, hi):
                    v = vals[f, q]
                    if v > prev:
                        hr = H - hl
                        if hl >= min_child_weight and hr >= min_child_weight:
                            gr = G - gl
                            # GL^2/(HL+lam) + GR^2/(HR+lam) > best, without dividing per candidate
                            dl = hl + lam
                            dr = hr + lam
                            if gl * gl * dr + gr * gr * dl > best * (dl * dr):
                                best = gl * gl / dl + gr * gr / dr
                                best_f = f
                                best_t = 0.5 * (prev + v)
                                if best_t <= prev:
                                    best_t = v
                    r = idx[f, q]
                    gl += g[r]
                    hl += h[r]
                    prev = v
            gain = 0.5 * (best - parent)
            if best_f < 0 or not gain > 0.0:
                continue
            feature[nd] = best_f
            threshold[nd] = best_t
            gain_out[nd] = gain
            lc = n_nodes
            rc = n_nodes + 1
            left[nd] = lc
            right[nd] = rc
            n_nodes += 2
            nxt[n_next] = lc
            nxt[n_next + 1] = rc
            n_next += 2
            n_left = 0
            for q in range(lo, hi):
                r = idx[0, q]
                if x[r, best_f] < best_t:
                    go_left[r] = True
                    node_of[r] = lc
                    gsum[lc] += g[r]
                    hsum[lc] += h[r]
                    n_left += 1
                else:
                    go_left[r] = False
                    node_of[r] = rc
                    gsum[rc] += g[r]
                    hsum[rc] += h[r]
            start[lc] = lo
            stop[lc] = lo + n_left
            start[rc] = lo + n_left
            stop[rc] = hi
            if depth == max_depth - 1:
                continue
            # stable partition of every feature's segment
            for f in range(d):
                kl = lo
                kr = 0
                for q in range(lo, hi):
                    r = idx[f, q]
                    if go_left[r]:
                        idx[f, kl] = r
                        vals[f, kl] = vals[f, q]
                        kl += 1
                    else:
                        buf_i[kr] = r
                        buf_v[kr] = vals[f, q]
                        kr += 1
                for q in range(kr):
                    idx[f, kl + q] = buf_i[q]
                    vals[f, kl + q] = buf_v[q]
        if n_next == 0:
            break
        active = nxt[:n_next]
    value = np.zeros(n_nodes)
    for nd in range(n_nodes):
        value[nd] = -gsum[nd] / (hsum[nd] + lam)
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value, hsum[:n_nodes].copy(), gain_out[:n_nodes].copy(), node_of)


def presort(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature row order and sorted values (both D x N).

    The sort is stable so equal values keep row order.
    """
    order = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T)
    values = np.ascontiguousarray(np.take_along_axis(x.T, order, axis=1))
    return order, values


def build_tree(x: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: GbtConfig,
               order: tuple[np.ndarray, np.ndarray] | None = None) -> Tree:
    x = np.ascontiguousarray(x, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    if x.shape[0] < 1 or g.shape != (x.shape[0],) or h.shape != (x.shape[0],):
        raise DataError("build_tree needs N >= 1 rows and matching g, h vectors")
    if order is None:
        order = presort(x)
    tree, _ = _build_with_rows(x, order, g, h, cfg)
    return tree


def _build_with_rows(x, order, g, h, cfg):
    f, t, lft, rgt, v, hs, gn, node_of = _build(x, order[0], order[1], g, h, int(cfg.max_depth),
                                                 float(cfg.min_child_weight), float(cfg.lam))
    return Tree(f, t, lft, rgt, v, hs, gn), node_of


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_grad_hess(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    p = softmax(logits)
    onehot = np.zeros_like(p)
    onehot[np.arange(p.shape[0]), labels] = 1.0
    return p - onehot, p * (1.0 - p)


def log_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean multiclass cross-entropy of softmax(logits)."""
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(lse - z[np.arange(z.shape[0]), labels]))


@dataclass(eq=False)
class GbtModel:
    family = "gbt"

    config: GbtConfig
    vocab: Vocabulary
    dim: int
    trees: list[list[Tree]]
    base_score: np.ndarray = field(default=None)
    loss_curve: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.base_score is None:
            self.base_score = np.zeros(len(self.vocab))

    def _check(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise DataError(f"dimension mismatch: model expects D={self.dim}, got {x.shape[1]}")
        return np.ascontiguousarray(x)

    def decision_function(self, x) -> np.ndarray:
        x = self._check(x)
        out = np.tile(self.base_score, (x.shape[0], 1))
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                out[:, k] += self.config.eta * tree.predict(x)
        return out

    def predict_proba(self, x) -> np.ndarray:
        return softmax(self.decision_function(x))

    def predict(self, x) -> np.ndarray:
        # np.argmax takes the first maximum, matching argmax_tiebreak
        return np.argmax(self.predict_proba(x), axis=1)

    def scores(self, x) -> np.ndarray:
        return self.predict_proba(x)


def fit(data: Dataset, cfg: GbtConfig) -> GbtModel:
    k = data.n_classes
    if k < 2 or np.count_nonzero(data.class_counts()) < 2:
        raise DataError("gradient boosting needs K >= 2 classes with training rows")
    x = np.ascontiguousarray(data.features)
    y = data.labels
    order = presort(x)
    logits = np.zeros((data.n, k))
    losses = [log_loss(logits, y)]
    trees: list[list[Tree]] = []
    for _ in range(cfg.rounds):
        g, h = softmax_grad_hess(logits, y)
        round_trees = []
        for c in range(k):
            tree, node_of = _build_with_rows(x, order, np.ascontiguousarray(g[:, c]),
                                             np.ascontiguousarray(h[:, c]), cfg)
            round_trees.append((tree, node_of))
        # update after all classes so every tree in a round sees the same gradients
        for c, (tree, node_of) in enumerate(round_trees):
            logits[:, c] += cfg.eta * tree.value[node_of]
        round_trees = [t for t, _ in round_trees]
        trees.append(round_trees)
        losses.append(log_loss(logits, y))
    return GbtModel(cfg, data.vocab, data.dim, trees, np.zeros(k), losses)
