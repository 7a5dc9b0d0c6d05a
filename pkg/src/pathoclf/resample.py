"""SMOTE over-sampling of minority classes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, DataError, Dataset, check_seed, make_rng

SYNTHETIC_PREFIX = "synthetic:"


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    seed: int = 0
    strategy: str = "equalize-to-majority"

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        if self.strategy != "equalize-to-majority":
            raise ConfigError(f"unknown SMOTE strategy {self.strategy!r}")
        check_seed(self.seed)


def is_synthetic(row_id: str) -> bool:
    return row_id.startswith(SYNTHETIC_PREFIX)


def _class_neighbors(x: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest same-class rows (exact, Euclidean), self excluded."""
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, np.inf)
    # stable sort: equal distances resolve to the lower row index
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote_resample(data: Dataset, cfg: SmoteConfig = SmoteConfig()) -> Dataset:
    """Append synthetic rows until every class matches the majority count.

    Original rows come first and unchanged. Each synthetic row is
    ``x + u * (x_nn - x)`` with ``x`` drawn uniformly from its class, ``x_nn``
    one of its ``k`` nearest same-class neighbours and ``u ~ U[0, 1)``.
    Classes absent from ``data`` stay absent.
    """
    counts = data.class_counts()
    target = counts.max()
    rng = make_rng(cfg.seed, 0x5307E)
    new_x, new_y, new_ids = [], [], []
    for c in range(data.n_classes):
        need = int(target - counts[c])
        if counts[c] == 0 or need == 0:
            continue
        if counts[c] < 2:
            raise DataError(f"class {data.vocab.names[c]!r} too small for SMOTE (1 sample)")
        members = np.flatnonzero(data.labels == c)
        x = data.features[members]
        k = min(cfg.k_neighbors, len(members) - 1)
        nn = _class_neighbors(x, k)
        base = rng.integers(len(members), size=need)
        pick = rng.integers(k, size=need)
        u = rng.random(need)
        other = nn[base, pick]
        synth = x[base] + u[:, None] * (x[other] - x[base])
        new_x.append(synth)
        new_y.append(np.full(need, c))
        new_ids.extend(f"{SYNTHETIC_PREFIX}{data.vocab.names[c]}:{j}" for j in range(need))
    if not new_x:
        return data
    ids = data.row_ids() + tuple(new_ids)
    return Dataset(
        np.vstack([data.features, *new_x]),
        np.concatenate([data.labels, *new_y]),
        data.vocab,
        data.layer,
        ids,
    )
