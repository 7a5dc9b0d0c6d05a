"""Shared domain types, label vocabulary and deterministic randomness.

All randomness in the package flows through :func:`make_rng`, which builds a
numpy ``Generator`` on the PCG64 bit generator (a permuted congruential
generator, i.e. an LCG family member with an output permutation). Streams are
keyed by ``(seed, *keys)`` through ``SeedSequence`` so that a work unit such as
"grid cell 3, fold 2" always sees the same numbers no matter which worker or in
which order it runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_CLASSES = ("CTL", "CLP", "LAR", "OSCC", "PD")
N_LAYERS = 12


class PipelineError(Exception):
    """Base error. ``category`` maps onto CLI exit codes."""

    category = "data"


class ConfigError(PipelineError):
    category = "config"


class DataError(PipelineError):
    category = "data"


class NumericalError(PipelineError):
    category = "numerical"


@dataclass(frozen=True)
class ClassLabel:
    name: str
    index: int


class Vocabulary:
    """Ordered, immutable mapping between class names and contiguous indices."""

    def __init__(self, names: Iterable[str]):
        names = tuple(str(n) for n in names)
        if not names:
            raise ConfigError("vocabulary must contain at least one class")
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate class names in vocabulary: {names}")
        for n in names:
            if not n or "," in n or n.strip() != n:
                raise ConfigError(f"invalid class name {n!r}")
        self._names = names
        self._index = {n: i for i, n in enumerate(names)}

    @classmethod
    def default(cls) -> "Vocabulary":
        return cls(DEFAULT_CLASSES)

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @property
    def labels(self) -> tuple[ClassLabel, ...]:
        return tuple(ClassLabel(n, i) for i, n in enumerate(self._names))

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self):
        return iter(self._names)

    def __contains__(self, name) -> bool:
        return name in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and other._names == self._names

    def __hash__(self) -> int:
        return hash(self._names)

    def __repr__(self) -> str:
        return f"Vocabulary({list(self._names)!r})"

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise DataError(f"unknown class label {name!r}; vocabulary is {list(self._names)}") from None

    def label(self, index: int) -> ClassLabel:
        return ClassLabel(self._names[index], index)

    def encode(self, names: Sequence[str]) -> np.ndarray:
        return np.array([self.index(n) for n in names], dtype=np.int64)


def check_layer(layer: int) -> int:
    if isinstance(layer, bool) or int(layer) != layer or not 1 <= int(layer) <= N_LAYERS:
        raise ConfigError(f"layer must be an integer in [1, {N_LAYERS}], got {layer!r}")
    return int(layer)


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= int(seed) < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return int(seed)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Pooled feature matrix with integer-coded labels.

    ``ids`` tags every row with its provenance (utterance id, or a
    ``synthetic:`` id for rows generated by over-sampling). Arrays are copied
    to float64/int64 and made read-only on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    vocab: Vocabulary
    layer: int | None = None
    ids: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, copy=True)
        if x.ndim != 2:
            raise DataError(f"features must be a 2-D matrix, got shape {x.shape}")
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError(f"dataset must have at least one row and column, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("dataset features contain non-finite values")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DataError(f"labels must be a vector of length {x.shape[0]}")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(y == np.round(y)):
                raise DataError("labels must be integer class indices")
        y = y.astype(np.int64)
        if y.min() < 0 or y.max() >= len(self.vocab):
            raise DataError(f"label index out of range for vocabulary of size {len(self.vocab)}")
        if self.layer is not None:
            object.__setattr__(self, "layer", check_layer(self.layer))
        if self.ids is not None:
            ids = tuple(str(i) for i in self.ids)
            if len(ids) != x.shape[0]:
                raise DataError("ids must have one entry per row")
            object.__setattr__(self, "ids", ids)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.vocab)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        ids = None if self.ids is None else tuple(self.ids[i] for i in index)
        return Dataset(self.features[index], self.labels[index], self.vocab, self.layer, ids)

    def row_ids(self) -> tuple[str, ...]:
        if self.ids is not None:
            return self.ids
        return tuple(f"row{i}" for i in range(self.n))


def argmax_tiebreak(values) -> int:
    """Index of the maximum; ties go to the lowest index."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty vector")
    if v.ndim != 1:
        raise ValueError("argmax_tiebreak expects a 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite values")
    # np.argmax returns the first occurrence of the maximum
    return int(np.argmax(v))


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 stream for ``(seed, *keys)``; identical keys give identical streams."""
    entropy = [check_seed(seed), *(int(k) for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def seeded_shuffle(n: int, seed: int) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be non-negative")
    return make_rng(seed).permutation(n)
