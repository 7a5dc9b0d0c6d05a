"""Synthetic desk-scale stand-ins for pooled speech embeddings.

Class ``c`` is an isotropic Gaussian around ``sep * std / sqrt(2) * e_c``, so
every pair of class means is exactly ``sep * std`` apart.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DEFAULT_CLASSES, N_LAYERS, ConfigError, Dataset, Vocabulary, make_rng
from .ingest import UtteranceRecord, write_embedding_file, write_manifest

# class shares of the clinical training pool, in DEFAULT_CLASSES order (CTL, CLP, LAR, OSCC, PD)
CLINICAL_SHARES = (0.420, 0.435, 0.030, 0.051, 0.064)


def counts_from_shares(n: int, shares: Sequence[float]) -> np.ndarray:
    """Integer class counts summing to ``n`` (largest remainder, ties to lower index)."""
    shares = np.asarray(shares, dtype=np.float64)
    quota = n * shares / shares.sum()
    counts = np.floor(quota).astype(np.int64)
    rem = quota - counts
    for c in sorted(range(counts.size), key=lambda c: (-rem[c], c))[: n - int(counts.sum())]:
        counts[c] += 1
    return counts


def class_means(k: int, dim: int, separation: float, std: float) -> np.ndarray:
    if dim < k:
        raise ConfigError(f"need dim >= number of classes ({k}), got {dim}")
    means = np.zeros((k, dim))
    means[np.arange(k), np.arange(k)] = separation * std / np.sqrt(2.0)
    return means


def make_blobs(n: int = 1000, shares: Sequence[float] = CLINICAL_SHARES, dim: int = 32,
               separation: float = 5.0, std: float = 1.0, seed: int = 0,
               classes: Sequence[str] = DEFAULT_CLASSES, layer: int | None = None) -> Dataset:
    """Gaussian blobs in shuffled row order, ids ``utt0000``..."""
    vocab = Vocabulary(classes)
    counts = counts_from_shares(n, shares)
    rng = make_rng(seed, 0xB10B)
    labels = np.repeat(np.arange(len(vocab)), counts)
    labels = labels[rng.permutation(n)]
    means = class_means(len(vocab), dim, separation, std)
    x = means[labels] + std * rng.standard_normal((n, dim))
    ids = tuple(f"utt{i:04d}" for i in range(n))
    return Dataset(x, labels, vocab, layer, ids)


def layer_separations(easiest: int, low: float = 1.0, shoulder: float = 3.0, high: float = 6.0) -> list[float]:
    """Per-layer class separation: ``high`` at ``easiest``; elsewhere falling
    linearly from ``shoulder`` (adjacent layers) to ``low`` (farthest layer).

    The gap between ``high`` and ``shoulder`` keeps the easiest layer a clear
    winner rather than a near-tie with its neighbours.
    """
    if not low <= shoulder < high:
        raise ConfigError("need low <= shoulder < high")
    out = []
    for layer in range(1, N_LAYERS + 1):
        dist = abs(layer - easiest)
        out.append(high if dist == 0 else shoulder - (shoulder - low) * (dist - 1) / (N_LAYERS - 2))
    return out


def make_layer_datasets(separations: Sequence[float], n: int = 300, dim: int = 16,
                        shares: Sequence[float] = CLINICAL_SHARES, seed: int = 0,
                        classes: Sequence[str] = DEFAULT_CLASSES) -> dict[int, Dataset]:
    """Same utterances and labels at every layer; only the class separation varies.

    The noise draw is shared across layers so difficulty is the only thing
    that changes.
    """
    base = make_blobs(n, shares, dim, 0.0, 1.0, seed, classes)
    means_unit = class_means(len(base.vocab), dim, 1.0, 1.0)
    out = {}
    for layer, sep in enumerate(separations, start=1):
        x = base.features + sep * means_unit[base.labels]
        out[layer] = Dataset(x, base.labels, base.vocab, layer, base.ids)
    return out


def write_corpus(out_dir, layer_data: dict[int, Dataset], seed: int = 0,
                 frames: tuple[int, int] = (4, 12), corpus_tag: str = "SYN") -> Path:
    """Write EMB1 files whose frame means equal the dataset rows, plus a manifest.

    Frames are row + zero-mean jitter, so mean pooling recovers the row up to
    float32 rounding.
    """
    out_dir = Path(out_dir)
    layers = sorted(layer_data)
    first = layer_data[layers[0]]
    rng = make_rng(seed, 0xC0)
    n_frames = rng.integers(frames[0], frames[1] + 1, size=first.n)
    records = []
    for i, rid in enumerate(first.row_ids()):
        for layer in layers:
            row = layer_data[layer].features[i]
            jitter = rng.standard_normal((int(n_frames[i]), first.dim)) * 0.1
            jitter -= jitter.mean(axis=0)
            write_embedding_file(row + jitter, out_dir / "emb" / f"{rid}.layer{layer}.emb")
        label = first.vocab.names[first.labels[i]]
        records.append(UtteranceRecord(rid, label, f"{corpus_tag}-{label}", f"emb/{rid}.layer{{layer}}.emb",
                                       (("speaker", f"spk{i:04d}"),)))
    path = out_dir / "manifest.csv"
    write_manifest(records, path)
    return path
