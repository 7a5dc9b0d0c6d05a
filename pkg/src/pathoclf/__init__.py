"""Pathological speech classification on pooled self-supervised speech embeddings.

Submodules: ``core`` (datasets, labels, errors), ``ingest`` (manifests and
embedding files), ``augment`` (RIR reverberation), ``resample`` (SMOTE),
``svm``/``gbt``/``ffn`` (classifiers), ``metrics``, ``protocol`` (splits,
grid search, layer sweeps), ``reports``, ``tsne``, ``serialize`` and ``cli``.
"""

from .core import (
    ClassLabel,
    ConfigError,
    DataError,
    Dataset,
    NumericalError,
    PipelineError,
    Vocabulary,
)

__version__ = "0.1.0"

__all__ = [
    "ClassLabel",
    "ConfigError",
    "DataError",
    "Dataset",
    "NumericalError",
    "PipelineError",
    "Vocabulary",
]
