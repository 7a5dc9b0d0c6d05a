"""Versioned model container shared by all three classifier families.

A model file is a zip archive (stored, no compression, fixed timestamps, so
identical models give byte-identical files) with these members:

``meta.json``
    ``{"format": "pathoclf-model", "version": 1, "family": "svm"|"gbt"|"ffn",
    "config": {...}, "classes": [...], ...family extras}``
``<name>.npy``
    numpy ``.npy`` arrays, listed per family below.

svm
    ``pairs`` (P x 2 int64), per pair ``p``: ``sv_<p>`` (n_sv x D),
    ``coef_<p>`` (alpha*y), ``alpha_<p>``, ``support_<p>``; ``bias`` (P,),
    ``converged`` (P,), ``n_iter`` (P,); optional ``mean``/``scale``.
gbt
    all trees flattened in round-major, class-minor order: ``node_offsets``
    (n_trees + 1,), ``feature``, ``threshold``, ``left``, ``right``, ``value``,
    ``hess``, ``gain`` (child indices are tree-local); ``base_score``,
    ``loss_curve``.
ffn
    ``sizes`` (layer widths), ``params`` (flat vector: per layer W row-major
    then b), ``loss_curve``.
"""

from __future__ import annotations

import dataclasses
import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .core import DataError, Vocabulary
from . import ffn, gbt, svm

FORMAT = "pathoclf-model"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _put(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def _npy(arr) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
    return buf.getvalue()


def _pack(model) -> tuple[dict, dict[str, np.ndarray]]:
    arrays: dict[str, np.ndarray] = {}
    extra: dict = {}
    if isinstance(model, svm.SvmModel):
        arrays["pairs"] = np.array(model.pairs, dtype=np.int64).reshape(-1, 2)
        for p, m in enumerate(model.machines):
            arrays[f"sv_{p}"] = m.support_vectors
            arrays[f"coef_{p}"] = m.coef
            arrays[f"alpha_{p}"] = m.alpha
            arrays[f"support_{p}"] = m.support
        arrays["bias"] = np.array([m.bias for m in model.machines])
        arrays["converged"] = np.array([m.converged for m in model.machines])
        arrays["n_iter"] = np.array([m.n_iter for m in model.machines], dtype=np.int64)
        if model.mean is not None:
            arrays["mean"] = model.mean
            arrays["scale"] = model.scale
    elif isinstance(model, gbt.GbtModel):
        flat = [t for rnd in model.trees for t in rnd]
        sizes = [t.n_nodes for t in flat]
        arrays["node_offsets"] = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        for key in ("feature", "threshold", "left", "right", "value", "hess", "gain"):
            arrays[key] = np.concatenate([getattr(t, key) for t in flat])
        arrays["base_score"] = model.base_score
        arrays["loss_curve"] = np.array(model.loss_curve)
        extra["dim"] = model.dim
        extra["rounds_fitted"] = len(model.trees)
    elif isinstance(model, ffn.FfnModel):
        arrays["sizes"] = np.array(model.params.sizes, dtype=np.int64)
        arrays["params"] = model.params.flat
        arrays["loss_curve"] = np.array(model.loss_curve)
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return extra, arrays


def save_model(model, path) -> None:
    extra, arrays = _pack(model)
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "family": model.family,
        "config": dataclasses.asdict(model.config),
        "classes": list(model.vocab.names),
        **extra,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w") as zf:
        _put(zf, "meta.json", json.dumps(meta, sort_keys=True, indent=1).encode())
        for name in sorted(arrays):
            _put(zf, f"{name}.npy", _npy(arrays[name]))


def load_model(path):
    path = Path(path)
    try:
        zf = zipfile.ZipFile(path)
    except FileNotFoundError:
        raise DataError(f"{path}: model file not found") from None
    except zipfile.BadZipFile:
        raise DataError(f"{path}: not a model container") from None
    with zf:
        names = set(zf.namelist())
        if "meta.json" not in names:
            raise DataError(f"{path}: missing meta.json")
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format") != FORMAT:
            raise DataError(f"{path}: unknown container format {meta.get('format')!r}")
        if meta.get("version") != VERSION:
            raise DataError(f"{path}: unsupported container version {meta.get('version')!r}")
        arr = {n[:-4]: np.lib.format.read_array(io.BytesIO(zf.read(n)), allow_pickle=False)
               for n in names if n.endswith(".npy")}
    vocab = Vocabulary(meta["classes"])
    family = meta["family"]
    if family == "svm":
        cfg = svm.RbfSvmConfig(**meta["config"])
        pairs = [tuple(int(v) for v in p) for p in arr["pairs"]]
        machines = [
            svm.BinarySvm(arr[f"sv_{p}"], arr[f"coef_{p}"], float(arr["bias"][p]), cfg.gamma, cfg.c,
                          arr[f"alpha_{p}"], arr[f"support_{p}"], int(arr["n_iter"][p]),
                          bool(arr["converged"][p]))
            for p in range(len(pairs))
        ]
        return svm.SvmModel(cfg, vocab, pairs, machines, arr.get("mean"), arr.get("scale"))
    if family == "gbt":
        cfg = gbt.GbtConfig(**meta["config"])
        off = arr["node_offsets"]
        flat = [
            gbt.Tree(*(arr[k][off[i]:off[i + 1]].copy()
                       for k in ("feature", "threshold", "left", "right", "value", "hess", "gain")))
            for i in range(off.size - 1)
        ]
        k = len(vocab)
        trees = [flat[r * k:(r + 1) * k] for r in range(meta["rounds_fitted"])]
        return gbt.GbtModel(cfg, vocab, int(meta["dim"]), trees, arr["base_score"], arr["loss_curve"].tolist())
    if family == "ffn":
        cfg = ffn.FfnConfig(**meta["config"])
        params = ffn.Params(arr["sizes"].tolist(), arr["params"].copy())
        return ffn.FfnModel(cfg, vocab, params, arr["loss_curve"].tolist())
    raise DataError(f"{path}: unknown model family {family!r}")
