"""Experiment protocol: stratified splits, grid-search CV, layer sweeps.

Every random draw is keyed on ``(seed, purpose, cell, fold)`` through
:func:`pathoclf.core.make_rng`, so results do not depend on the number of
workers or on the order in which work units finish.
"""

from __future__ import annotations

import itertools
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .core import N_LAYERS, ConfigError, DataError, Dataset, PipelineError, make_rng
from .metrics import MetricsReport, evaluate, macro_f1
from .models import Family, get_family
from .resample import SmoteConfig, is_synthetic, smote_resample

# stream tags for make_rng
_SPLIT, _FOLDS, _SMOTE, _MODEL = 1, 2, 3, 4


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_test_counts(class_counts: Sequence[int], fraction: float) -> np.ndarray:
    """Per-class test sizes by largest remainder, summing to round(N * fraction).

    Remainder ties go to the lower class index.
    """
    counts = np.asarray(class_counts, dtype=np.int64)
    quota = counts * fraction
    base = np.floor(quota).astype(np.int64)
    target = _round_half_up(counts.sum() * fraction)
    rem = quota - base
    order = sorted(range(counts.size), key=lambda c: (-rem[c], c))
    for c in order[: max(0, target - int(base.sum()))]:
        base[c] += 1
    return base


def stratified_split(data: Dataset, test_fraction: float, seed: int,
                     groups: Sequence[str] | None = None) -> tuple[Dataset, Dataset]:
    """Stratified train/test split.

    With ``groups`` (e.g. speaker ids), whole groups move to the test side
    until each class reaches its quota, so no group straddles the split.
    """
    if not 0 < test_fraction < 1:
        raise ConfigError(f"test fraction must lie in (0, 1), got {test_fraction}")
    counts = data.class_counts()
    small = [data.vocab.names[c] for c in range(data.n_classes) if 0 < counts[c] < 2]
    if small:
        raise DataError(f"classes too small to split (need >= 2 samples): {small}")
    quotas = split_test_counts(counts, test_fraction)
    rng = make_rng(seed, _SPLIT)
    test_idx: list[int] = []
    if groups is None:
        for c in range(data.n_classes):
            members = np.flatnonzero(data.labels == c)
            perm = rng.permutation(members.size)
            test_idx.extend(members[perm[: quotas[c]]].tolist())
    else:
        groups = list(groups)
        if len(groups) != data.n:
            raise DataError("groups must have one entry per row")
        by_group: dict[str, list[int]] = {}
        for i, g in enumerate(groups):
            by_group.setdefault(g, []).append(i)
        names = sorted(by_group)
        group_class = {g: int(np.bincount(data.labels[by_group[g]]).argmax()) for g in names}
        for c in range(data.n_classes):
            cand = [g for g in names if group_class[g] == c]
            taken = 0
            for j in rng.permutation(len(cand)):
                if taken >= quotas[c]:
                    break
                test_idx.extend(by_group[cand[j]])
                taken += len(by_group[cand[j]])
    test = np.array(sorted(test_idx), dtype=np.int64)
    mask = np.ones(data.n, dtype=bool)
    mask[test] = False
    return data.subset(np.flatnonzero(mask)), data.subset(test)


def stratified_kfold(data: Dataset, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train, valid) index pairs; per class the first ``count % k`` folds get one extra row."""
    if k < 2:
        raise ConfigError("k must be >= 2")
    counts = data.class_counts()
    small = [data.vocab.names[c] for c in range(data.n_classes) if 0 < counts[c] < k]
    if small:
        raise DataError(f"classes with fewer than k={k} samples: {small}")
    rng = make_rng(seed, _FOLDS)
    folds: list[list[int]] = [[] for _ in range(k)]
    for c in range(data.n_classes):
        members = np.flatnonzero(data.labels == c)
        members = members[rng.permutation(members.size)]
        sizes = [members.size // k + (1 if f < members.size % k else 0) for f in range(k)]
        start = 0
        for f, s in enumerate(sizes):
            folds[f].extend(members[start:start + s].tolist())
            start += s
    out = []
    all_idx = np.arange(data.n)
    for f in range(k):
        valid = np.array(sorted(folds[f]), dtype=np.int64)
        mask = np.ones(data.n, dtype=bool)
        mask[valid] = False
        out.append((all_idx[mask], valid))
    return out


@dataclass(frozen=True)
class GridSpec:
    family: str
    grid: dict[str, list[Any]]
    # fixed settings applied to every cell (e.g. epochs, rounds)
    base: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        fam = get_family(self.family)
        object.__setattr__(self, "family", fam.name)
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ConfigError("grid must have at least one value per hyperparameter")
        for cell in self.cells()[:1]:
            fam.make_config({**self.base, **cell})

    @classmethod
    def default(cls, family: str, base: dict[str, Any] | None = None) -> "GridSpec":
        fam = get_family(family)
        return cls(fam.name, {k: list(v) for k, v in fam.default_grid.items()}, dict(base or {}))

    @property
    def fam(self) -> Family:
        return get_family(self.family)

    def cells(self) -> list[dict[str, Any]]:
        keys = list(self.grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))]

    def config(self, cell: dict[str, Any], seed: int):
        params = {**self.base, **cell}
        if "seed" in {f for f in self.fam.config_cls.__dataclass_fields__}:
            params["seed"] = seed
        return self.fam.make_config(params)


def derive_seed(seed: int, *keys: int) -> int:
    return int(make_rng(seed, *keys).integers(0, 2**63))


@dataclass
class CvRow:
    cell: int
    params: dict[str, Any]
    fold_scores: list[float]
    mean_f1: float
    status: str = "ok"


@dataclass
class GridResult:
    best_index: int
    best_params: dict[str, Any]
    table: list[CvRow]
    # ids of every row that was scored during validation, per fold (audit trail)
    validated_ids: list[tuple[str, ...]] = field(default_factory=list)


def _fold_data(train: Dataset, folds, smote: SmoteConfig, seed: int):
    out = []
    for f, (tr, va) in enumerate(folds):
        fold_train = smote_resample(train.subset(tr), replace(smote, seed=derive_seed(seed, _SMOTE, f)))
        valid = train.subset(va)
        if valid.ids is not None and any(is_synthetic(i) for i in valid.ids):
            raise DataError("synthetic rows found in a validation fold")
        out.append((fold_train, valid))
    return out


def _run_unit(args):
    grid, cell_index, cell, fold, fold_train, valid, seed = args
    try:
        cfg = grid.config(cell, derive_seed(seed, _MODEL, cell_index, fold))
        model = grid.fam.fit(fold_train, cfg)
        pred = model.predict(valid.features)
        return cell_index, fold, macro_f1(valid.labels, pred, valid.n_classes), "ok"
    except (PipelineError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return cell_index, fold, -math.inf, f"failed: {type(exc).__name__}: {exc}"


def grid_search(train: Dataset, grid: GridSpec, smote: SmoteConfig | None, seed: int,
                k: int = 5, workers: int = 1) -> GridResult:
    """Mean validation macro F1 per grid cell over ``k`` stratified folds.

    SMOTE (if given) is applied to each training fold only. A cell whose
    training fails in any fold scores ``-inf`` and is kept in the table. The
    best cell is the highest mean; ties go to the earlier cell.
    """
    folds = stratified_kfold(train, k, seed)
    if smote is None:
        fold_sets = [(train.subset(tr), train.subset(va)) for tr, va in folds]
    else:
        fold_sets = _fold_data(train, folds, smote, seed)
    cells = grid.cells()
    units = [(grid, ci, cell, f, ft, va, seed) for ci, cell in enumerate(cells)
             for f, (ft, va) in enumerate(fold_sets)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_unit, units, chunksize=1))
    else:
        results = [_run_unit(u) for u in units]
    scores = np.full((len(cells), k), -math.inf)
    status = ["ok"] * len(cells)
    for ci, f, s, st in results:
        scores[ci, f] = s
        if st != "ok" and status[ci] == "ok":
            status[ci] = st
    table = []
    for ci, cell in enumerate(cells):
        mean = float(np.mean(scores[ci])) if status[ci] == "ok" else -math.inf
        table.append(CvRow(ci, cell, scores[ci].tolist(), mean, status[ci]))
    best = 0
    for row in table:
        if row.mean_f1 > table[best].mean_f1:
            best = row.cell
    return GridResult(best, cells[best], table, [va.row_ids() for _, va in fold_sets])


@dataclass
class ProtocolConfig:
    test_fraction: float = 0.2
    folds: int = 5
    seed: int = 0
    smote: SmoteConfig | None = field(default_factory=SmoteConfig)
    workers: int = 1


@dataclass
class ExperimentResult:
    family: str
    layer: int | None
    best_params: dict[str, Any]
    search: GridResult
    metrics: MetricsReport
    model: Any
    train: Dataset
    test: Dataset


def fit_final(train: Dataset, grid: GridSpec, params: dict[str, Any], proto: ProtocolConfig):
    fit_data = train
    if proto.smote is not None:
        fit_data = smote_resample(train, replace(proto.smote, seed=derive_seed(proto.seed, _SMOTE, 999)))
    cfg = grid.config(params, derive_seed(proto.seed, _MODEL, 999))
    return grid.fam.fit(fit_data, cfg)


def run_experiment(data: Dataset, grid: GridSpec, proto: ProtocolConfig,
                   test: Dataset | None = None, groups=None) -> ExperimentResult:
    """Split, grid-search on the training part, refit the best cell, evaluate on test.

    Passing ``test`` skips the split (e.g. train on clean, test on reverberated
    features of the same utterances).
    """
    if test is None:
        train, test = stratified_split(data, proto.test_fraction, proto.seed, groups)
    else:
        train = data
    search = grid_search(train, grid, proto.smote, proto.seed, proto.folds, proto.workers)
    if not math.isfinite(search.table[search.best_index].mean_f1):
        raise PipelineError("every grid cell failed during cross-validation")
    model = fit_final(train, grid, search.best_params, proto)
    return ExperimentResult(grid.family, data.layer, search.best_params, search,
                            evaluate(model, test), model, train, test)


@dataclass
class LayerSweepReport:
    family: str
    results: dict[int, ExperimentResult]

    @property
    def layers(self) -> list[int]:
        return sorted(self.results)

    def f1_by_layer(self) -> list[float]:
        return [self.results[l].metrics.macro_f1 for l in self.layers]

    @property
    def best_layer(self) -> int:
        best = self.layers[0]
        for l in self.layers:
            if self.results[l].metrics.macro_f1 > self.results[best].metrics.macro_f1:
                best = l
        return best

    @property
    def mean_f1(self) -> float:
        return statistics.fmean(self.f1_by_layer())

    @property
    def std_f1(self) -> float:
        vals = self.f1_by_layer()
        return statistics.stdev(vals) if len(vals) > 1 else 0.0

    @property
    def complete(self) -> bool:
        return self.layers == list(range(1, N_LAYERS + 1))


def layer_sweep(datasets: Mapping[int, Dataset] | Callable[[int], Dataset], grid: GridSpec,
                proto: ProtocolConfig, layers: Sequence[int] = tuple(range(1, N_LAYERS + 1))) -> LayerSweepReport:
    """Run :func:`run_experiment` once per layer with the same seed."""
    results = {}
    for layer in layers:
        if callable(datasets):
            data = datasets(layer)
        else:
            if layer not in datasets:
                raise DataError(f"no dataset for layer {layer}")
            data = datasets[layer]
        if data.layer is None:
            data = Dataset(data.features, data.labels, data.vocab, layer, data.ids)
        results[layer] = run_experiment(data, grid, proto)
    return LayerSweepReport(grid.family, results)
