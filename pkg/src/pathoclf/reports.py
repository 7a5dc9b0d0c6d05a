"""Machine (CSV/JSON) and human (aligned text) renderings of experiment results.

Floats are written with fixed formats so the same result always produces the
same bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import DataError, Dataset
from .metrics import MetricsReport
from .models import get_family
from .protocol import GridResult, LayerSweepReport

SUMMARY_COLUMNS = ("Model", "Layer (best)", "Accuracy", "Balanced acc.", "F1 unw. avg", "Avg±Std (all layers)")


def _fmt(x: float, digits: int = 6) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return f"{x:.{digits}f}"


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")
    return path


def aligned(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *rows]]
    return "\n".join(lines) + "\n"


def cv_table_csv(result: GridResult) -> str:
    keys = list(result.table[0].params) if result.table else []
    n_folds = len(result.table[0].fold_scores) if result.table else 0
    header = ["cell", *keys, *[f"fold{f + 1}_f1" for f in range(n_folds)], "mean_f1", "status", "selected"]
    rows = []
    for row in result.table:
        rows.append([row.cell, *[row.params[k] for k in keys], *[_fmt(s) for s in row.fold_scores],
                     _fmt(row.mean_f1), row.status, int(row.cell == result.best_index)])
    return csv_text(header, rows)


def metrics_csv(report: MetricsReport) -> str:
    rows = []
    for c, name in enumerate(report.vocab.names):
        rows.append([name, _fmt(float(report.precision[c])), _fmt(float(report.recall[c])),
                     _fmt(float(report.f1[c])), int(report.support[c])])
    rows.append(["accuracy", "", "", _fmt(report.accuracy), int(report.support.sum())])
    rows.append(["balanced_accuracy", "", "", _fmt(report.balanced_accuracy), int(report.support.sum())])
    rows.append(["macro_f1", "", "", _fmt(report.macro_f1), int(report.support.sum())])
    return csv_text(["class", "precision", "recall", "f1", "support"], rows)


def confusion_csv(report: MetricsReport) -> str:
    names = list(report.vocab.names)
    rows = [[names[i], *report.confusion[i].tolist()] for i in range(len(names))]
    return csv_text(["true\\pred", *names], rows)


def layer_curve_csv(sweep: LayerSweepReport) -> str:
    rows = []
    for layer in sweep.layers:
        m = sweep.results[layer].metrics
        rows.append([layer, _fmt(m.accuracy), _fmt(m.balanced_accuracy), _fmt(m.macro_f1),
                     json.dumps(sweep.results[layer].best_params, sort_keys=True)])
    return csv_text(["layer", "accuracy", "balanced_accuracy", "macro_f1", "best_params"], rows)


def summary_row(label: str, layer, report: MetricsReport, mean_std: tuple[float, float] | None = None) -> list[str]:
    agg = "-" if mean_std is None else f"{100 * mean_std[0]:.1f}±{100 * mean_std[1]:.1f}"
    return [label, "-" if layer is None else str(layer), f"{100 * report.accuracy:.1f}",
            f"{100 * report.balanced_accuracy:.1f}", f"{100 * report.macro_f1:.1f}", agg]


def sweep_summary(sweeps: Sequence[LayerSweepReport]) -> str:
    """One row per model family: best layer's scores and the all-layer F1 spread (in %)."""
    rows = []
    for sw in sweeps:
        best = sw.results[sw.best_layer]
        rows.append(summary_row(get_family(sw.family).label, sw.best_layer, best.metrics, (sw.mean_f1, sw.std_f1)))
    return aligned(SUMMARY_COLUMNS, rows)


def sweep_summary_csv(sweeps: Sequence[LayerSweepReport]) -> str:
    rows = []
    for sw in sweeps:
        best = sw.results[sw.best_layer].metrics
        rows.append([sw.family, sw.best_layer, _fmt(best.accuracy), _fmt(best.balanced_accuracy),
                     _fmt(best.macro_f1), _fmt(sw.mean_f1), _fmt(sw.std_f1), len(sw.layers)])
    return csv_text(["model", "best_layer", "accuracy", "balanced_accuracy", "macro_f1",
                      "mean_f1_all_layers", "std_f1_all_layers", "n_layers"], rows)


def percent_correct_line(label: str, layer, pct: float) -> str:
    return f"{label} layer {layer} → {pct:.1f}" if layer is not None else f"{label} → {pct:.1f}"


def _score_labels(model) -> list[str]:
    names = list(model.vocab.names)
    if model.family == "svm":
        return [f"votes_{n}" for n in names]
    return [f"p_{n}" for n in names]


def predict_dump(model, data: Dataset) -> str:
    """Per-utterance CSV: id, predicted class and per-class scores.

    FFN/GBT scores are class probabilities; SVM scores are one-vs-one vote counts.
    """
    if data.n == 0:
        raise DataError("nothing to predict: empty dataset")
    pred = model.predict(data.features)
    scores = np.asarray(model.scores(data.features))
    integer = model.family == "svm"
    rows = []
    for i, rid in enumerate(data.row_ids()):
        vals = [str(int(s)) if integer else f"{s:.10f}" for s in scores[i]]
        rows.append([rid, model.vocab.names[int(pred[i])], *vals])
    return csv_text(["id", "predicted", *_score_labels(model)], rows)


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"
