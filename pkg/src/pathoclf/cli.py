"""Command-line front end.

Every command writes its artifacts plus a ``run.json`` metadata file into
``--out``. ``run.json`` stores a canonical argument vector (absolute paths), so
``pathoclf rerun <out>/run.json --out <dir>`` repeats the run exactly.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Failures print a single line ``error[<category>]: <message>`` to
stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

from . import reports
from .core import ConfigError, DataError, PipelineError, Vocabulary, check_layer, check_seed
from .ingest import assemble_dataset, parse_manifest, vocab_from_records
from .models import family_of, get_family
from .protocol import GridSpec, ProtocolConfig, layer_sweep, run_experiment
from .resample import SmoteConfig

EXIT_CODES = {"config": 2, "data": 3, "numerical": 4}
RUN_FILE = "run.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


class _InputPath:
    """argparse type: an existing file or directory, resolved to an absolute path."""

    def __init__(self, kind: str = "file"):
        self.kind = kind

    def __call__(self, text: str) -> Path:
        p = Path(text).resolve()
        ok = p.is_dir() if self.kind == "dir" else p.is_file()
        if not ok:
            raise argparse.ArgumentTypeError(f"{self.kind} not found: {text}")
        return p


def _out_path(text: str) -> Path:
    return Path(text).resolve()


def _seed(text: str) -> int:
    try:
        return check_seed(int(text))
    except (ValueError, ConfigError):
        raise argparse.ArgumentTypeError(f"seed must be a non-negative integer, got {text!r}") from None


def _layer(text: str) -> int:
    try:
        return check_layer(int(text))
    except (ValueError, ConfigError):
        raise argparse.ArgumentTypeError(f"layer must be an integer in 1..12, got {text!r}") from None


def _layers(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        lo, _, hi = part.partition("-")
        a = _layer(lo)
        b = _layer(hi) if hi else a
        if b < a:
            raise argparse.ArgumentTypeError(f"empty layer range {part!r}")
        out.extend(range(a, b + 1))
    if len(set(out)) != len(out):
        raise argparse.ArgumentTypeError(f"duplicate layers in {text!r}")
    return out


def _json_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _setting(text: str) -> tuple[str, object]:
    key, eq, value = text.partition("=")
    if not eq or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key, _json_value(value)


def _grid(text: str) -> dict:
    try:
        grid = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"grid is not valid JSON: {exc}") from None
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise argparse.ArgumentTypeError('grid must be a JSON object of lists, e.g. {"c": [5, 10]}')
    return grid


# ---------------------------------------------------------------------------
# helpers


def _load(manifest: Path, layer: int, vocab: Vocabulary | None = None):
    records = parse_manifest(manifest)
    vocab = vocab or vocab_from_records(records)
    return records, assemble_dataset(records, layer, vocab, manifest.parent)


def _grid_spec(family: str, grid: dict | None, settings) -> GridSpec:
    base = dict(settings or [])
    if grid is None:
        return GridSpec.default(family, base)
    return GridSpec(family, grid, base)


def _protocol(args) -> ProtocolConfig:
    smote = None if args.no_smote else SmoteConfig(k_neighbors=args.smote_k, seed=args.seed)
    return ProtocolConfig(args.test_fraction, args.folds, args.seed, smote, args.workers)


def _groups(records, column: str | None):
    if column is None:
        return None
    values = [r.get(column) for r in records]
    missing = [r.id for r, v in zip(records, values) if not v]
    if missing:
        raise DataError(f"manifest column {column!r} is empty or missing for {missing[0]!r}")
    return values


def _model_path(out: Path) -> Path:
    return out / "model.pmz"


# ---------------------------------------------------------------------------
# commands; each returns the list of files it wrote (relative to --out)


def cmd_train(args) -> list[str]:
    from .serialize import save_model

    records, data = _load(args.manifest, args.layer)
    grid = _grid_spec(args.model, args.grid, args.set)
    proto = _protocol(args)
    test = None
    if args.test_manifest is not None:
        _, test = _load(args.test_manifest, args.layer, data.vocab)
    res = run_experiment(data, grid, proto, test=test, groups=_groups(records, args.group_column))
    out = args.out
    save_model(res.model, _model_path(out))
    written = ["model.pmz"]
    tables = {
        "cv_table.csv": reports.cv_table_csv(res.search),
        "metrics.csv": reports.metrics_csv(res.metrics),
        "confusion.csv": reports.confusion_csv(res.metrics),
        "split.csv": reports.csv_text(["id", "side"], [*((i, "train") for i in res.train.row_ids()),
                                                        *((i, "test") for i in res.test.row_ids())]),
        "best_params.json": reports.dump_json({"family": grid.family, "layer": args.layer,
                                               "seed": args.seed, "params": res.best_params,
                                               "fixed": grid.base}),
        "report.txt": reports.aligned(
            reports.SUMMARY_COLUMNS, [reports.summary_row(grid.fam.label, args.layer, res.metrics)]),
    }
    for name, text in tables.items():
        reports.write_text(out / name, text)
    return written + list(tables)


def cmd_evaluate(args) -> list[str]:
    from .metrics import evaluate, percent_correct
    from .serialize import load_model

    model = load_model(args.model_file)
    _, data = _load(args.manifest, args.layer, model.vocab)
    label = family_of(model).label
    out = args.out
    if args.assumed_class is not None:
        if args.assumed_class not in model.vocab:
            raise ConfigError(f"assumed class {args.assumed_class!r} not in model classes {list(model.vocab)}")
        pct = percent_correct(model, data, args.assumed_class)
        tables = {
            "percent_correct.txt": reports.percent_correct_line(label, args.layer, pct) + "\n",
            "percent_correct.csv": reports.csv_text(
                ["model", "layer", "assumed_class", "n", "percent_correct"],
                [[label, args.layer, args.assumed_class, data.n, f"{pct:.6f}"]]),
        }
    else:
        m = evaluate(model, data)
        tables = {
            "metrics.csv": reports.metrics_csv(m),
            "confusion.csv": reports.confusion_csv(m),
            "report.txt": reports.aligned(reports.SUMMARY_COLUMNS, [reports.summary_row(label, args.layer, m)]),
        }
    for name, text in tables.items():
        reports.write_text(out / name, text)
    return list(tables)


def cmd_sweep_layers(args) -> list[str]:
    families = [get_family(m).name for m in args.model] if args.model else ["svm", "xgb", "ffn"]
    if args.grid is not None and len(families) > 1:
        raise ConfigError("--grid applies to a single --model")
    records = parse_manifest(args.manifest)
    vocab = vocab_from_records(records)
    cache: dict[int, object] = {}

    def load(layer):
        if layer not in cache:
            cache[layer] = assemble_dataset(records, layer, vocab, args.manifest.parent)
        return cache[layer]

    proto = _protocol(args)
    sweeps = []
    tables: dict[str, str] = {}
    for fam in families:
        sw = layer_sweep(load, _grid_spec(fam, args.grid, args.set), proto, args.layers)
        sweeps.append(sw)
        tables[f"layer_curve_{fam}.csv"] = reports.layer_curve_csv(sw)
        for layer in sw.layers:
            tables[f"cv_{fam}_layer{layer:02d}.csv"] = reports.cv_table_csv(sw.results[layer].search)
        best = sw.results[sw.best_layer].metrics
        tables[f"confusion_{fam}_best.csv"] = reports.confusion_csv(best)
    tables["summary.csv"] = reports.sweep_summary_csv(sweeps)
    tables["summary.txt"] = reports.sweep_summary(sweeps)
    for name, text in tables.items():
        reports.write_text(args.out / name, text)
    return list(tables)


def cmd_augment(args) -> list[str]:
    from .augment import augment_corpus

    augment_corpus(args.manifest, args.rir_dir, args.seed, args.out, args.factor)
    return ["manifest.csv", "rir_assignments.csv"]


def cmd_tsne(args) -> list[str]:
    from .tsne import TsneConfig, run_tsne

    records, data = _load(args.manifest, args.layer)
    cfg = TsneConfig(perplexity=args.perplexity, iterations=args.iterations, seed=args.seed)
    if not cfg.perplexity < data.n:
        raise ConfigError(f"perplexity {cfg.perplexity} must be below the number of points ({data.n})")
    emb = run_tsne(data, cfg, corpus=[r.corpus for r in records])
    emb.write_csv(args.out / "tsne.csv")
    reports.write_text(args.out / "kl_trace.csv",
                       reports.csv_text(["iteration", "kl"], [[i, f"{kl:.10f}"] for i, kl in emb.kl_trace]))
    return ["tsne.csv", "kl_trace.csv"]


def cmd_predict_dump(args) -> list[str]:
    from .serialize import load_model

    model = load_model(args.model_file)
    _, data = _load(args.manifest, args.layer, model.vocab)
    reports.write_text(args.out / "predictions.csv", reports.predict_dump(model, data))
    return ["predictions.csv"]


def cmd_make_synthetic(args) -> list[str]:
    from .synthetic import layer_separations, make_layer_datasets, write_corpus

    seps = layer_separations(args.easiest_layer, args.low, args.shoulder, args.high)
    data = make_layer_datasets(seps, n=args.n, dim=args.dim, seed=args.seed)
    write_corpus(args.out, data, seed=args.seed)
    return ["manifest.csv"]


# ---------------------------------------------------------------------------
# parser


def _add_protocol_args(p):
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--no-smote", action="store_true", help="disable fold-internal SMOTE")
    p.add_argument("--smote-k", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--grid", type=_grid, help='JSON grid override, e.g. \'{"c": [5, 10]}\'')
    p.add_argument("--set", type=_setting, action="append", metavar="KEY=VALUE",
                   help="fixed hyperparameter applied to every grid cell (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pathoclf", description="Pathological speech classification on pooled embeddings.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="grid-search, refit and evaluate one model on one layer")
    p.add_argument("--model", required=True, choices=["svm", "xgb", "gbt", "ffn"])
    p.add_argument("--layer", type=_layer, required=True)
    p.add_argument("--manifest", type=_InputPath(), required=True)
    p.add_argument("--test-manifest", type=_InputPath(),
                   help="evaluate on this manifest instead of an internal 80/20 split")
    p.add_argument("--group-column", help="manifest column (e.g. speaker) for a group-disjoint split")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", type=_out_path, required=True)
    _add_protocol_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a manifest")
    p.add_argument("--model-file", type=_InputPath(), required=True)
    p.add_argument("--manifest", type=_InputPath(), required=True)
    p.add_argument("--layer", type=_layer, required=True)
    p.add_argument("--assumed-class", help="report the percentage predicted as this class")
    p.add_argument("--out", type=_out_path, required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-layers", help="run the full protocol on every layer")
    p.add_argument("--model", action="append", choices=["svm", "xgb", "gbt", "ffn"],
                   help="model family (repeatable; default: all three)")
    p.add_argument("--manifest", type=_InputPath(), required=True)
    p.add_argument("--layers", type=_layers, default=list(range(1, 13)), help="e.g. 1-12 or 2,4,6")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", type=_out_path, required=True)
    _add_protocol_args(p)
    p.set_defaults(func=cmd_sweep_layers)

    p = sub.add_parser("augment", help="reverberate manifest audio with a room impulse response bank")
    p.add_argument("--manifest", type=_InputPath(), required=True)
    p.add_argument("--rir-dir", type=_InputPath("dir"), required=True)
    p.add_argument("--factor", type=float, default=2.0, help="RIR amplitude scale")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", type=_out_path, required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("tsne", help="2-D t-SNE coordinates of one layer")
    p.add_argument("--manifest", type=_InputPath(), required=True)
    p.add_argument("--layer", type=_layer, required=True)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", type=_out_path, required=True)
    p.set_defaults(func=cmd_tsne)

    p = sub.add_parser("predict-dump", help="per-utterance predictions and class scores")
    p.add_argument("--model-file", type=_InputPath(), required=True)
    p.add_argument("--manifest", type=_InputPath(), required=True)
    p.add_argument("--layer", type=_layer, required=True)
    p.add_argument("--out", type=_out_path, required=True)
    p.set_defaults(func=cmd_predict_dump)

    p = sub.add_parser("make-synthetic", help="write a 12-layer synthetic corpus with a scripted easiest layer")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--easiest-layer", type=_layer, default=4)
    p.add_argument("--low", type=float, default=1.0, help="class separation at the hardest layer")
    p.add_argument("--shoulder", type=float, default=3.0, help="class separation next to the easiest layer")
    p.add_argument("--high", type=float, default=6.0, help="class separation at the easiest layer")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", type=_out_path, required=True)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("rerun", help="repeat a run from its run.json")
    p.add_argument("run_file", type=_InputPath())
    p.add_argument("--out", type=_out_path, help="output directory (default: the original one)")
    p.set_defaults(func=None)
    return parser


def canonical_argv(parser: argparse.ArgumentParser, args) -> list[str]:
    """Argument vector reproducing ``args`` with every default made explicit."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[args.command]
    argv = [args.command]
    for action in sp._actions:
        if not action.option_strings or action.dest == "help":
            continue
        value = getattr(args, action.dest)
        flag = action.option_strings[-1]
        if value is None or value is False:
            continue
        if value is True:
            argv.append(flag)
        elif action.dest == "set":
            for k, v in value:
                argv += [flag, f"{k}={json.dumps(v)}"]
        elif action.dest == "model" and isinstance(value, list):
            for v in value:
                argv += [flag, v]
        elif action.dest == "layers":
            argv += [flag, ",".join(str(v) for v in value)]
        elif action.dest == "grid":
            argv += [flag, json.dumps(value, sort_keys=True)]
        else:
            argv += [flag, str(value)]
    return argv


def _versions() -> dict[str, str]:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "unknown"
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _rerun_argv(run_file: Path, out: Path | None) -> list[str]:
    try:
        meta = json.loads(run_file.read_text(encoding="utf-8"))
        argv = list(meta["argv"])
    except (json.JSONDecodeError, KeyError, TypeError):
        raise ConfigError(f"{run_file}: not a run metadata file") from None
    if out is not None:
        i = argv.index("--out")
        argv[i + 1] = str(out)
    return argv


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "rerun":
        return run(_rerun_argv(args.run_file, args.out))
    canon = canonical_argv(parser, args)
    args.out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    written = args.func(args)
    elapsed = time.perf_counter() - start
    meta = {
        "tool": "pathoclf",
        "command": args.command,
        "argv": canon,
        "versions": _versions(),
        "timings": {"seconds": round(elapsed, 3)},
        "outputs": {name: _sha256(args.out / name) for name in written},
    }
    reports.write_text(args.out / RUN_FILE, reports.dump_json(meta))
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return run(argv)
    except PipelineError as exc:
        msg = " ".join(str(exc).split())
        print(f"error[{exc.category}]: {msg}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"error[data]: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_CODES["data"]


if __name__ == "__main__":
    sys.exit(main())
