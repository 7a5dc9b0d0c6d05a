import json
import wave

import numpy as np
import pytest

from pathoclf.augment import Waveform, write_wav
from pathoclf.cli import main
from pathoclf.ingest import UtteranceRecord, parse_manifest, write_manifest


def run_ok(*argv):
    assert main([str(a) for a in argv]) == 0


def tables(out):
    """Every artifact except the run metadata, as bytes."""
    return {p.relative_to(out).as_posix(): p.read_bytes()
            for p in sorted(out.rglob("*")) if p.is_file() and p.name != "run.json"}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    run_ok("make-synthetic", "--seed", 2, "--n", 300, "--dim", 6, "--easiest-layer", 5, "--out", root)
    return root / "manifest.csv"


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    run_ok("train", "--model", "svm", "--layer", 5, "--manifest", corpus, "--seed", 1, "--out", out,
           "--grid", '{"c": [5, 10], "gamma": [0.01, 0.1]}')
    return out


def assert_rerun_identical(out, tmp_path):
    again = tmp_path / "again"
    run_ok("rerun", out / "run.json", "--out", again)
    a, b = tables(out), tables(again)
    assert a.keys() == b.keys() and a
    for name in a:
        assert a[name] == b[name], name


class TestTrain:
    def test_artifacts(self, trained):
        for name in ("model.pmz", "cv_table.csv", "metrics.csv", "confusion.csv", "report.txt", "run.json"):
            assert (trained / name).exists()
        meta = json.loads((trained / "run.json").read_text())
        assert meta["command"] == "train" and "--seed" in meta["argv"]
        assert set(meta["versions"]) >= {"python", "numpy"}
        assert "seconds" in meta["timings"]

    def test_rerun_identical(self, trained, tmp_path):
        assert_rerun_identical(trained, tmp_path)

    def test_missing_manifest(self, tmp_path, capsys):
        code = main(["train", "--model", "svm", "--layer", "4", "--manifest", str(tmp_path / "m.csv"),
                     "--seed", "1", "--out", str(tmp_path / "o")])
        err = capsys.readouterr().err.strip().splitlines()
        assert code == 2 and len(err) == 1 and err[0].startswith("error[config]:")

    def test_seed_mandatory(self, corpus, tmp_path, capsys):
        code = main(["train", "--model", "svm", "--layer", "4", "--manifest", str(corpus), "--out", str(tmp_path)])
        assert code == 2 and "seed" in capsys.readouterr().err

    def test_bad_embedding_is_data_error(self, tmp_path, capsys):
        (tmp_path / "bad.emb").write_bytes(b"JUNKJUNKJUNKJUNK")
        write_manifest([UtteranceRecord("a", "PD", "X", "bad.emb"), UtteranceRecord("b", "CTL", "X", "bad.emb")],
                       tmp_path / "m.csv")
        code = main(["train", "--model", "svm", "--layer", "1", "--manifest", str(tmp_path / "m.csv"),
                     "--seed", "0", "--out", str(tmp_path / "o")])
        assert code == 3 and capsys.readouterr().err.startswith("error[data]:")

    def test_inputs_untouched(self, corpus, trained):
        before = corpus.read_bytes()
        run_ok("predict-dump", "--model-file", trained / "model.pmz", "--manifest", corpus, "--layer", 5,
               "--out", trained.parent / "pd_untouched")
        assert corpus.read_bytes() == before


class TestOtherCommands:
    def test_evaluate(self, corpus, trained, tmp_path):
        out = tmp_path / "ev"
        run_ok("evaluate", "--model-file", trained / "model.pmz", "--manifest", corpus, "--layer", 5, "--out", out)
        assert (out / "metrics.csv").exists()
        assert_rerun_identical(out, tmp_path)

    def test_evaluate_assumed_class(self, corpus, trained, tmp_path):
        out = tmp_path / "pc"
        run_ok("evaluate", "--model-file", trained / "model.pmz", "--manifest", corpus, "--layer", 5,
               "--assumed-class", "PD", "--out", out)
        assert (out / "percent_correct.txt").read_text().startswith("SVM layer 5 → ")

    def test_predict_dump(self, corpus, trained, tmp_path):
        out = tmp_path / "pd"
        run_ok("predict-dump", "--model-file", trained / "model.pmz", "--manifest", corpus, "--layer", 5, "--out", out)
        lines = (out / "predictions.csv").read_text().splitlines()
        assert len(lines) == 1 + len(parse_manifest(corpus))
        assert_rerun_identical(out, tmp_path)

    def test_tsne(self, corpus, tmp_path):
        out = tmp_path / "ts"
        run_ok("tsne", "--manifest", corpus, "--layer", 5, "--perplexity", 10, "--iterations", 100,
               "--seed", 0, "--out", out)
        assert (out / "tsne.csv").read_text().startswith("id,corpus,label,x,y\n")
        assert_rerun_identical(out, tmp_path)

    def test_tsne_perplexity_guard(self, corpus, tmp_path):
        assert main(["tsne", "--manifest", str(corpus), "--layer", "5", "--perplexity", "500",
                     "--seed", "0", "--out", str(tmp_path / "x")]) == 2

    def test_sweep(self, corpus, tmp_path):
        out = tmp_path / "sw"
        run_ok("sweep-layers", "--model", "svm", "--manifest", corpus, "--layers", "4-6", "--seed", 0,
               "--grid", '{"c": [5], "gamma": [0.1]}', "--out", out)
        assert "Avg±Std (all layers)" in (out / "summary.txt").read_text()
        assert_rerun_identical(out, tmp_path)

    def test_make_synthetic_rerun(self, tmp_path):
        out = tmp_path / "syn"
        run_ok("make-synthetic", "--seed", 4, "--n", 30, "--dim", 5, "--out", out)
        assert_rerun_identical(out, tmp_path)

    def test_augment(self, tmp_path):
        rng = np.random.default_rng(0)
        (tmp_path / "rirs").mkdir()
        for k in range(2):
            write_wav(Waveform(rng.uniform(-0.1, 0.1, 20), 8000), tmp_path / "rirs" / f"r{k}.wav")
        recs = []
        for i in range(3):
            write_wav(Waveform(rng.uniform(-0.3, 0.3, 100), 8000), tmp_path / "a" / f"u{i}.wav")
            recs.append(UtteranceRecord(f"u{i}", "PD", "CLN", "e", (("audio", f"a/u{i}.wav"),)))
        write_manifest(recs, tmp_path / "m.csv")
        out = tmp_path / "aug"
        run_ok("augment", "--manifest", tmp_path / "m.csv", "--rir-dir", tmp_path / "rirs", "--seed", 3, "--out", out)
        with wave.open(str(out / "audio" / "u0.wav")) as wf:
            assert wf.getnframes() == 119
        assert_rerun_identical(out, tmp_path)

    def test_rerun_bad_file(self, tmp_path):
        (tmp_path / "r.json").write_text("{}")
        assert main(["rerun", str(tmp_path / "r.json")]) == 2
