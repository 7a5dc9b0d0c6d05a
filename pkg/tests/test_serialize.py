import json
import zipfile

import numpy as np
import pytest

from pathoclf import ffn, gbt, svm
from pathoclf.core import DataError
from pathoclf.serialize import load_model, save_model

from conftest import blobs

FITS = {
    "svm": lambda d: svm.fit(d, svm.RbfSvmConfig(c=5, gamma=0.1)),
    "gbt": lambda d: gbt.fit(d, gbt.GbtConfig(rounds=4, max_depth=3)),
    "ffn": lambda d: ffn.fit(d, ffn.FfnConfig(epochs=3, hidden_units=6)),
}


@pytest.mark.parametrize("family", sorted(FITS))
class TestRoundTrip:
    def test_predictions_preserved(self, tmp_path, family):
        d = blobs([15, 12, 9])
        model = FITS[family](d)
        save_model(model, tmp_path / "m.pmz")
        back = load_model(tmp_path / "m.pmz")
        assert back.family == model.family
        assert back.vocab == model.vocab
        assert back.config == model.config
        np.testing.assert_array_equal(back.scores(d.features), model.scores(d.features))
        np.testing.assert_array_equal(back.predict(d.features), model.predict(d.features))

    def test_byte_identical_files(self, tmp_path, family):
        d = blobs([15, 12, 9])
        save_model(FITS[family](d), tmp_path / "a.pmz")
        save_model(FITS[family](d), tmp_path / "b.pmz")
        assert (tmp_path / "a.pmz").read_bytes() == (tmp_path / "b.pmz").read_bytes()


class TestContainer:
    def test_meta(self, tmp_path):
        save_model(FITS["svm"](blobs([10, 10])), tmp_path / "m.pmz")
        with zipfile.ZipFile(tmp_path / "m.pmz") as zf:
            meta = json.loads(zf.read("meta.json"))
        assert meta["format"] == "pathoclf-model" and meta["version"] == 1
        assert meta["classes"] == ["C0", "C1"]

    def test_not_a_container(self, tmp_path):
        (tmp_path / "x.pmz").write_bytes(b"hello")
        with pytest.raises(DataError):
            load_model(tmp_path / "x.pmz")

    def test_wrong_version(self, tmp_path):
        with zipfile.ZipFile(tmp_path / "v.pmz", "w") as zf:
            zf.writestr("meta.json", json.dumps({"format": "pathoclf-model", "version": 99}))
        with pytest.raises(DataError, match="version"):
            load_model(tmp_path / "v.pmz")
