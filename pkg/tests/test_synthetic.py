import numpy as np
import pytest

from pathoclf.core import ConfigError
from pathoclf.ingest import assemble_dataset, parse_manifest, vocab_from_records
from pathoclf.models import get_family
from pathoclf.synthetic import (
    CLINICAL_SHARES,
    class_means,
    counts_from_shares,
    layer_separations,
    make_blobs,
    make_layer_datasets,
    write_corpus,
)


class TestBlobs:
    def test_counts_follow_shares(self):
        c = counts_from_shares(1000, CLINICAL_SHARES)
        assert c.tolist() == [420, 435, 30, 51, 64]
        np.testing.assert_array_equal(make_blobs(1000).class_counts(), c)

    def test_counts_sum(self):
        for n in (7, 99, 1001):
            assert counts_from_shares(n, CLINICAL_SHARES).sum() == n

    def test_pairwise_mean_distance(self):
        m = class_means(5, 32, 5.0, 2.0)
        for i in range(5):
            for j in range(i + 1, 5):
                assert np.linalg.norm(m[i] - m[j]) == pytest.approx(10.0, rel=1e-12)

    def test_dim_too_small(self):
        with pytest.raises(ConfigError):
            class_means(5, 3, 1.0, 1.0)

    def test_seeded(self):
        np.testing.assert_array_equal(make_blobs(50, seed=2).features, make_blobs(50, seed=2).features)


class TestLayers:
    def test_profile_peaks_at_easiest(self):
        s = layer_separations(7)
        assert len(s) == 12 and int(np.argmax(s)) + 1 == 7
        assert s[6] == 6.0 and s[5] == s[7] == 3.0
        assert min(s) >= 1.0
        assert layer_separations(1)[-1] == pytest.approx(1.0)

    def test_shared_noise(self):
        data = make_layer_datasets([1.0] * 11 + [2.0], n=40, dim=6)
        diff = data[12].features - data[1].features
        means = class_means(5, 6, 1.0, 1.0)
        np.testing.assert_allclose(diff, means[data[1].labels], atol=1e-12)

    def test_corpus_roundtrip(self, tmp_path):
        data = make_layer_datasets(layer_separations(3), n=30, dim=6)
        m = write_corpus(tmp_path, data, seed=1)
        recs = parse_manifest(m)
        for layer in (1, 3, 12):
            d = assemble_dataset(recs, layer, vocab_from_records(recs), tmp_path)
            np.testing.assert_allclose(d.features, data[layer].features, atol=1e-5)
            np.testing.assert_array_equal(d.labels, data[layer].labels)


class TestFamilies:
    def test_aliases(self):
        assert get_family("gbt").name == "xgb"
        assert get_family("FFN").name == "ffn"
        with pytest.raises(ConfigError):
            get_family("knn")
