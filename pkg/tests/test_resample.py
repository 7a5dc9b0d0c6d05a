import numpy as np
import pytest

from pathoclf.core import ConfigError, DataError, Dataset, Vocabulary
from pathoclf.resample import SmoteConfig, is_synthetic, smote_resample

from conftest import blobs


def segment_residual(s, members):
    """Smallest distance from ``s`` to any segment between two class members."""
    best = np.inf
    for i in range(len(members)):
        a = members[i]
        diff = members - a
        den = np.einsum("ij,ij->i", diff, diff)
        u = np.divide(diff @ (s - a), den, out=np.zeros(len(members)), where=den > 0)
        u = np.clip(u, 0.0, 1.0)
        r = np.linalg.norm(a + u[:, None] * diff - s, axis=1)
        best = min(best, float(r.min()))
    return best


def knn_oracle(x, k):
    """Brute-force neighbour lists with (distance, index) ordering."""
    out = []
    for i in range(len(x)):
        d = [(float(np.sum((x[i] - x[j]) ** 2)), j) for j in range(len(x)) if j != i]
        out.append([j for _, j in sorted(d)[:k]])
    return out


class TestSmote:
    def test_counts_equalised(self):
        d = blobs([30, 12, 5])
        out = smote_resample(d, SmoteConfig(seed=1))
        np.testing.assert_array_equal(out.class_counts(), [30, 30, 30])

    def test_originals_first_and_unchanged(self):
        d = blobs([30, 12, 5])
        out = smote_resample(d, SmoteConfig(seed=1))
        np.testing.assert_array_equal(out.features[: d.n], d.features)
        assert out.ids[: d.n] == d.ids
        assert all(is_synthetic(i) for i in out.ids[d.n:])
        assert not any(is_synthetic(i) for i in out.ids[: d.n])

    def test_convex_combination_residual(self):
        d = blobs([40, 9, 6], dim=5)
        out = smote_resample(d, SmoteConfig(k_neighbors=3, seed=4))
        for i in range(d.n, out.n):
            c = out.labels[i]
            members = d.features[d.labels == c]
            assert segment_residual(out.features[i], members) <= 1e-9

    def test_partner_within_k_nearest(self):
        # one-dimensional so the partner is identifiable from the sample position
        x = np.array([[0.0], [1.0], [3.0], [7.0], [100.0], [101.0], [102.0], [103.0], [104.0], [105.0]])
        y = np.array([0, 0, 0, 0, 1, 1, 1, 1, 1, 1])
        d = Dataset(x, y, Vocabulary(["a", "b"]))
        nn = knn_oracle(x[:4], 1)
        out = smote_resample(d, SmoteConfig(k_neighbors=1, seed=0))
        for s in out.features[d.n:, 0]:
            ok = any(min(x[i, 0], x[j, 0]) - 1e-12 <= s <= max(x[i, 0], x[j, 0]) + 1e-12
                     for i in range(4) for j in nn[i])
            assert ok

    def test_already_balanced_is_identity(self):
        d = blobs([10, 10])
        assert smote_resample(d) is d

    def test_singleton_class(self):
        d = blobs([10, 1])
        with pytest.raises(DataError, match="too small"):
            smote_resample(d)

    def test_small_class_uses_fewer_neighbours(self):
        d = blobs([10, 2])
        out = smote_resample(d, SmoteConfig(k_neighbors=5))
        np.testing.assert_array_equal(out.class_counts(), [10, 10])

    def test_deterministic(self):
        d = blobs([25, 7, 4])
        a = smote_resample(d, SmoteConfig(seed=9))
        b = smote_resample(d, SmoteConfig(seed=9))
        np.testing.assert_array_equal(a.features, b.features)
        c = smote_resample(d, SmoteConfig(seed=10))
        assert not np.array_equal(a.features, c.features)

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            SmoteConfig(k_neighbors=0)
        with pytest.raises(ConfigError):
            SmoteConfig(strategy="minority-only")
