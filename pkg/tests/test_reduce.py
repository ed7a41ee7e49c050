import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.distance import pdist

import oracles
from melanoma_ensemble.errors import DataError
from melanoma_ensemble.formats import FeatureMatrix
from melanoma_ensemble.reduce import (
    dct_reduce,
    load_pca,
    pca_fit,
    pca_inverse,
    pca_project,
    save_pca,
)


def signed(rows):
    """Apply the largest-magnitude-entry-positive rule to each row."""
    rows = np.array(rows, dtype=float)
    for r in rows:
        if r[np.argmax(np.abs(r))] < 0:
            r *= -1
    return rows


class TestPca:
    def test_rank_one_line(self, rng):
        t = rng.normal(size=10)
        X = np.outer(t, [1.0, 2.0, -2.0]) + [5.0, 0.0, 1.0]
        m = pca_fit(X, target_k=3)
        assert m.k == 3
        total = m.explained_variance.sum()
        assert m.explained_variance[0] / total == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(m.explained_variance[1:], 0.0, atol=1e-9)
        assert np.allclose(np.abs(m.components[0]), [1 / 3, 2 / 3, 2 / 3])

    def test_when_longer(self, rng):
        assert pca_fit(rng.normal(size=(30, 2)), target_k=4000).k == 2

    def test_k_capped_by_samples(self, rng):
        assert pca_fit(rng.normal(size=(5, 40)), target_k=4000).k == 4

    def test_eigen_oracle(self, rng):
        X = rng.normal(size=(20, 6)) @ rng.normal(size=(6, 6))
        m = pca_fit(X, target_k=6)
        cov = np.cov(X, rowvar=False)
        evals, evecs = np.linalg.eig(cov)
        order = np.argsort(-evals.real)
        assert np.allclose(m.explained_variance, evals.real[order], rtol=1e-9)
        assert np.allclose(m.components, signed(evecs.real[:, order].T), atol=1e-9)

    def test_gram_path_matches_covariance(self, rng):
        X = rng.normal(size=(8, 30))
        gram = pca_fit(X, target_k=7)
        cov = np.cov(X, rowvar=False)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(-evals)[:7]
        assert np.allclose(gram.explained_variance, evals[order], rtol=1e-8)
        assert np.allclose(gram.components, signed(evecs[:, order].T), atol=1e-8)

    def test_components_orthonormal_and_sorted(self, rng):
        m = pca_fit(rng.normal(size=(50, 12)), target_k=12)
        assert np.allclose(m.components @ m.components.T, np.eye(12), atol=1e-12)
        assert np.all(np.diff(m.explained_variance) <= 1e-12)

    def test_mean_projects_to_zero(self, rng):
        X = rng.normal(size=(15, 5))
        m = pca_fit(X)
        assert np.allclose(pca_project(m, X.mean(axis=0)), 0.0, atol=1e-12)

    def test_full_rank_distance_preservation(self, rng):
        X = rng.normal(size=(25, 8))
        m = pca_fit(X, target_k=8)
        assert m.k == 8
        assert np.allclose(pdist(pca_project(m, X)), pdist(X), atol=1e-6)

    def test_total_variance_conserved(self, rng):
        X = rng.normal(size=(40, 6)) * [1, 2, 3, 4, 5, 6]
        m = pca_fit(X, target_k=6)
        assert m.explained_variance.sum() == pytest.approx(np.var(X, axis=0, ddof=1).sum(), rel=1e-6)

    def test_rank_one_reconstruction(self, rng):
        X = np.outer(rng.normal(size=12), rng.normal(size=7)) + rng.normal(size=7)
        m = pca_fit(X, target_k=1)
        assert np.allclose(pca_inverse(m, pca_project(m, X)), X, atol=1e-6)

    def test_feature_matrix_in_out(self, rng):
        fm = FeatureMatrix(["a", "b", "c", "d"], rng.normal(size=(4, 3)), "x")
        out = pca_project(pca_fit(fm), fm)
        assert isinstance(out, FeatureMatrix) and out.ids == fm.ids and out.dim == 3

    def test_dim_mismatch(self, rng):
        m = pca_fit(rng.normal(size=(10, 4)))
        with pytest.raises(DataError):
            pca_project(m, np.zeros((2, 5)))

    def test_too_few_samples(self):
        with pytest.raises(DataError):
            pca_fit(np.zeros((1, 3)))

    def test_save_load_roundtrip(self, tmp_path, rng):
        m = pca_fit(rng.normal(size=(10, 4)), target_k=3)
        save_pca(tmp_path / "p.csv", m)
        assert (tmp_path / "p.csv").read_text().startswith("# pca")
        back = load_pca(tmp_path / "p.csv")
        assert np.array_equal(back.mean, m.mean)
        assert np.array_equal(back.components, m.components)
        assert np.array_equal(back.explained_variance, m.explained_variance)


class TestDct:
    def test_constant(self):
        out = dct_reduce(np.full(8, 3.0), 8)
        assert out[0] == pytest.approx(3.0 * np.sqrt(8))
        assert np.allclose(out[1:], 0.0, atol=1e-12)

    def test_naive_oracle(self, rng):
        x = rng.normal(size=16)
        assert np.allclose(dct_reduce(x, 4), oracles.dct_naive(x)[:4], atol=1e-12)

    def test_invertible_when_full(self, rng):
        from scipy.fft import idct
        x = rng.normal(size=20)
        assert np.allclose(idct(dct_reduce(x, 50), norm="ortho"), x, atol=1e-9)

    def test_passthrough_length(self, rng):
        assert dct_reduce(rng.normal(size=5), 4000).shape == (5,)

    def test_rows_independent(self, rng):
        X = rng.normal(size=(3, 10))
        fm = dct_reduce(FeatureMatrix(["a", "b", "c"], X, "x"), 6)
        for i in range(3):
            assert np.allclose(fm.data[i], dct_reduce(X[i], 6), atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.integers(1, 64), elements=st.floats(-1e3, 1e3)))
    def test_energy_conservation(self, x):
        assert np.linalg.norm(dct_reduce(x, x.size)) == pytest.approx(np.linalg.norm(x), abs=1e-9, rel=1e-12)
