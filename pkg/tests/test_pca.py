"""PCA with images as variables and pixels as observations."""

import numpy as np
import pytest

from cervreg import pca
from cervreg.pca import PcaError, PcaModel


def _images(p=10, shape=(16, 24), seed=0):
    """Low-rank structure plus noise, so the spectrum is far from flat."""
    rng = np.random.default_rng(seed)
    basis = rng.random((3,) + shape)
    w = rng.random((p, 3))
    return [np.clip(0.2 + 0.25 * np.tensordot(w[i], basis, 1) + 0.05 * rng.standard_normal(shape), 0, 1)
            for i in range(p)]


def _oracle(images):
    x = np.stack([im.ravel() for im in images], axis=1)
    xc = x - x.mean(axis=1, keepdims=True)
    cov = xc.T @ xc / (x.shape[0] - 1)
    lam, vec = np.linalg.eigh(cov)
    return lam[::-1], vec[:, ::-1], cov


class TestJacobi:
    def test_matches_dense_solver(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((12, 12))
        a = a + a.T
        lam, vec = pca.jacobi_eigh(a)
        ref = np.linalg.eigvalsh(a)[::-1]
        np.testing.assert_allclose(lam, ref, atol=1e-10)
        np.testing.assert_allclose(vec.T @ vec, np.eye(12), atol=1e-10)
        np.testing.assert_allclose(a @ vec, vec * lam, atol=1e-9)

    def test_diagonal_and_zero(self):
        lam, vec = pca.jacobi_eigh(np.diag([1.0, 3.0, 2.0]))
        np.testing.assert_array_equal(lam, [3, 2, 1])
        lam, _ = pca.jacobi_eigh(np.zeros((3, 3)))
        np.testing.assert_array_equal(lam, 0)

    def test_tiny_offdiagonal(self):
        lam, _ = pca.jacobi_eigh(np.array([[1.0, 1e-200], [1e-200, 2.0]]))
        np.testing.assert_allclose(lam, [2, 1])

    def test_not_square(self):
        with pytest.raises(PcaError):
            pca.jacobi_eigh(np.zeros((2, 3)))


class TestFit:
    def test_dense_oracle(self):
        imgs = _images()
        model = pca.fit(imgs)
        lam, vec, _ = _oracle(imgs)
        np.testing.assert_allclose(model.eigvals, np.clip(lam, 0, None), atol=1e-8)
        # eigenvectors up to sign
        signs = np.sign(np.sum(model.eigvecs * vec, axis=0))
        np.testing.assert_allclose(model.eigvecs, vec * signs, atol=1e-8)

    def test_sign_rule(self):
        model = pca.fit(_images())
        idx = np.argmax(np.abs(model.eigvecs), axis=0)
        assert np.all(model.eigvecs[idx, np.arange(model.p)] > 0)

    def test_orthonormal_loadings_and_pcs(self):
        model = pca.fit(_images())
        np.testing.assert_allclose(model.eigvecs.T @ model.eigvecs, np.eye(model.p), atol=1e-8)
        live = model.pcs[np.linalg.norm(model.pcs, axis=1) > 0]
        np.testing.assert_allclose(live @ live.T, np.eye(len(live)), atol=1e-6)

    def test_total_variance(self):
        imgs = _images()
        model = pca.fit(imgs)
        assert model.total_variance == pytest.approx(pca.total_variance(imgs), rel=1e-6)

    def test_identical_images(self):
        img = np.random.default_rng(2).random((8, 8))
        model = pca.fit([img] * 4)
        np.testing.assert_array_equal(model.eigvals, 0)
        np.testing.assert_allclose(model.mean_image(), img, atol=1e-15)

    def test_two_images(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((6, 7)), rng.random((6, 7))
        model = pca.fit([a, b])
        assert model.eigvals[0] > 0 and model.eigvals[1] == pytest.approx(0, abs=1e-12)
        d = (a - b).ravel()
        cos = abs(model.pcs[0] @ d) / np.linalg.norm(d)
        assert cos == pytest.approx(1.0, abs=1e-12)

    def test_errors(self):
        with pytest.raises(PcaError):
            pca.fit([np.zeros((3, 3))])
        with pytest.raises(PcaError):
            pca.fit([np.zeros((3, 3)), np.zeros((3, 4))])


class TestCevr:
    def _model(self, lam):
        p = len(lam)
        return PcaModel((1, 2), np.zeros(2), np.array(lam, float), np.eye(p), np.zeros((p, 2)))

    def test_worked_example(self):
        assert pca.cevr(self._model([4, 3, 2, 1]), 2) == pytest.approx(0.7)

    def test_monotone_and_complete(self):
        model = pca.fit(_images())
        vals = [pca.cevr(model, q) for q in range(1, model.p + 1)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(1.0, abs=1e-9)

    def test_zero_variance(self):
        with pytest.raises(PcaError):
            pca.cevr(self._model([0, 0]), 1)

    def test_q_range(self):
        with pytest.raises(PcaError):
            pca.cevr(self._model([1, 1]), 3)

    def test_table_layout(self):
        model = pca.fit(_images(p=10))
        assert [q for q, _ in pca.cevr_table(model)] == [1, 3, 5, 7, 9]


class TestApproximate:
    def test_full_basis_reconstructs(self):
        imgs = _images()
        model = pca.fit(imgs)
        for im in imgs:
            assert np.max(np.abs(pca.reconstruct(model, im, model.p) - im)) < 1e-5

    def test_mean_helper(self):
        imgs = _images()
        model = pca.fit(imgs)
        np.testing.assert_allclose(pca.mean(model), np.mean(np.stack(imgs), axis=0), atol=1e-12)

    def test_residual_matches_gram_oracle(self):
        imgs = _images(p=12)
        model = pca.fit(imgs)
        q = 8
        for im in imgs[:4]:
            r = im.ravel() - model.mu
            y = model.pcs[:q].T
            gram = y.T @ y
            beta = np.linalg.solve(gram, y.T @ r)
            proj = beta @ (y.T @ r) / (r @ r)
            resid = np.sum((pca.reconstruct(model, im, q).ravel() - im.ravel()) ** 2) / (r @ r)
            assert resid == pytest.approx(1 - proj, abs=1e-6)

    def test_residual_nonincreasing_in_q(self):
        imgs = _images()
        model = pca.fit(imgs)
        for im in imgs:
            res = [np.sum((pca.reconstruct(model, im, q) - im) ** 2) for q in range(1, model.p + 1)]
            assert all(b <= a + 1e-12 for a, b in zip(res, res[1:]))

    def test_clamped(self):
        imgs = _images()
        model = pca.fit(imgs)
        out = pca.approximate(model, np.ones(model.shape), 3)
        assert out.min() >= 0 and out.max() <= 1

    def test_shape_mismatch(self):
        model = pca.fit(_images())
        with pytest.raises(PcaError):
            pca.approximate(model, np.zeros((3, 3)), 2)


class TestModelFile:
    def test_roundtrip(self, tmp_path):
        model = pca.fit(_images())
        pca.save_model(model, tmp_path / "m.bin")
        back = pca.load_model(tmp_path / "m.bin")
        assert back.shape == model.shape
        for name in ("mu", "eigvals", "eigvecs", "pcs"):
            np.testing.assert_array_equal(getattr(back, name), getattr(model, name))

    def test_layout(self, tmp_path):
        model = pca.fit(_images(p=3, shape=(2, 5)))
        pca.save_model(model, tmp_path / "m.bin")
        data = (tmp_path / "m.bin").read_bytes()
        p, n = 3, 10
        assert len(data) == 8 + 32 + 8 * (n + p + p * p + p * n)
        assert np.frombuffer(data[8:40], "<i8").tolist() == [p, n, 2, 5]

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"nonsense" * 8)
        with pytest.raises(PcaError):
            pca.load_model(tmp_path / "x.bin")
