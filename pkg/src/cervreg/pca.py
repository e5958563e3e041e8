"""Principal component analysis of an image set.

Each of the ``p`` images is one variable whose ``n`` pixels are the
observations.  Images are centred by the mean image, the ``p x p``
covariance of the centred image vectors is diagonalised with a cyclic Jacobi
solver, and the principal-component images are the matching linear
combinations of centred images, scaled to unit Euclidean norm.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .imgcore import as_image

MAGIC = b"CRPCA\x00v1"


class PcaError(ValueError):
    pass


def jacobi_eigh(a, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues in descending order
    and eigenvectors as columns.  Sweeps stop once the off-diagonal Frobenius
    norm drops below ``tol`` times the matrix norm.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PcaError("jacobi_eigh needs a square matrix")
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0)) if theta != 0 else 1.0
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


@dataclass(frozen=True)
class PcaModel:
    shape: tuple  # (height, width) of the images
    mu: np.ndarray  # (n,)
    eigvals: np.ndarray  # (p,) descending, >= 0
    eigvecs: np.ndarray  # (p, p) orthonormal loadings, columns
    pcs: np.ndarray  # (p, n) unit-norm principal-component images (zero rows for null components)

    @property
    def p(self) -> int:
        return len(self.eigvals)

    @property
    def n(self) -> int:
        return len(self.mu)

    @property
    def total_variance(self) -> float:
        return float(np.sum(self.eigvals))

    def mean_image(self) -> np.ndarray:
        return self.mu.reshape(self.shape).copy()

    def pc_image(self, j: int) -> np.ndarray:
        """``j``-th principal component image (0-based)."""
        return self.pcs[j].reshape(self.shape)


def fit(images) -> PcaModel:
    """Fit a PCA model to a list of equally sized images (``p >= 2``)."""
    images = [as_image(im) for im in images]
    if len(images) < 2:
        raise PcaError("PCA needs at least two images")
    shape = images[0].shape
    if any(im.shape != shape for im in images):
        raise PcaError("all images must share the same dimensions")
    x = np.stack([im.ravel().astype(np.float64) for im in images], axis=1)  # (n, p)
    n, p = x.shape
    mu = x.mean(axis=1)
    xc = x - mu[:, None]
    cov = xc.T @ xc / (n - 1)
    lam, vecs = jacobi_eigh(cov)
    lam = np.where(lam < 0, 0.0, lam)
    vecs = _fix_signs(vecs)
    y = (xc @ vecs).T  # (p, n)
    norms = np.linalg.norm(y, axis=1)
    live = norms > 1e-9 * max(1.0, norms.max(initial=0.0))
    pcs = np.zeros_like(y)
    pcs[live] = y[live] / norms[live, None]
    return PcaModel(shape, mu, lam, vecs, pcs)


def total_variance(images) -> float:
    """Sum over images of the pixel variance about the mean image."""
    x = np.stack([np.asarray(im, dtype=np.float64).ravel() for im in images], axis=1)
    xc = x - x.mean(axis=1, keepdims=True)
    return float(np.sum(xc * xc) / (x.shape[0] - 1))


def cevr(model: PcaModel, q: int) -> float:
    """Cumulative explained variance ratio of the first ``q`` components."""
    if not 1 <= q <= model.p:
        raise PcaError(f"q must lie in [1, {model.p}]")
    total = model.total_variance
    if total <= 0:
        raise PcaError("total variance is zero; cEVR undefined")
    return float(min(np.sum(model.eigvals[:q]) / total, 1.0))


def coefficients(model: PcaModel, img, q: int) -> np.ndarray:
    """Least-squares weights of the first ``q`` PC images for ``img - mu``."""
    img = as_image(img)
    if img.shape != model.shape:
        raise PcaError(f"image shape {img.shape} does not match model shape {model.shape}")
    if not 1 <= q <= model.p:
        raise PcaError(f"q must lie in [1, {model.p}]")
    r = img.ravel().astype(np.float64) - model.mu
    basis = model.pcs[:q].T
    beta, *_ = np.linalg.lstsq(basis, r, rcond=None)
    return beta


def reconstruct(model: PcaModel, img, q: int) -> np.ndarray:
    """Unclamped q-component reconstruction (float64)."""
    beta = coefficients(model, img, q)
    return (model.pcs[:q].T @ beta + model.mu).reshape(model.shape)


def approximate(model: PcaModel, img, q: int = 8) -> np.ndarray:
    """q-component approximation of ``img``, clamped to ``[0, 1]``."""
    out = np.clip(reconstruct(model, img, q), 0.0, 1.0)
    return out.astype(np.asarray(img).dtype if np.issubdtype(np.asarray(img).dtype, np.floating) else np.float64)


def mean(model: PcaModel) -> np.ndarray:
    """The zero-component approximation: the mean image."""
    return model.mean_image()


def cevr_table(model: PcaModel, qs=None):
    """``(q, cEVR)`` pairs; defaults to odd ``q`` like 1, 3, 5, ..."""
    if qs is None:
        qs = range(1, model.p + 1, 2)
    return [(q, cevr(model, q)) for q in qs]


def save_model(model: PcaModel, path) -> None:
    """Binary model file: header, then little-endian float64 arrays."""
    p, n = model.p, model.n
    h, w = model.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4q", p, n, h, w))
        for arr in (model.mu, model.eigvals, model.eigvecs, model.pcs):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> PcaModel:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise PcaError(f"{path}: not a PCA model file")
        p, n, h, w = struct.unpack("<4q", fh.read(32))

        def take(count, shape):
            return np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).astype(np.float64)

        mu = take(n, (n,))
        lam = take(p, (p,))
        vecs = take(p * p, (p, p))
        pcs = take(p * n, (p, n))
    return PcaModel((h, w), mu, lam, vecs, pcs)
