"""Registration loss, Adam optimiser and the training loop.

The loss for a fixed image ``f``, moving image ``m`` and displacement ``u``::

    L_sim    = mean((f - warp(m, u)) ** 2)
    L_smooth = (sum(dx(u)**2) + sum(dy(u)**2)) / (H * W)
    J        = L_sim + gamma * L_smooth

``dx`` and ``dy`` are forward differences over both field channels, so a
spatially constant field has ``L_smooth == 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import metrics, pca
from .affine import default_reference, reference_in_crop
from .imgcore import ShapeError, as_field, as_image, warp, warp_field_gradient
from .unet import NetConfig, Network, build

VARIANTS = ("original", "pca_q8")


class TrainingDivergence(FloatingPointError):
    """Raised when a loss term stops being finite."""

    def __init__(self, epoch: int, term: str, value: float):
        super().__init__(f"training diverged at epoch {epoch}: {term} = {value}")
        self.epoch = epoch
        self.term = term
        self.value = value


@dataclass(frozen=True)
class LossTerms:
    J: float
    L_sim: float
    L_smooth: float
    gamma: float


def _check(f, m, field):
    f = as_image(f)
    m = as_image(m)
    if f.shape != m.shape:
        raise ShapeError(f"fixed {f.shape} and moving {m.shape} differ in shape")
    return f, m, as_field(field, f.shape)


def smoothness(field) -> float:
    u = np.asarray(field, dtype=np.float64)
    n = u.shape[1] * u.shape[2]
    gx = np.diff(u, axis=2)
    gy = np.diff(u, axis=1)
    return float((np.sum(gx * gx) + np.sum(gy * gy)) / n)


def smoothness_gradient(field) -> np.ndarray:
    u = np.asarray(field, dtype=np.float64)
    n = u.shape[1] * u.shape[2]
    gx = np.diff(u, axis=2)
    gy = np.diff(u, axis=1)
    g = np.zeros_like(u)
    g[:, :, 1:] += gx
    g[:, :, :-1] -= gx
    g[:, 1:, :] += gy
    g[:, :-1, :] -= gy
    return g * (2.0 / n)


def _terms(f, moved, field, gamma):
    r = moved - f
    l_sim = float(np.mean(r * r))
    l_smooth = smoothness(field)
    return LossTerms(l_sim + gamma * l_smooth, l_sim, l_smooth, float(gamma)), r


def loss(f, m, field, gamma: float) -> LossTerms:
    """Similarity plus weighted smoothness for one image pair."""
    f, m, field = _check(f, m, field)
    f64 = f.astype(np.float64)
    moved = warp(m.astype(np.float64), field.astype(np.float64))
    return _terms(f64, moved, field, gamma)[0]


def loss_and_gradient(f, m, field, gamma: float):
    """``(LossTerms, dJ/du)``; the gradient has the field's shape (float64)."""
    f, m, field = _check(f, m, field)
    m64 = m.astype(np.float64)
    u64 = field.astype(np.float64)
    moved = warp(m64, u64)
    terms, r = _terms(f.astype(np.float64), moved, u64, gamma)
    grad = warp_field_gradient(m64, u64, r * (2.0 / r.size))
    if gamma:
        grad += gamma * smoothness_gradient(u64)
    return terms, grad


def loss_gradient(f, m, field, gamma: float) -> np.ndarray:
    return loss_and_gradient(f, m, field, gamma)[1]


# --- optimiser ---------------------------------------------------------------


class Adam:
    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        """In-place update of ``params``."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        step = self.lr * math.sqrt(c2) / c1
        eps = self.eps * math.sqrt(c2)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= step * m / (np.sqrt(v) + eps)


# --- training ----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.001
    learning_rate: float = 1e-4
    epochs: int = 300
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    split: float = 0.7
    seed: int = 0
    image_variant: str = "original"
    pca_q: int = 8
    half_width: float = metrics.DEFAULT_HALF_WIDTH

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise ValueError("split must lie strictly between 0 and 1")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.learning_rate <= 0 or self.epochs < 1:
            raise ValueError("learning_rate must be > 0 and epochs >= 1")
        if self.image_variant not in VARIANTS:
            raise ValueError(f"image_variant must be one of {VARIANTS}")


@dataclass
class TrainHistory:
    epochs: list = dc_field(default_factory=list)  # LossTerms of epoch means, training set
    train_ids: list = dc_field(default_factory=list)
    test_ids: list = dc_field(default_factory=list)
    test: list = dc_field(default_factory=list)  # EvalRecord per held-out image

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["epoch", "J", "L_sim", "L_smooth"])
            for k, t in enumerate(self.epochs, start=1):
                wr.writerow([k, fmt(t.J), fmt(t.L_sim), fmt(t.L_smooth)])


def fmt(x: float) -> str:
    """Fixed, platform-independent float formatting for CSV output."""
    return f"{x:.10g}"


@dataclass(frozen=True)
class EvalRecord:
    image_id: int
    delta_i_before: float
    delta_i: float
    l_bar: float


def split_dataset(items, fraction: float = 0.7, seed: int = 0):
    """Seeded shuffle, then the first ``floor(fraction * n)`` items train.

    Returns ``(train, test)`` lists of the original items.
    """
    items = list(items)
    n = len(items)
    if n < 4:
        raise ValueError(f"need at least 4 images to split, got {n}")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    # tolerance keeps e.g. 0.7 * 30 = 20.999... from flooring to 20
    n_train = int(math.floor(fraction * n + 1e-9))
    n_train = min(max(n_train, 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    return [items[i] for i in order[:n_train]], [items[i] for i in order[n_train:]]


def variant_images(images, cfg: TrainConfig, reference=None, pca_model=None):
    """Moving images as the network sees them for ``cfg.image_variant``.

    ``cfg.pca_q`` is capped at the number of images in the PCA model.
    """
    if cfg.image_variant == "original":
        return [as_image(im) for im in images]
    if pca_model is None:
        pool = list(images) + ([reference] if reference is not None else [])
        pca_model = pca.fit(pool)
    q = min(cfg.pca_q, pca_model.p)
    return [pca.approximate(pca_model, im, q).astype(np.float32) for im in images]


def default_belt(shape=(128, 208), half_width: float = metrics.DEFAULT_HALF_WIDTH):
    return metrics.belt_mask(reference_in_crop(default_reference(), shape), half_width, shape)


def register_pair(net: Network, m, f, gamma: float = 0.001):
    """Predict the field for ``(m, f)``, warp ``m`` and evaluate the loss."""
    m = as_image(m)
    f = as_image(f)
    if m.shape != f.shape:
        raise ShapeError(f"moving {m.shape} and fixed {f.shape} differ in shape")
    u = net.forward(m, f)
    moved = warp(m, u.astype(m.dtype, copy=False))
    return u, moved, loss(f, m, u, gamma)


def evaluate(net: Network, moving, reference, belt, ids=None, originals=None):
    """Belt metrics for each moving image against ``reference``.

    ``originals``, when given, are warped with the field predicted from the
    corresponding ``moving`` image; ``delta_i`` is then measured on them.
    """
    ids = list(range(len(moving))) if ids is None else list(ids)
    out = []
    for k, m in enumerate(moving):
        src = m if originals is None else originals[k]
        u = net.forward(m, reference)
        moved = warp(src, u.astype(src.dtype, copy=False))
        out.append(EvalRecord(int(ids[k]),
                              metrics.mean_abs_delta_i(reference, src, belt),
                              metrics.mean_abs_delta_i(reference, moved, belt),
                              metrics.mean_deformation_length(u, belt)))
    return out


def train(images, reference, net_cfg: NetConfig, cfg: TrainConfig = TrainConfig(), *,
          ids=None, pca_model=None, belt=None, progress=None):
    """Train a fresh network on a seeded split of ``images`` against ``reference``.

    ``images`` are the original moving images; for the ``pca_q8`` variant they
    are replaced by their q-component approximations (fitted on ``images``
    plus the reference unless ``pca_model`` is given), while the reference
    stays original.  Returns ``(network, TrainHistory)``; the history holds
    per-epoch training means and belt metrics on the held-out images.
    """
    reference = as_image(reference).astype(np.float32)
    images = [as_image(im).astype(np.float32) for im in images]
    if any(im.shape != reference.shape for im in images):
        raise ShapeError("all images must match the reference shape")
    ids = list(range(len(images))) if ids is None else list(ids)
    moving = variant_images(images, cfg, reference, pca_model)
    train_idx, test_idx = split_dataset(range(len(images)), cfg.split, cfg.seed)

    net = build(net_cfg, seed=cfg.seed)
    opt = Adam(net.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng([cfg.seed, 1])
    hist = TrainHistory(train_ids=[ids[i] for i in train_idx], test_ids=[ids[i] for i in test_idx])
    for epoch in range(1, cfg.epochs + 1):
        acc = np.zeros(3)
        for i in rng.permutation(train_idx):
            u = net.forward(moving[i], reference, cache=True)
            if not np.all(np.isfinite(u)):
                raise TrainingDivergence(epoch, "field", float(np.max(np.abs(u))))
            terms, grad = loss_and_gradient(reference, moving[i], u, cfg.gamma)
            for name in ("L_sim", "L_smooth", "J"):
                if not math.isfinite(getattr(terms, name)):
                    raise TrainingDivergence(epoch, name, getattr(terms, name))
            opt.step(net.params, net.backward(grad))
            acc += (terms.J, terms.L_sim, terms.L_smooth)
        acc /= len(train_idx)
        hist.epochs.append(LossTerms(float(acc[0]), float(acc[1]), float(acc[2]), cfg.gamma))
        if progress is not None:
            progress(epoch, hist.epochs[-1])
    if belt is None:
        belt = default_belt(reference.shape, cfg.half_width)
    hist.test = evaluate(net, [moving[i] for i in test_idx], reference, belt,
                         [ids[i] for i in test_idx])
    return net, hist
