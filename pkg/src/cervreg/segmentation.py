"""Feature-based vessel segmentation.

Pipeline: threshold dark pixels, label 8-connected objects, keep the ``n``
largest, split merged clusters with a marker-controlled watershed, pick the
carotid artery (most circular object in an area window) and finally the
jugular vein (largest object in a depth band close to the artery).  The
chosen object is summarised by an ellipse from its second moments.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.measure import find_contours
from skimage.morphology import disk, reconstruction

from .imgcore import as_image

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class SegmentationError(RuntimeError):
    pass


@dataclass(frozen=True)
class EllipseParams:
    """Ellipse with semi-axes ``a >= b`` and major-axis angle ``phi`` (radians).

    ``phi`` is measured from the image x-axis in pixel coordinates (y down) and
    lies in ``(-pi/2, pi/2]``.
    """

    cx: float
    cy: float
    a: float
    b: float
    phi: float = 0.0

    @property
    def center(self):
        return (self.cx, self.cy)

    def moved_to(self, cx, cy):
        return EllipseParams(cx, cy, self.a, self.b, self.phi)


@dataclass
class Component:
    label: int
    coords: np.ndarray  # (N, 2) integer (x, y) pixel positions

    @property
    def area(self) -> int:
        return len(self.coords)

    @property
    def centroid(self):
        c = self.coords.mean(axis=0)
        return (float(c[0]), float(c[1]))

    def mask(self, shape) -> np.ndarray:
        out = np.zeros(shape, dtype=bool)
        out[self.coords[:, 1], self.coords[:, 0]] = True
        return out


@dataclass(frozen=True)
class SegConfig:
    """Segmentation parameters.

    The defaults are tuned to the synthetic phantom generator and are
    dataset-dependent.  ``cca_anchor`` replaces artery detection by a fixed
    point when set.
    """

    g_thresh: float = 0.30
    n: int = 6
    y_band: tuple = (95.0, 185.0)
    d_max: float = 60.0
    area_range: tuple = (150.0, 800.0)
    r_min: float = 5.0
    h_min: float = 1.5
    smooth_sigma: float = 1.0
    closing_radius: int = 2
    cca_anchor: tuple | None = None

    def __post_init__(self):
        if not 0 < self.g_thresh < 1:
            raise ValueError("g_thresh must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.y_band[0] < self.y_band[1]:
            raise ValueError("y_band must satisfy y_min < y_max")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")


def binarize(img, g_thresh: float) -> np.ndarray:
    """Foreground mask of dark (anechoic) pixels: ``img <= g_thresh``."""
    img = as_image(img)
    return img <= g_thresh


def _components_from_labels(labels: np.ndarray, count: int | None = None):
    if count is None:
        count = int(labels.max())
    ys, xs = np.nonzero(labels)
    lab = labels[ys, xs]
    order = np.argsort(lab, kind="stable")
    lab = lab[order]
    coords = np.stack([xs[order], ys[order]], axis=1)
    bounds = np.searchsorted(lab, np.arange(1, count + 2))
    out = []
    for k in range(count):
        lo, hi = bounds[k], bounds[k + 1]
        if hi > lo:
            out.append(Component(k + 1, coords[lo:hi]))
    return out


def connected_components(mask) -> list[Component]:
    """8-connected components, labelled 1.. in raster-scan order of first pixel."""
    mask = np.asarray(mask, dtype=bool)
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    return _components_from_labels(labels, count)


def keep_n_largest(components, n: int) -> list[Component]:
    """The ``n`` largest components by area; ties go to the smaller label."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ranked = sorted(components, key=lambda c: (-c.area, c.label))
    return ranked[:n]


def components_mask(components, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for c in components:
        out[c.coords[:, 1], c.coords[:, 0]] = True
    return out


def distance_markers(dist: np.ndarray, r_min: float, h_min: float = 0.0) -> list[tuple[int, int]]:
    """Local maxima of a distance map with greedy suppression within ``r_min``.

    With ``h_min > 0`` only regional maxima rising at least ``h_min`` above
    their surroundings (h-maxima) are candidates, so the shallow bumps that a
    ragged outline leaves along an elongated ridge do not seed extra basins.
    Returns ``(row, col)`` positions sorted by decreasing distance value.
    """
    if h_min > 0:
        # domes of the h-maxima transform; keep those at least h_min high
        top = dist - reconstruction(np.maximum(dist - h_min, 0.0), dist, method="dilation")
        lab, count = ndimage.label(top > 1e-9, structure=EIGHT_CONNECTED)
        peaks = np.zeros(dist.shape, dtype=bool)
        if count:
            idx = np.arange(1, count + 1)
            height = ndimage.maximum(top, lab, index=idx)
            for k, (r, c) in zip(idx, ndimage.maximum_position(dist, lab, index=idx)):
                if height[k - 1] >= h_min - 1e-9:
                    peaks[r, c] = True
    else:
        size = 2 * int(math.ceil(r_min)) + 1
        peaks = (dist == ndimage.maximum_filter(dist, size=size, mode="constant")) & (dist > 0)
    rows, cols = np.nonzero(peaks)
    order = np.lexsort((cols, rows, -dist[rows, cols]))
    kept: list[tuple[int, int]] = []
    r2 = r_min * r_min
    for idx in order:
        r, c = int(rows[idx]), int(cols[idx])
        if all((r - kr) ** 2 + (c - kc) ** 2 >= r2 for kr, kc in kept):
            kept.append((r, c))
    return kept


def _flood(surface: np.ndarray, markers: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Priority-flood watershed on ``surface`` restricted to ``mask``."""
    h, w = surface.shape
    labels = markers.copy()
    heap = []
    counter = 0
    for r, c in zip(*np.nonzero(labels)):
        heapq.heappush(heap, (surface[r, c], counter, int(r), int(c)))
        counter += 1
    offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    while heap:
        _, _, r, c = heapq.heappop(heap)
        lab = labels[r, c]
        for dr, dc in offsets:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and labels[rr, cc] == 0:
                labels[rr, cc] = lab
                heapq.heappush(heap, (surface[rr, cc], counter, rr, cc))
                counter += 1
    return labels


def watershed(mask, r_min: float = 5.0, h_min: float = 1.5) -> list[Component]:
    """Split touching blobs of a binary mask.

    Markers are the suppressed local maxima of the Euclidean distance
    transform; flooding runs on the negated distance map.  Every object of the
    mask gets at least one marker, so each foreground pixel ends up with
    exactly one label.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise SegmentationError("watershed needs a non-empty mask")
    dist = ndimage.distance_transform_edt(mask)
    markers = np.zeros(mask.shape, dtype=np.int32)
    for k, (r, c) in enumerate(distance_markers(dist, r_min, h_min), start=1):
        markers[r, c] = k
    next_label = int(markers.max()) + 1
    cc, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    has_marker = np.zeros(count + 1, dtype=bool)
    has_marker[cc[markers > 0]] = True
    if not has_marker[1:].all():
        peaks = ndimage.maximum_position(dist, cc, index=np.arange(1, count + 1))
        for k in np.nonzero(~has_marker[1:])[0]:
            markers[peaks[k]] = next_label
            next_label += 1
    labels = _flood(-dist, markers, mask)
    return _components_from_labels(labels, next_label - 1)


def ellipse_signed_distance(xs, ys, e: EllipseParams):
    """Approximate signed distance to an ellipse boundary (negative inside).

    Uses ``(r - 1) / |grad r|`` with ``r`` the normalised elliptical radius;
    exact along both axes and for circles.
    """
    ca, sa = math.cos(e.phi), math.sin(e.phi)
    dx = xs - e.cx
    dy = ys - e.cy
    u = dx * ca + dy * sa
    v = -dx * sa + dy * ca
    r = np.sqrt((u / e.a) ** 2 + (v / e.b) ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.sqrt((u / e.a**2) ** 2 + (v / e.b**2) ** 2) / r
        d = (r - 1.0) / g
    return np.where(r > 0, d, -e.b)


def fit_ellipse(c: Component) -> EllipseParams:
    """Moment-based ellipse: axes ``2*sqrt(eigenvalue)`` of the coordinate covariance."""
    if c.area < 5:
        raise SegmentationError(f"component {c.label} too small for an ellipse fit (area {c.area})")
    pts = c.coords.astype(np.float64)
    cx, cy = pts.mean(axis=0)
    d = pts - (cx, cy)
    sxx = float(np.mean(d[:, 0] ** 2))
    syy = float(np.mean(d[:, 1] ** 2))
    sxy = float(np.mean(d[:, 0] * d[:, 1]))
    half_tr = 0.5 * (sxx + syy)
    disc = math.hypot(0.5 * (sxx - syy), sxy)
    lam1, lam2 = half_tr + disc, half_tr - disc
    if lam2 <= 1e-12 * max(1.0, lam1):
        raise SegmentationError(f"component {c.label} is degenerate (collinear pixels)")
    if disc <= 1e-9 * lam1:
        phi = 0.0
    else:
        phi = 0.5 * math.atan2(2.0 * sxy, sxx - syy)
        if phi <= -math.pi / 2:
            phi += math.pi
    return EllipseParams(float(cx), float(cy), 2.0 * math.sqrt(lam1), 2.0 * math.sqrt(lam2), phi)


def contour_length(c: Component, sigma: float = 1.0) -> float:
    """Length of the outer iso-contour of the (lightly smoothed) object mask.

    Smoothing keeps single-pixel raggedness of speckled outlines from
    inflating the perimeter.
    """
    x0, y0 = c.coords.min(axis=0)
    local = Component(c.label, c.coords - (x0, y0))
    pad = 2 + int(math.ceil(3 * sigma))
    m = np.pad(local.mask((local.coords[:, 1].max() + 1, local.coords[:, 0].max() + 1)), pad).astype(float)
    if sigma > 0:
        m = ndimage.gaussian_filter(m, sigma)
    contours = find_contours(m, 0.5)
    if not contours:
        return 0.0
    return max(float(np.sum(np.hypot(*np.diff(ct, axis=0).T))) for ct in contours)


def circularity(c: Component) -> float:
    """``4 pi area / perimeter**2``; 1 for a disc, smaller for elongated shapes."""
    per = contour_length(c)
    if per <= 0:
        return 0.0
    return 4.0 * math.pi * c.area / per**2


def detect_cca(components, cfg: SegConfig) -> Component:
    """Most circular component with area inside ``cfg.area_range``."""
    lo, hi = cfg.area_range
    cands = [c for c in components if lo <= c.area <= hi]
    if not cands:
        raise SegmentationError("no CCA candidate within the area range")
    return max(cands, key=lambda c: (circularity(c), c.area, -c.label))


def select_ijv(components, cca, cfg: SegConfig) -> Component:
    """Largest component (other than the artery) in the depth band near the artery.

    ``cca`` may be a :class:`Component` or a fixed ``(x, y)`` anchor point.
    """
    if isinstance(cca, Component):
        anchor = cca.centroid
        skip = cca.label
    else:
        anchor = tuple(cca)
        skip = None
    y_min, y_max = cfg.y_band
    ok = []
    for c in components:
        if c.label == skip:
            continue
        cx, cy = c.centroid
        if y_min <= cy <= y_max and math.hypot(cx - anchor[0], cy - anchor[1]) <= cfg.d_max:
            ok.append(c)
    if not ok:
        raise SegmentationError("IJV not found")
    return max(ok, key=lambda c: (c.area, -c.label))


@dataclass
class Segmentation:
    """Everything produced by :func:`segment`; handy for overlays and debugging."""

    mask: np.ndarray
    components: list = field(default_factory=list)
    cca: Component | None = None
    ijv: Component | None = None
    ellipse: EllipseParams | None = None


def segment(img, cfg: SegConfig = SegConfig()) -> Segmentation:
    """Run the full segmentation chain and fit an ellipse to the IJV."""
    img = as_image(img)
    work = ndimage.gaussian_filter(img.astype(np.float64), cfg.smooth_sigma) if cfg.smooth_sigma > 0 else img
    mask = binarize(work, cfg.g_thresh)
    if cfg.closing_radius > 0:
        pad = cfg.closing_radius
        mask = ndimage.binary_closing(np.pad(mask, pad), structure=disk(pad))[pad:-pad, pad:-pad]
    kept = keep_n_largest(connected_components(mask), cfg.n)
    if not kept:
        raise SegmentationError("no foreground objects")
    parts = watershed(components_mask(kept, mask.shape), cfg.r_min, cfg.h_min)
    cca = None
    if cfg.cca_anchor is None:
        cca = detect_cca(parts, cfg)
        ijv = select_ijv(parts, cca, cfg)
    else:
        ijv = select_ijv(parts, cfg.cca_anchor, cfg)
    return Segmentation(mask, parts, cca, ijv, fit_ellipse(ijv))


def segment_ijv(img, cfg: SegConfig = SegConfig()) -> EllipseParams:
    return segment(img, cfg).ellipse


def label_image(components, shape) -> np.ndarray:
    """Integer label raster (0 = background)."""
    out = np.zeros(shape, dtype=np.int32)
    for c in components:
        out[c.coords[:, 1], c.coords[:, 0]] = c.label
    return out


def draw_ellipse_outline(img, e: EllipseParams, value: float = 1.0) -> np.ndarray:
    out = np.array(img, dtype=np.float32, copy=True)
    t = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    ca, sa = math.cos(e.phi), math.sin(e.phi)
    x = e.cx + e.a * np.cos(t) * ca - e.b * np.sin(t) * sa
    y = e.cy + e.a * np.cos(t) * sa + e.b * np.sin(t) * ca
    xi = np.round(x).astype(int)
    yi = np.round(y).astype(int)
    ok = (xi >= 0) & (xi < out.shape[1]) & (yi >= 0) & (yi < out.shape[0])
    out[yi[ok], xi[ok]] = value
    return out
