"""Ellipse-driven affine pre-registration.

The object vessel is moved to the image centre, rotated by ``-phi`` so its
major axis lies along x, and scaled per axis so its semi-axes match the
reference ellipse.  A fixed 208 x 128 window around the centre is returned.
The transform is applied by inverse mapping with bilinear sampling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .imgcore import as_image, bilinear_sample
from .segmentation import EllipseParams, SegConfig

CROP_W = 208
CROP_H = 128


class AffineError(ValueError):
    pass


@dataclass(frozen=True)
class AffineParams:
    tx: float
    ty: float
    phi: float  # object angle; the image is rotated by -phi
    s_x: float
    s_y: float
    crop_w: int = CROP_W
    crop_h: int = CROP_H

    def __post_init__(self):
        if self.s_x <= 0 or self.s_y <= 0:
            raise AffineError("scale factors must be positive")

    @classmethod
    def identity(cls):
        return cls(0.0, 0.0, 0.0, 1.0, 1.0)


def image_center(shape, crop=(CROP_H, CROP_W)):
    """Pivot point used by the transform: centre of the central crop window.

    For even image sizes this is the geometric centre ``((w-1)/2, (h-1)/2)``.
    """
    h, w = shape
    ch, cw = crop
    return ((w - cw) // 2 + (cw - 1) / 2.0, (h - ch) // 2 + (ch - 1) / 2.0)


def compute_affine(obj: EllipseParams, ref: EllipseParams, shape=(300, 400)) -> AffineParams:
    """Parameters mapping the object ellipse onto the reference ellipse.

    ``s_x = ref.a / obj.a`` and ``s_y = ref.b / obj.b``; the translation
    brings the object centre to the pivot of an image of ``shape``.
    """
    if obj.a < 1 or obj.b < 1:
        raise AffineError(f"degenerate object ellipse (a={obj.a:.3g}, b={obj.b:.3g})")
    cx, cy = image_center(shape)
    return AffineParams(cx - obj.cx, cy - obj.cy, obj.phi, ref.a / obj.a, ref.b / obj.b)


def source_coords(p: AffineParams, shape):
    """Source-image sampling positions for every crop pixel (inverse mapping)."""
    cx, cy = image_center(shape, (p.crop_h, p.crop_w))
    j = np.arange(p.crop_w, dtype=np.float64) - (p.crop_w - 1) / 2.0
    i = np.arange(p.crop_h, dtype=np.float64) - (p.crop_h - 1) / 2.0
    qx, qy = np.meshgrid(j, i)
    # undo scale, then rotation by -phi, then translation
    ux = qx / p.s_x
    uy = qy / p.s_y
    c, s = math.cos(p.phi), math.sin(p.phi)
    rx = c * ux - s * uy
    ry = s * ux + c * uy
    return rx + cx - p.tx, ry + cy - p.ty


def forward_point(p: AffineParams, shape, x, y):
    """Where source point ``(x, y)`` lands in the crop (pixel coordinates)."""
    cx, cy = image_center(shape, (p.crop_h, p.crop_w))
    dx, dy = x + p.tx - cx, y + p.ty - cy
    c, s = math.cos(p.phi), math.sin(p.phi)
    rx = c * dx + s * dy
    ry = -s * dx + c * dy
    return rx * p.s_x + (p.crop_w - 1) / 2.0, ry * p.s_y + (p.crop_h - 1) / 2.0


def apply_affine(img, p: AffineParams) -> np.ndarray:
    """Translate, rotate by ``-phi``, scale, then crop to ``crop_h x crop_w``."""
    img = as_image(img)
    h, w = img.shape
    if h < p.crop_h or w < p.crop_w:
        raise AffineError(f"image {w}x{h} smaller than crop {p.crop_w}x{p.crop_h}")
    x, y = source_coords(p, img.shape)
    out = bilinear_sample(img, x.astype(img.dtype), y.astype(img.dtype))
    return np.clip(out, 0, 1).astype(img.dtype, copy=False)


def central_crop(img, crop=(CROP_H, CROP_W)) -> np.ndarray:
    img = as_image(img)
    h, w = img.shape
    y0 = (h - crop[0]) // 2
    x0 = (w - crop[1]) // 2
    return img[y0:y0 + crop[0], x0:x0 + crop[1]]


def reference_in_crop(ref: EllipseParams, crop=(CROP_H, CROP_W)) -> EllipseParams:
    """Where the reference ellipse sits in a pre-registered crop."""
    return EllipseParams((crop[1] - 1) / 2.0, (crop[0] - 1) / 2.0, ref.a, ref.b, 0.0)


def crop_seg_config(ref: EllipseParams | None = None, base: SegConfig = SegConfig(),
                    crop=(CROP_H, CROP_W)) -> SegConfig:
    """Segmentation settings for re-detecting the IJV inside a pre-registered crop.

    The vessel is expected at the crop centre, so artery detection is
    replaced by a fixed anchor there.
    """
    ref = ref if ref is not None else default_reference()
    c = reference_in_crop(ref, crop)
    return replace(base, cca_anchor=(c.cx, c.cy), d_max=max(15.0, 0.5 * ref.b),
                   y_band=(c.cy - 24.0, c.cy + 24.0))


ELLIPSE_HEADER = ["label", "cx", "cy", "a", "b", "phi_deg"]


def write_ellipses(path, rows) -> None:
    """Write ``(label, EllipseParams)`` pairs as ``label,cx,cy,a,b,phi_deg``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(ELLIPSE_HEADER)
        for label, e in rows:
            wr.writerow([label, f"{e.cx:.6f}", f"{e.cy:.6f}", f"{e.a:.6f}", f"{e.b:.6f}",
                         f"{math.degrees(e.phi):.6f}"])


def _parse_ellipses(lines):
    out = []
    for r in csv.DictReader(lines):
        out.append((r["label"], EllipseParams(float(r["cx"]), float(r["cy"]), float(r["a"]),
                                              float(r["b"]), math.radians(float(r["phi_deg"])))))
    return out


def read_ellipses(path):
    with open(path, newline="") as fh:
        return _parse_ellipses(fh)


def default_reference() -> EllipseParams:
    """Reference IJV ellipse shipped with the package (``data/reference.csv``)."""
    text = resources.files("cervreg").joinpath("data/reference.csv").read_text()
    return _parse_ellipses(text.splitlines())[0][1]
