"""Image and displacement-field containers, bilinear sampling and warping.

Images are 2-D numpy arrays of shape ``(height, width)`` with intensities in
``[0, 1]``.  Displacement fields are arrays of shape ``(2, height, width)``
holding ``u_x`` in channel 0 and ``u_y`` in channel 1, in pixels.  The
registration field is the identity plus ``u``: output pixel ``(x, y)`` of a
warp samples the moving image at ``(x + u_x, y + u_y)`` (backward warping).
Samples falling outside the image are clamped to the border.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


class ShapeError(ValueError):
    """Raised when image / field dimensions do not agree."""


def as_image(img, dtype=None) -> np.ndarray:
    """Validate and return ``img`` as a 2-D intensity array."""
    arr = np.asarray(img, dtype=dtype)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    return arr


def as_field(field, shape=None) -> np.ndarray:
    arr = np.asarray(field)
    if arr.ndim != 3 or arr.shape[0] != 2:
        raise ShapeError(f"expected a (2, H, W) displacement field, got shape {arr.shape}")
    if shape is not None and arr.shape[1:] != tuple(shape):
        raise ShapeError(f"field shape {arr.shape[1:]} does not match image shape {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("displacement field contains non-finite values")
    return arr


def zero_field(shape, dtype=np.float32) -> np.ndarray:
    h, w = shape
    return np.zeros((2, h, w), dtype=dtype)


def is_valid_image(img) -> bool:
    arr = np.asarray(img)
    return arr.ndim == 2 and arr.size > 0 and bool(np.all((arr >= 0) & (arr <= 1)))


def _corners(shape, x, y):
    """Clamp sample positions and return corner indices plus fractional parts.

    ``x0`` is limited to ``w - 2`` so that the right border is reached with
    ``fx == 1``; this keeps the derivative one-sided at the border instead of
    reading outside the array.
    """
    h, w = shape
    xc = np.clip(x, 0, w - 1)
    yc = np.clip(y, 0, h - 1)
    x0 = np.clip(np.floor(xc), 0, max(w - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(yc), 0, max(h - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    return x0, x1, y0, y1, fx, fy


def bilinear_sample(img, x, y):
    """Bilinearly interpolate ``img`` at sub-pixel positions ``(x, y)``.

    ``x`` runs along columns and ``y`` along rows.  Accepts scalars or arrays
    of matching shape; positions outside ``[0, w-1] x [0, h-1]`` are clamped
    to the border (border replication).
    """
    img = as_image(img)
    scalar = np.isscalar(x) and np.isscalar(y)
    x = np.asarray(x, dtype=np.result_type(img.dtype, np.float32))
    y = np.asarray(y, dtype=x.dtype)
    x0, x1, y0, y1, fx, fy = _corners(img.shape, x, y)
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    top = v00 * (1 - fx) + v01 * fx
    bottom = v10 * (1 - fx) + v11 * fx
    out = top * (1 - fy) + bottom * fy
    return out.item() if scalar else out


def _sample_grid(shape, field):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    return xs + field[0], ys + field[1]


def warp(m, field) -> np.ndarray:
    """Warp moving image ``m`` by the registration field ``Id + field``.

    A zero field returns ``m`` unchanged (bit-exact).
    """
    m = as_image(m)
    field = as_field(field, m.shape)
    dtype = np.result_type(m.dtype, field.dtype)
    x, y = _sample_grid(m.shape, field.astype(dtype, copy=False))
    return bilinear_sample(m.astype(dtype, copy=False), x, y)


def warp_field_gradient(m, field, upstream) -> np.ndarray:
    """Vector-Jacobian product of :func:`warp` with respect to the field.

    Given ``upstream = dL/d warp(m, field)`` returns ``dL/d field`` with shape
    ``(2, H, W)``.  Components whose sample position is clamped at the border
    get zero gradient in that direction.
    """
    m = as_image(m)
    field = as_field(field, m.shape)
    dtype = np.result_type(m.dtype, field.dtype, np.asarray(upstream).dtype)
    m = m.astype(dtype, copy=False)
    h, w = m.shape
    x, y = _sample_grid(m.shape, field.astype(dtype, copy=False))
    x0, x1, y0, y1, fx, fy = _corners(m.shape, x, y)
    v00 = m[y0, x0]
    v01 = m[y0, x1]
    v10 = m[y1, x0]
    v11 = m[y1, x1]
    dx = (v01 - v00) * (1 - fy) + (v11 - v10) * fy
    dy = (v10 - v00) * (1 - fx) + (v11 - v01) * fx
    inside_x = (x >= 0) & (x <= w - 1) if w > 1 else np.zeros_like(x, dtype=bool)
    inside_y = (y >= 0) & (y <= h - 1) if h > 1 else np.zeros_like(y, dtype=bool)
    grad = np.empty((2, h, w), dtype=dtype)
    grad[0] = np.where(inside_x, upstream * dx, 0)
    grad[1] = np.where(inside_y, upstream * dy, 0)
    return grad


def shift_image(img, dx: int, dy: int) -> np.ndarray:
    """Integer shift with border replication: ``out[y, x] = img[y + dy, x + dx]``."""
    img = as_image(img)
    h, w = img.shape
    rows = np.clip(np.arange(h) + dy, 0, h - 1)
    cols = np.clip(np.arange(w) + dx, 0, w - 1)
    return img[np.ix_(rows, cols)]


# --- I/O ----------------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int):
    tokens = []
    pos = 2
    while len(tokens) < count:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary (P5) PGM file into a float32 image in [0, 1]."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    (w, h, maxval), offset = _pgm_tokens(data, 3)
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported (maxval={maxval})")
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=offset)
    return (raw.reshape(h, w).astype(np.float32) / 255.0)


def to_uint8(img) -> np.ndarray:
    img = as_image(img)
    return np.round(np.clip(img, 0, 1) * 255.0).astype(np.uint8)


def write_pgm(path, img) -> None:
    """Write ``img`` (intensities in [0, 1]) as an 8-bit binary PGM."""
    pix = to_uint8(img)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def write_field_csv(path, field) -> None:
    """Write a displacement field as CSV with header ``x,y,ux,uy``."""
    field = as_field(field)
    _, h, w = field.shape
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["x", "y", "ux", "uy"])
        for yy in range(h):
            for xx in range(w):
                out.writerow([xx, yy, repr(float(field[0, yy, xx])), repr(float(field[1, yy, xx]))])


def read_field_csv(path) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xs = rows[:, 0].astype(int)
    ys = rows[:, 1].astype(int)
    field = np.zeros((2, ys.max() + 1, xs.max() + 1))
    field[0, ys, xs] = rows[:, 2]
    field[1, ys, xs] = rows[:, 3]
    return field
