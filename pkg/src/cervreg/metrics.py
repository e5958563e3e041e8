"""Registration quality metrics and the paired two-tailed t-test.

Both image metrics are restricted to a belt around the vessel contour of the
fixed image: pixels whose approximate signed distance to the ellipse boundary
is at most ``half_width`` in magnitude.

The Student-t tail probability is computed through the regularized
incomplete beta function,

    P(|T| > |t|) = I_x(nu / 2, 1 / 2),   x = nu / (nu + t**2),

with the continued fraction evaluated by the modified Lentz method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imgcore import ShapeError, as_field, as_image
from .segmentation import EllipseParams, ellipse_signed_distance

DEFAULT_HALF_WIDTH = 8.0


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class BeltMask:
    mask: np.ndarray  # bool (H, W)
    half_width: float
    ellipse: EllipseParams

    @property
    def shape(self):
        return self.mask.shape

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def belt_mask(ellipse: EllipseParams, half_width: float = DEFAULT_HALF_WIDTH, dims=(128, 208)) -> BeltMask:
    """Pixels within ``half_width`` of the ellipse boundary.

    ``dims`` is ``(height, width)``.  The distance is ``(r - 1) / |grad r|``
    with ``r`` the normalised elliptical radius, exact for circles and along
    the axes.
    """
    if half_width < 1:
        raise MetricError("half_width must be >= 1")
    h, w = dims
    if not (0 <= ellipse.cx <= w - 1 and 0 <= ellipse.cy <= h - 1):
        raise MetricError(f"ellipse centre ({ellipse.cx:.1f}, {ellipse.cy:.1f}) outside a {w}x{h} image")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    d = ellipse_signed_distance(xs, ys, ellipse)
    mask = np.abs(d) <= half_width
    if not mask.any():
        raise MetricError("belt mask is empty")
    return BeltMask(mask, float(half_width), ellipse)


def _belt_for(belt: BeltMask, shape):
    if belt.mask.shape != tuple(shape):
        raise ShapeError(f"belt shape {belt.mask.shape} does not match image shape {tuple(shape)}")
    if not belt.mask.any():
        raise MetricError("belt mask is empty")
    return belt.mask


def mean_abs_delta_i(f, moved, belt: BeltMask) -> float:
    """Mean ``|I(f) - I(moved)|`` over the belt."""
    f = as_image(f)
    moved = as_image(moved)
    if f.shape != moved.shape:
        raise ShapeError(f"fixed {f.shape} and moved {moved.shape} differ in shape")
    mask = _belt_for(belt, f.shape)
    diff = np.abs(f.astype(np.float64) - moved.astype(np.float64))
    return float(diff[mask].mean())


def mean_deformation_length(field, belt: BeltMask) -> float:
    """Mean displacement length ``sqrt(ux**2 + uy**2)`` over the belt (pixels)."""
    field = as_field(field)
    mask = _belt_for(belt, field.shape[1:])
    u = field.astype(np.float64)
    return float(np.hypot(u[0], u[1])[mask].mean())


# --- Student t ---------------------------------------------------------------


def _betacf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 10000) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)`` for ``a, b > 0``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast only below the mean; use symmetry above it
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf2(t: float, dof: float) -> float:
    """Two-tailed probability ``P(|T| >= |t|)`` for ``dof`` degrees of freedom."""
    if dof <= 0:
        raise ValueError("dof must be positive")
    if math.isinf(t):
        return 0.0
    return betainc(dof / 2.0, 0.5, dof / (dof + t * t))


def t_cdf(t: float, dof: float) -> float:
    """Student-t cumulative distribution function."""
    tail = 0.5 * t_sf2(t, dof)
    return 1.0 - tail if t > 0 else tail


@dataclass(frozen=True)
class TTestResult:
    t: float
    dof: int
    alpha: float
    mean_a: float = float("nan")
    mean_b: float = float("nan")


def paired_t_test(a, b) -> TTestResult:
    """Two-tailed paired t-test on ``d = a - b``.

    Zero spread of the differences gives ``alpha = 0`` when their mean is
    nonzero (``t = +-inf``) and ``alpha = 1`` when it is zero (``t = 0``).
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise MetricError(f"sample sizes differ ({a.size} vs {b.size})")
    n = a.size
    if n < 2:
        raise MetricError("paired t-test needs at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    dof = n - 1
    if sd == 0.0:
        if mean == 0.0:
            t, alpha = 0.0, 1.0
        else:
            t, alpha = math.copysign(math.inf, mean), 0.0
    else:
        t = mean / (sd / math.sqrt(n))
        alpha = min(max(t_sf2(t, dof), 0.0), 1.0)
    return TTestResult(float(t), dof, float(alpha), float(a.mean()), float(b.mean()))
