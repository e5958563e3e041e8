"""Synthetic cervical sonogram phantoms.

Each phantom is a speckled soft-tissue background with a few bright fascia
bands, a dark elliptical jugular vein (IJV) and a dark circular carotid (CCA).
Vessel walls fade over a 2 px ramp.  A minority of images get reverberation
artifacts: bright horizontal bands inside the IJV lumen.

Speckle is multiplicative, ``I * (1 + sigma * g)`` with ``g`` standard normal,
clamped to ``[0, 1]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .imgcore import write_pgm
from .segmentation import EllipseParams, ellipse_signed_distance


class PhantomError(RuntimeError):
    pass


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    width: int = 400
    height: int = 300
    ijv_a: tuple = (14.0, 26.0)
    ijv_b: tuple = (8.0, 16.0)
    ijv_phi_deg: tuple = (-25.0, 25.0)
    ijv_min_aspect: float = 1.35
    ijv_cx: tuple = (170.0, 230.0)
    ijv_cy: tuple = (120.0, 160.0)
    cca_r: tuple = (8.0, 14.0)
    cca_offset: tuple = (20.0, 45.0)
    cca_angle_deg: tuple = (120.0, 240.0)  # medial side: left of the IJV
    vessel_gap: float = 4.0
    background_level: float = 0.45
    lumen_level: float = 0.08
    speckle_sigma: float = 0.25
    fascia_count: int = 3
    fascia_level: float = 0.8
    reverberation_prob: float = 0.2
    reverberation_level: float = 0.7
    force_reverberation: bool | None = None


@dataclass(frozen=True)
class PhantomTruth:
    ijv: EllipseParams
    cca: EllipseParams
    subject_id: int = 0
    image_id: int = 0
    reverberation: bool = False


@dataclass(frozen=True)
class _Anatomy:
    ijv: EllipseParams
    cca: EllipseParams
    fascia: tuple  # (depth, tilt, amplitude, period, phase, thickness) per band


def _vessels_clear(ijv: EllipseParams, cca: EllipseParams, gap: float) -> bool:
    ang = math.atan2(cca.cy - ijv.cy, cca.cx - ijv.cx) - ijv.phi
    rho = ijv.a * ijv.b / math.hypot(ijv.b * math.cos(ang), ijv.a * math.sin(ang))
    return math.hypot(cca.cx - ijv.cx, cca.cy - ijv.cy) >= rho + cca.a + gap


def _inside(e: EllipseParams, w: int, h: int, margin: float = 4.0) -> bool:
    return (e.cx - e.a - margin >= 0 and e.cx + e.a + margin <= w - 1
            and e.cy - e.a - margin >= 0 and e.cy + e.a + margin <= h - 1)


def _sample_anatomy(spec: PhantomSpec, rng: np.random.Generator) -> _Anatomy:
    for _ in range(100):
        a = rng.uniform(*spec.ijv_a)
        b_hi = min(spec.ijv_b[1], a / spec.ijv_min_aspect)
        if b_hi < spec.ijv_b[0]:
            continue
        b = rng.uniform(spec.ijv_b[0], b_hi)
        phi = math.radians(rng.uniform(*spec.ijv_phi_deg))
        ijv = EllipseParams(rng.uniform(*spec.ijv_cx), rng.uniform(*spec.ijv_cy), a, b, phi)
        r = rng.uniform(*spec.cca_r)
        dist = rng.uniform(*spec.cca_offset)
        ang = math.radians(rng.uniform(*spec.cca_angle_deg))
        cca = EllipseParams(ijv.cx + dist * math.cos(ang), ijv.cy + dist * math.sin(ang), r, r, 0.0)
        if (_vessels_clear(ijv, cca, spec.vessel_gap) and _inside(ijv, spec.width, spec.height)
                and _inside(cca, spec.width, spec.height)):
            break
    else:
        raise PhantomError("could not place non-overlapping vessels after 100 attempts")
    fascia = []
    for k in range(spec.fascia_count):
        depth = spec.height * (0.15 + 0.7 * (k + rng.uniform(0.1, 0.9)) / max(spec.fascia_count, 1))
        fascia.append((depth, rng.uniform(-0.15, 0.15), rng.uniform(3.0, 10.0),
                       rng.uniform(120.0, 300.0), rng.uniform(0, 2 * math.pi), rng.uniform(2.0, 4.0)))
    return _Anatomy(ijv, cca, tuple(fascia))


def _render(spec: PhantomSpec, anat: _Anatomy, rng: np.random.Generator, reverb: bool) -> np.ndarray:
    h, w = spec.height, spec.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    tissue = np.full((h, w), spec.background_level)
    for depth, tilt, amp, period, phase, thick in anat.fascia:
        centre = depth + tilt * (xs - w / 2) + amp * np.sin(2 * math.pi * xs / period + phase)
        band = np.clip(1.0 - np.abs(ys - centre) / thick, 0.0, 1.0)
        tissue += (spec.fascia_level - spec.background_level) * band
    tissue = np.minimum(tissue, max(spec.fascia_level, spec.background_level))

    ijv_in = np.zeros((h, w), dtype=bool)
    for e in (anat.ijv, anat.cca):
        d = ellipse_signed_distance(xs, ys, e)
        wall = np.clip(0.5 + d / 2.0, 0.0, 1.0)  # 0 inside, 1 outside, 2 px ramp
        tissue = spec.lumen_level + (tissue - spec.lumen_level) * wall
        if e is anat.ijv:
            ijv_in = d < -1.0

    if reverb:
        e = anat.ijv
        for k in range(int(rng.integers(1, 4))):
            yb = e.cy + rng.uniform(-0.6, 0.6) * e.b
            reach = rng.uniform(0.4, 0.9) * e.a
            band = np.clip(1.0 - np.abs(ys - yb), 0.0, 1.0) * (np.abs(xs - e.cx) < reach) * ijv_in
            tissue = np.maximum(tissue, spec.reverberation_level * band)

    g = rng.standard_normal((h, w))
    img = tissue * (1.0 + spec.speckle_sigma * g)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _reverb_flag(spec: PhantomSpec, rng: np.random.Generator) -> bool:
    draw = bool(rng.uniform() < spec.reverberation_prob)
    return draw if spec.force_reverberation is None else bool(spec.force_reverberation)


def generate_phantom(spec: PhantomSpec = PhantomSpec()):
    """Generate one phantom; returns ``(image, PhantomTruth)``.  Fully seeded."""
    rng = np.random.default_rng(spec.seed)
    anat = _sample_anatomy(spec, rng)
    reverb = _reverb_flag(spec, rng)
    img = _render(spec, anat, rng, reverb)
    return img, PhantomTruth(anat.ijv, anat.cca, 0, 0, reverb)


def _jitter(anat: _Anatomy, spec: PhantomSpec, rng: np.random.Generator) -> _Anatomy:
    for _ in range(100):
        shift = rng.uniform(-2.0, 2.0, size=2)
        e = anat.ijv
        a = e.a * rng.uniform(0.92, 1.08)
        b = min(e.b * rng.uniform(0.92, 1.08), a / 1.05)
        ijv = EllipseParams(e.cx + shift[0], e.cy + shift[1], a, b,
                            e.phi + math.radians(rng.uniform(-5.0, 5.0)))
        c = anat.cca
        cshift = rng.uniform(-2.0, 2.0, size=2)
        r = c.a * rng.uniform(0.92, 1.08)
        cca = EllipseParams(c.cx + shift[0] + cshift[0], c.cy + shift[1] + cshift[1], r, r, 0.0)
        if _vessels_clear(ijv, cca, spec.vessel_gap):
            fascia = tuple((d + rng.uniform(-3, 3), t, amp, per, ph + rng.uniform(-0.2, 0.2), th)
                           for d, t, amp, per, ph, th in anat.fascia)
            return _Anatomy(ijv, cca, fascia)
    raise PhantomError("could not perturb anatomy without vessel overlap")


def generate_dataset(n_subjects: int = 14, per_subject: int = 6, base_seed: int = 0,
                     spec: PhantomSpec = PhantomSpec()):
    """``n_subjects * per_subject`` phantoms as a list of ``(image, PhantomTruth)``.

    Images of one subject share a base anatomy and differ by small jitter of
    the vessel geometry plus fresh speckle.
    """
    if n_subjects < 1 or per_subject < 1:
        raise ValueError("counts must be >= 1")
    out = []
    for s in range(n_subjects):
        srng = np.random.default_rng([base_seed, s])
        base = _sample_anatomy(spec, srng)
        for i in range(per_subject):
            rng = np.random.default_rng([base_seed, s, i + 1])
            anat = _jitter(base, spec, rng)
            reverb = _reverb_flag(spec, rng)
            img = _render(spec, anat, rng, reverb)
            out.append((img, PhantomTruth(anat.ijv, anat.cca, s, s * per_subject + i, reverb)))
    return out


def ellipse_mask(e: EllipseParams, shape) -> np.ndarray:
    """Rasterised solid ellipse (pixel centres inside the boundary)."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return ellipse_signed_distance(xs, ys, e) <= 0


TRUTH_HEADER = ["image_id", "subject_id", "file", "ijv_cx", "ijv_cy", "ijv_a", "ijv_b", "ijv_phi_deg",
                "cca_cx", "cca_cy", "cca_r", "reverberation"]


def write_dataset(dataset, out_dir) -> Path:
    """Write PGMs plus ``truth.csv``; returns the CSV path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "truth.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(TRUTH_HEADER)
        for img, t in dataset:
            name = f"s{t.subject_id:02d}_i{t.image_id:03d}.pgm"
            write_pgm(out_dir / name, img)
            wr.writerow([t.image_id, t.subject_id, name, f"{t.ijv.cx:.4f}", f"{t.ijv.cy:.4f}",
                         f"{t.ijv.a:.4f}", f"{t.ijv.b:.4f}", f"{math.degrees(t.ijv.phi):.4f}",
                         f"{t.cca.cx:.4f}", f"{t.cca.cy:.4f}", f"{t.cca.a:.4f}", int(t.reverberation)])
    return path


def read_truth(path):
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            ijv = EllipseParams(float(r["ijv_cx"]), float(r["ijv_cy"]), float(r["ijv_a"]),
                                float(r["ijv_b"]), math.radians(float(r["ijv_phi_deg"])))
            rad = float(r["cca_r"])
            cca = EllipseParams(float(r["cca_cx"]), float(r["cca_cy"]), rad, rad, 0.0)
            rows.append((r["file"], PhantomTruth(ijv, cca, int(r["subject_id"]), int(r["image_id"]),
                                                 bool(int(r["reverberation"])))))
    return rows


def with_seed(spec: PhantomSpec, seed: int) -> PhantomSpec:
    return replace(spec, seed=seed)
