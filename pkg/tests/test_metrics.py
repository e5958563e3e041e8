"""Belt-region metrics and the paired t-test."""

import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from cervreg.imgcore import ShapeError
from cervreg.metrics import (
    MetricError,
    belt_mask,
    betainc,
    mean_abs_delta_i,
    mean_deformation_length,
    paired_t_test,
    t_cdf,
    t_sf2,
)
from cervreg.segmentation import EllipseParams

REF = EllipseParams(103.5, 63.5, 22.0, 13.0, 0.0)


def _t_cdf_quad(t, dof):
    """Student-t CDF by direct quadrature of the density."""
    mpmath.mp.dps = 30
    nu = mpmath.mpf(dof)
    c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
    dens = lambda x: c * (1 + x * x / nu) ** (-(nu + 1) / 2)
    half = mpmath.quad(dens, [0, abs(t)])
    return float(0.5 + half if t >= 0 else 0.5 - half)


class TestBelt:
    def test_circle_annulus_area(self):
        belt = belt_mask(EllipseParams(60, 50, 20, 20, 0.0), 3, (100, 120))
        area = math.pi * (23**2 - 17**2)
        assert abs(belt.count / area - 1) < 0.10

    def test_wide_belt_covers_interior(self):
        e = EllipseParams(60, 50, 20, 12, 0.4)
        belt = belt_mask(e, 20, (100, 120))
        ys, xs = np.mgrid[0:100, 0:120]
        c, s = math.cos(e.phi), math.sin(e.phi)
        xr = (xs - e.cx) * c + (ys - e.cy) * s
        yr = -(xs - e.cx) * s + (ys - e.cy) * c
        inside = (xr / e.a) ** 2 + (yr / e.b) ** 2 <= 1
        assert np.all(belt.mask[inside])

    def test_default_reference_belt(self):
        belt = belt_mask(REF)
        assert belt.shape == (128, 208)
        assert belt.mask[63, 103 + 22] and not belt.mask[63, 103]

    def test_errors(self):
        with pytest.raises(MetricError):
            belt_mask(REF, 0.5)
        with pytest.raises(MetricError):
            belt_mask(EllipseParams(500, 60, 22, 13, 0.0))


class TestDeltaI:
    def test_trivial(self):
        belt = belt_mask(REF)
        f = np.random.default_rng(0).random((128, 208))
        assert mean_abs_delta_i(f, f, belt) == 0
        assert mean_abs_delta_i(np.ones((128, 208)), np.zeros((128, 208)), belt) == 1

    def test_loop_oracle(self):
        belt = belt_mask(REF)
        rng = np.random.default_rng(1)
        f, m = rng.random((128, 208)), rng.random((128, 208))
        total, n = 0.0, 0
        for y in range(128):
            for x in range(208):
                if belt.mask[y, x]:
                    total += abs(f[y, x] - m[y, x])
                    n += 1
        assert mean_abs_delta_i(f, m, belt) == pytest.approx(total / n, abs=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            mean_abs_delta_i(np.zeros((128, 208)), np.zeros((128, 200)), belt_mask(REF))
        with pytest.raises(ShapeError):
            mean_abs_delta_i(np.zeros((64, 64)), np.zeros((64, 64)), belt_mask(REF))


class TestDeformationLength:
    def test_trivial(self):
        belt = belt_mask(REF)
        assert mean_deformation_length(np.zeros((2, 128, 208)), belt) == 0
        u = np.empty((2, 128, 208))
        u[0], u[1] = 3.0, 4.0
        assert mean_deformation_length(u, belt) == pytest.approx(5.0)

    def test_loop_oracle(self):
        belt = belt_mask(REF)
        u = np.random.default_rng(2).normal(0, 2, size=(2, 128, 208))
        vals = [math.sqrt(u[0, y, x] ** 2 + u[1, y, x] ** 2)
                for y in range(128) for x in range(208) if belt.mask[y, x]]
        assert mean_deformation_length(u, belt) == pytest.approx(sum(vals) / len(vals), abs=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            mean_deformation_length(np.zeros((2, 64, 64)), belt_mask(REF))


class TestBetainc:
    @pytest.mark.parametrize("a,b", [(0.5, 0.5), (2.0, 0.5), (12.0, 0.5), (40.0, 0.5), (3.0, 7.0)])
    def test_against_scipy(self, a, b):
        from scipy import special
        for x in np.linspace(0.01, 0.99, 25):
            assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-13)

    def test_bounds(self):
        assert betainc(2, 3, 0.0) == 0 and betainc(2, 3, 1.0) == 1
        with pytest.raises(ValueError):
            betainc(0, 1, 0.5)
        with pytest.raises(ValueError):
            betainc(1, 1, 1.5)


class TestTDistribution:
    @pytest.mark.parametrize("dof", [1, 4, 24, 80])
    def test_cdf_matches_quadrature(self, dof):
        for t in [-6.0, -2.5, -0.7, 0.0, 0.3, 1.0, 2.2, 4.0, 9.0]:
            assert t_cdf(t, dof) == pytest.approx(_t_cdf_quad(t, dof), abs=1e-8)

    def test_symmetry(self):
        for dof in (1, 3, 17):
            for t in (0.2, 1.5, 3.3):
                assert t_cdf(-t, dof) == pytest.approx(1 - t_cdf(t, dof), abs=1e-14)
                assert t_sf2(-t, dof) == t_sf2(t, dof)

    def test_edges(self):
        assert t_sf2(0.0, 5) == 1.0
        assert t_sf2(math.inf, 5) == 0.0
        with pytest.raises(ValueError):
            t_sf2(1.0, 0)


class TestPairedTTest:
    def test_worked_example(self):
        r = paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
        assert r.t == pytest.approx(3 * math.sqrt(5) / math.sqrt(2.5), abs=1e-4)
        assert r.t == pytest.approx(4.2426, abs=1e-4)
        assert r.dof == 4
        assert r.alpha == pytest.approx(0.0132, abs=1e-4)

    def test_identical_samples(self):
        r = paired_t_test([0.3, 0.1, 0.2], [0.3, 0.1, 0.2])
        assert (r.t, r.alpha) == (0.0, 1.0)

    def test_constant_shift(self):
        r = paired_t_test([1.0, 2.0, 3.0], [0.5, 1.5, 2.5])
        assert r.t == math.inf and r.alpha == 0.0

    def test_swap(self):
        rng = np.random.default_rng(3)
        a, b = rng.random(9), rng.random(9)
        r1, r2 = paired_t_test(a, b), paired_t_test(b, a)
        assert r1.t == pytest.approx(-r2.t, rel=1e-12)
        assert r1.alpha == pytest.approx(r2.alpha, rel=1e-12)

    @pytest.mark.parametrize("n", [5, 10, 25])
    def test_reference_oracle(self, n):
        rng = np.random.default_rng(n)
        for _ in range(20):
            a = rng.normal(0, 1, n)
            b = a + rng.normal(rng.uniform(-0.8, 0.8), 1, n)
            ref = stats.ttest_rel(a, b)
            r = paired_t_test(a, b)
            assert r.t == pytest.approx(ref.statistic, abs=1e-4)
            assert r.alpha == pytest.approx(ref.pvalue, abs=1e-6)
            assert r.mean_a == pytest.approx(a.mean()) and r.mean_b == pytest.approx(b.mean())

    def test_errors(self):
        with pytest.raises(MetricError):
            paired_t_test([1.0], [2.0])
        with pytest.raises(MetricError):
            paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])
