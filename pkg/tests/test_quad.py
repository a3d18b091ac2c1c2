import math

import numpy as np
import pytest

from haar_averager.engine.quad import (
    DegenerateRegion,
    McConfig,
    NonConvergence,
    Polygon,
    QuadConfig,
    integrate_1d,
    integrate_polygon,
    mc_integrate,
    polygon_quadrature,
    quad1d,
)


class TestPolygon:
    def test_clockwise_input_is_reoriented(self):
        poly = Polygon(((0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)))
        assert poly.area == pytest.approx(1.0)

    def test_closing_vertex_is_dropped(self):
        poly = Polygon(((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, 0.0)))
        assert len(poly.vertices) == 3

    def test_collinear_points_are_degenerate(self):
        with pytest.raises(DegenerateRegion):
            Polygon(((0.0, 0.0), (1.0, 1.0), (2.0, 2.0)))

    def test_bowtie_is_rejected(self):
        with pytest.raises(ValueError):
            Polygon(((0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)))

    def test_mapped_area_scales_by_determinant(self):
        image = Polygon.box(0.0, 0.0, 1.0, 1.0).mapped([[2.0, 1.0], [0.0, 3.0]])
        assert image.area == pytest.approx(6.0)
        assert image.bounds == pytest.approx((0.0, 0.0, 3.0, 3.0))

    def test_contains_excludes_boundary(self):
        box = Polygon.box(0.0, 0.0, 1.0, 1.0)
        inside = box.contains(np.array([0.5, 1.0, 2.0]), np.array([0.5, 0.5, 0.5]))
        assert inside.tolist() == [True, False, False]


class TestPolygonQuadrature:
    @pytest.mark.parametrize("f, region, expected", [
        (lambda x, y: x * y ** 2, Polygon.box(0.0, 0.0, 1.0, 2.0), 4.0 / 3.0),
        (lambda x, y: x ** 3, Polygon(((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))), 1.0 / 20.0),
        (lambda x, y: np.ones_like(x), Polygon(((0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (1.0, 0.5), (0.0, 2.0))), 2.5),
    ])
    def test_polynomials(self, f, region, expected):
        assert integrate_polygon(f, region) == pytest.approx(expected, abs=1e-12)

    def test_kinks_on_breaklines_are_integrated_exactly(self):
        result = polygon_quadrature(lambda x, y: np.abs(x) + np.abs(y), Polygon.box(-1.0, -1.0, 1.0, 1.0), 0.5)
        assert result.value == pytest.approx(4.0, abs=1e-12)
        assert result.cells > 0
        assert 0.0 <= result.error <= 1e-9

    def test_sheared_breaklines(self):
        shear = np.array([[1.0, 0.5], [0.0, 1.0]])
        region = Polygon.box(-1.0, -1.0, 1.0, 1.0).mapped(shear)
        value = integrate_polygon(lambda x, y: np.abs(x - 0.5 * y), region, 0.5,
                                  directions=((1.0, -0.5), (0.0, 1.0)))
        assert value == pytest.approx(2.0, abs=1e-12)

    def test_complex_integrand(self):
        value = integrate_polygon(lambda x, y: np.exp(1j * x), Polygon.box(0.0, 0.0, math.pi, 1.0))
        assert value == pytest.approx(2j, abs=1e-11)

    def test_additive_over_a_partition(self):
        f = lambda x, y: np.exp(x - 0.5 * y) * np.cos(3.0 * x * y) + 1j * np.sqrt(x * x + y * y)
        pentagon = Polygon(((0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (1.0, 0.5), (0.0, 2.0)))
        pieces = [
            Polygon(((0.0, 0.0), (2.0, 0.0), (1.0, 0.5))),
            Polygon(((2.0, 0.0), (2.0, 2.0), (1.0, 0.5))),
            Polygon(((0.0, 0.0), (1.0, 0.5), (0.0, 2.0))),
        ]
        assert sum(p.area for p in pieces) == pytest.approx(pentagon.area)
        whole = polygon_quadrature(f, pentagon)
        parts = [polygon_quadrature(f, p) for p in pieces]
        assert abs(sum(r.value for r in parts) - whole.value) <= 1e-9 + whole.error + sum(r.error for r in parts)

    def test_additive_with_breaklines(self):
        shear = np.array([[1.0, 0.6], [0.0, 1.3]])
        directions = tuple(tuple(row) for row in np.linalg.inv(shear))

        def f(x, y):
            r2 = x * x + y * y
            angular = np.where(r2 > 0, x * y / np.where(r2 > 0, r2, 1.0), 0.0)
            return np.abs(x - 0.6 / 1.3 * y) + (1.0 + 2j) * angular

        whole = polygon_quadrature(f, Polygon.box(-1.0, -1.0, 1.0, 1.0).mapped(shear), 0.5, None, directions)
        quarters = [Polygon.box(x0, y0, x0 + 1.0, y0 + 1.0).mapped(shear)
                    for x0 in (-1.0, 0.0) for y0 in (-1.0, 0.0)]
        parts = [polygon_quadrature(f, q, 0.5, None, directions) for q in quarters]
        assert abs(sum(r.value for r in parts) - whole.value) <= 1e-9 + whole.error + sum(r.error for r in parts)

    def test_vertex_list_is_accepted(self):
        assert integrate_polygon(lambda x, y: x, [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]) == pytest.approx(1.0 / 6.0)

    def test_degenerate_region(self):
        with pytest.raises(DegenerateRegion):
            polygon_quadrature(lambda x, y: x, [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])

    def test_negative_spacing(self):
        with pytest.raises(ValueError):
            polygon_quadrature(lambda x, y: x, Polygon.box(0.0, 0.0, 1.0, 1.0), -0.5)

    def test_nonconvergence_reports_best_estimate(self):
        cfg = QuadConfig(abs_tol=1e-14, rel_tol=1e-14, max_subdiv=2, gl_order=4)
        with pytest.raises(NonConvergence) as info:
            polygon_quadrature(lambda x, y: np.where(x + y < 0.3, 1.0, 0.0), Polygon.box(0.0, 0.0, 1.0, 1.0),
                               None, cfg)
        assert info.value.estimate.real == pytest.approx(0.045, abs=1e-2)
        assert info.value.error > 0
        assert "did not reach tolerance" in info.value.message


class TestQuad1D:
    def test_sine(self):
        assert quad1d(np.sin, 0.0, math.pi).value == pytest.approx(2.0, abs=1e-12)

    def test_breakpoint_makes_kink_exact(self):
        result = quad1d(np.abs, -1.0, 1.0, [0.0], QuadConfig(gl_order=2))
        assert result.value == pytest.approx(1.0, abs=1e-15)

    def test_empty_interval(self):
        result = quad1d(np.sin, 1.0, 1.0)
        assert result.value == 0 and result.cells == 0

    def test_reversed_interval(self):
        with pytest.raises(ValueError):
            quad1d(np.sin, 1.0, 0.0)

    def test_integrate_1d_return_type(self):
        assert isinstance(integrate_1d(np.cos, 0.0, 1.0), float)
        assert isinstance(integrate_1d(lambda t: np.exp(1j * t), 0.0, 1.0), complex)


class TestMonteCarlo:
    def test_reproducible(self):
        cfg = McConfig(samples=5_000, seed=11)
        region = Polygon.box(0.0, 0.0, 1.0, 1.0)
        assert mc_integrate(lambda x, y: x * y, region, cfg) == mc_integrate(lambda x, y: x * y, region, cfg)

    def test_estimate_within_error_bars(self):
        estimate, stderr = mc_integrate(lambda x, y: x * y, Polygon.box(0.0, 0.0, 1.0, 1.0), McConfig(20_000, 3))
        assert abs(estimate - 0.25) <= 5 * stderr

    def test_constant_over_triangle_is_exact(self):
        estimate, stderr = mc_integrate(lambda x, y: np.ones_like(x), [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
                                        McConfig(1_000, 0))
        assert estimate == pytest.approx(0.5)
        assert stderr == 0.0

    def test_invalid_samples(self):
        with pytest.raises(ValueError):
            McConfig(samples=0)


class TestQuadConfig:
    @pytest.mark.parametrize("changes", [{"abs_tol": 0.0}, {"rel_tol": -1.0}, {"gl_order": 1}, {"max_subdiv": 0}])
    def test_invalid(self, changes):
        with pytest.raises(ValueError):
            QuadConfig(**changes)

    def test_replace_ignores_none(self):
        cfg = QuadConfig().replace(abs_tol=None, gl_order=8)
        assert cfg.abs_tol == QuadConfig().abs_tol
        assert cfg.gl_order == 8

    def test_from_dict_ignores_unknown_keys(self):
        cfg = QuadConfig.from_dict({"abs_tol": 1e-6, "tolerance": 3})
        assert cfg.abs_tol == 1e-6
        assert cfg.to_dict()["rel_tol"] == QuadConfig().rel_tol
