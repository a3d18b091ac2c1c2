import cmath
import math

import numpy as np
import pytest

from haar_averager.engine.constants import (
    LOG2,
    ConstantResult,
    closed_form_C_unit,
    closed_form_I_sqrt2,
    closed_form_sqrt2_pieces,
    constant_for,
    diagonal_constant,
    sqrt2_piece_integrals,
)
from haar_averager.engine.kernels import (
    breaklines,
    diagonal_kernel,
    eval_kernel,
    new_kernel,
    scaled_kernel,
    support,
    triangle_kernel,
)
from haar_averager.engine.quad import QuadConfig, polygon_quadrature

SQRT2 = math.sqrt(2.0)


def _rotation(x, y):
    r2 = x * x + y * y
    return np.where(r2 > 0, (x + 1j * y) ** 2 / np.where(r2 > 0, r2, 1.0), 0.0)


class TestClosedForms:
    def test_unit_square(self):
        assert closed_form_C_unit() == pytest.approx(2.06978, abs=1e-5)

    def test_sqrt2_rectangle(self):
        assert closed_form_I_sqrt2() == pytest.approx(0.690681997549, abs=1e-11)
        assert 2.0 * LOG2 / closed_form_I_sqrt2() == pytest.approx(2.0071384024, abs=1e-9)

    def test_pieces_sum_to_the_whole(self):
        t1, t2, t3 = closed_form_sqrt2_pieces()
        assert (t1, t2, t3) == pytest.approx((0.322726457791, -0.062280357520, 0.430235897279), abs=1e-11)
        assert t1 + t2 + t3 == pytest.approx(closed_form_I_sqrt2(), abs=1e-12)


class TestConstantFor:
    def test_unit_square(self):
        result = constant_for(new_kernel(1.0, math.pi / 2))
        assert result.C == pytest.approx(closed_form_C_unit(), abs=1e-6)
        assert not result.degenerate

    def test_sqrt2_rectangle(self):
        result = constant_for(new_kernel(SQRT2, math.pi / 2))
        assert 2.0 * LOG2 * result.integral_I.real == pytest.approx(closed_form_I_sqrt2(), abs=1e-8)
        assert round(result.C, 5) == 2.00714

    def test_piece_quadratures(self):
        for quad, closed in zip(sqrt2_piece_integrals(), closed_form_sqrt2_pieces()):
            assert quad.value.real == pytest.approx(closed, abs=1e-8)

    @pytest.mark.parametrize("spec", [
        new_kernel(1.3, 1.2),
        triangle_kernel(0.5, 0.8),
        diagonal_kernel(0.6, 2.0),
    ], ids=lambda s: s.family)
    def test_planar_matches_reduced(self, spec):
        planar = constant_for(spec, method="planar")
        reduced = constant_for(spec, method="reduced")
        assert abs(planar.integral_I - reduced.integral_I) <= 1e-7 + planar.err_est + reduced.err_est

    @pytest.mark.parametrize("b, theta", [(0.4, 0.7), (0.8, -2.5), (0.55, 3.0)])
    def test_diagonal_mirror(self, b, theta):
        mirrored = diagonal_constant(1.0 / b, theta)
        direct = diagonal_constant(b, -theta)
        assert abs(mirrored.integral_I + direct.integral_I) <= mirrored.err_est + direct.err_est + 1e-9

    @pytest.mark.parametrize("spec, rho", [
        (new_kernel(1.5, 1.1), 3.0),
        (triangle_kernel(0.5, 0.8, (1, -1j, 1j)), 0.25),
        (diagonal_kernel(0.6, 2.0), 1.7),
    ], ids=["new", "triangle", "diagonal"])
    def test_dilation_invariant(self, spec, rho):
        # the dilated kernel integrated over its own, dilated support
        scaled = scaled_kernel(spec, rho)
        spacing, directions = breaklines(scaled)
        direct = polygon_quadrature(lambda x, y: eval_kernel(scaled, x, y) * _rotation(x, y),
                                    support(scaled), spacing, None, directions)
        assert support(scaled).area == pytest.approx(rho ** 2 * support(spec).area)
        expected = constant_for(spec)
        value = direct.value / (2.0 * LOG2)
        assert abs(value - expected.integral_I) <= 1e-7 + direct.error + expected.err_est

    @pytest.mark.parametrize("spec, rotate", [
        (new_kernel(1.3, 1.2), lambda s, u: new_kernel(1.3, 1.2, tuple(u * x for x in s))),
        (diagonal_kernel(0.6, 2.0), lambda s, u: diagonal_kernel(0.6, sigma=tuple(u * x for x in s))),
        (triangle_kernel(0.5, 0.8), lambda s, u: triangle_kernel(0.5, 0.8, tuple(u * x for x in s))),
    ], ids=["new", "diagonal", "triangle"])
    @pytest.mark.parametrize("alpha", [0.4, -2.2, math.pi / 2])
    def test_global_phase_leaves_C_unchanged(self, spec, rotate, alpha):
        u = cmath.exp(1j * alpha)
        rotated = constant_for(rotate(spec.sigma, u))
        original = constant_for(spec)
        assert rotated.C == pytest.approx(original.C, rel=1e-9)
        assert abs(rotated.integral_I - u * original.integral_I) <= 1e-9 + rotated.err_est + original.err_est

    @pytest.mark.parametrize("spec", [
        new_kernel(1.0, math.pi / 2),
        new_kernel(SQRT2, math.pi / 2, (1, 1, -1)),
        new_kernel(0.7, math.pi / 2, (-1, 1, 1)),
        diagonal_kernel(0.6, math.pi),
    ], ids=lambda s: s.family)
    @pytest.mark.parametrize("method", ["reduced", "planar"])
    def test_even_kernels_have_real_integral(self, spec, method):
        # real signs on a rectangle: the kernel is even in x and in y, so Im I = 0
        assert abs(constant_for(spec, method=method).integral_I.imag) <= 1e-10

    def test_diagonal_square_at_theta_pi_vanishes(self):
        result = diagonal_constant(1.0, math.pi)
        assert result.vanishing
        assert result.C == math.inf
        assert not result.degenerate
        assert abs(result.integral_I) <= 1e-9
        assert result.to_dict()["vanishing"] is True

    def test_nearby_diagonal_is_finite(self):
        result = diagonal_constant(0.9, math.pi)
        assert not result.vanishing
        assert math.isfinite(result.C)

    def test_degenerate_sign_choice_is_flagged(self):
        assert constant_for(new_kernel(sigma=(1, 1, 1))).degenerate
        assert diagonal_constant(0.5, 0.0).degenerate

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            constant_for(new_kernel(), method="series")

    def test_record(self):
        record = constant_for(triangle_kernel(0.5, 0.8), QuadConfig(abs_tol=1e-8)).to_dict()
        assert set(record) == {"family", "params", "I_re", "I_im", "C", "err_est", "cells_used", "method",
                               "degenerate", "vanishing"}
        assert record["vanishing"] is False
        assert record["family"] == "triangle"
        assert record["params"]["a"] == 0.5
        assert record["cells_used"] > 0


class TestConstantResult:
    def test_zero_integral_gives_infinite_constant(self):
        result = ConstantResult.from_integral(0j, 0.0, 0)
        assert result.C == math.inf
        assert result.vanishing

    def test_integral_within_its_error_vanishes(self):
        result = ConstantResult.from_integral(4e-17 + 1e-17j, 1e-12, 10)
        assert result.C == math.inf
        assert result.vanishing

    def test_integral_below_the_floor_vanishes(self):
        assert ConstantResult.from_integral(1e-11, 0.0, 10, floor=1e-10).vanishing
        assert not ConstantResult.from_integral(1e-9, 0.0, 10, floor=1e-10).vanishing

    def test_constant_is_reciprocal_modulus(self):
        assert ConstantResult.from_integral(0.3 + 0.4j, 1e-12, 10).C == pytest.approx(2.0)
