import math

import numpy as np
import pytest

from haar_averager.engine.basis import UnsupportedParams, get_system
from haar_averager.engine.kernels import (
    breaklines,
    build_kernel,
    diagonal_kernel,
    eval_kernel,
    kernel_for,
    new_kernel,
    phase_of,
    reference_kernel,
    scaled_kernel,
    sigma_map,
    support,
    system_for,
    triangle_kernel,
)
from haar_averager.engine.quad import integrate_polygon
from haar_averager.engine.special import conv2d_oracle

KERNELS = [
    new_kernel(),
    new_kernel(math.sqrt(2.0), math.pi / 3, (1, 1j, -1j)),
    diagonal_kernel(0.6, 2.0),
    triangle_kernel(0.0, 1.0),
    triangle_kernel(0.5, 0.8, (1, -1j, 1j)),
]


@pytest.mark.parametrize("spec", KERNELS, ids=lambda s: s.family)
def test_reference_kernel_matches_overlap_oracle(spec, rng):
    system = system_for(spec)
    sigma = sigma_map(spec)
    for u, v in rng.uniform(-1.1, 1.1, (6, 2)):
        expected = conv2d_oracle(system, sigma, (u, v))
        value = complex(np.atleast_1d(reference_kernel(spec, np.atleast_1d(u), np.atleast_1d(v)))[0])
        assert value == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("spec", KERNELS, ids=lambda s: s.family)
def test_kernel_has_zero_integral(spec):
    spacing, directions = breaklines(spec)
    total = integrate_polygon(lambda x, y: eval_kernel(spec, x, y), support(spec), spacing, None, directions)
    assert abs(total) < 1e-10


@pytest.mark.parametrize("spec", [
    triangle_kernel(0.0, 1.0),
    triangle_kernel(0.5, 0.8, (1, -1j, 1j)),
    triangle_kernel(-0.7, 1.9, (1j, 1, -1)),
    scaled_kernel(triangle_kernel(0.3, 0.6, (-1, 1j, 1)), 2.5),
], ids=["unit", "sheared", "wide", "scaled"])
def test_triangle_kernel_is_centrally_symmetric(spec, rng):
    x0, y0, x1, y1 = support(spec).bounds
    x = rng.uniform(x0 - 0.2, x1 + 0.2, 4000)
    y = rng.uniform(y0 - 0.2, y1 + 0.2, 4000)
    value = eval_kernel(spec, x, y)
    assert np.count_nonzero(value) > 500
    np.testing.assert_allclose(value, eval_kernel(spec, -x, -y), atol=1e-12)


def test_support_area():
    assert support(new_kernel(2.0, math.pi / 4)).area == pytest.approx(4 * 2.0 * math.sin(math.pi / 4))
    assert support(triangle_kernel(0.3, 0.5)).area == pytest.approx(1.5)


def test_eval_kernel_transports_and_normalizes():
    spec = new_kernel(2.0)
    assert eval_kernel(spec, 0.25, 0.5) == pytest.approx(complex(reference_kernel(spec, 0.25, 0.25)) / 2.0)


def test_scaled_kernel_dilates():
    spec = new_kernel()
    scaled = scaled_kernel(spec, 3.0)
    assert eval_kernel(scaled, 0.6, 0.3) == pytest.approx(eval_kernel(spec, 0.2, 0.1) / 9.0)
    assert scaled.base is spec
    assert scaled.params()["rho"] == 3.0


class TestPhases:
    def test_phase_of_unit(self):
        assert phase_of(-1) == pytest.approx(math.pi)
        assert phase_of(1j) == pytest.approx(math.pi / 2)

    def test_non_unimodular_rejected(self):
        with pytest.raises(UnsupportedParams):
            phase_of(2)

    def test_sigma_is_exact_for_real_signs(self):
        assert new_kernel().sigma == (1, -1, -1)

    def test_degenerate_identity(self):
        assert new_kernel(sigma=(1, 1, 1)).degenerate
        assert diagonal_kernel(theta=0.0).degenerate
        assert not new_kernel().degenerate


class TestConstruction:
    @pytest.mark.parametrize("factory, kwargs", [
        (new_kernel, {"b": -1.0}),
        (new_kernel, {"phi": 0.0}),
        (new_kernel, {"phi": math.pi}),
        (triangle_kernel, {"b": 0.0}),
    ])
    def test_invalid_params(self, factory, kwargs):
        with pytest.raises(UnsupportedParams):
            factory(**kwargs)

    def test_build_kernel(self):
        spec = build_kernel("diagonal", b=0.5, theta=1.0)
        assert spec.phases == (0.0, 1.0, -1.0)
        assert build_kernel("new", b=1.5, sigma=(1, 1, -1)).sigma == (1, 1, -1)

    def test_build_kernel_unknown_family(self):
        with pytest.raises(UnsupportedParams):
            build_kernel("hexagon")

    def test_kernel_for_system(self):
        spec = kernel_for(get_system("parallelogram", b=1.5, phi=1.0), {"0": 1, "+": -1, "-": -1})
        assert (spec.family, spec.b, spec.phi) == ("new", 1.5, 1.0)
        assert system_for(new_kernel()).tag == "new"

    def test_kernel_for_rejects_orig(self):
        with pytest.raises(UnsupportedParams):
            kernel_for(get_system("orig"), {})

    def test_breakline_normals_follow_shear(self):
        _, directions = breaklines(new_kernel(1.0, math.pi / 4))
        normal = np.asarray(directions[0])
        # the sheared side direction (cos phi, sin phi) lies along a breakline
        assert normal @ np.array([math.cos(math.pi / 4), math.sin(math.pi / 4)]) == pytest.approx(0.0, abs=1e-12)
