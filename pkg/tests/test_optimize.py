import csv
import json
import math

import pytest

from haar_averager.engine import optimize
from haar_averager.engine.basis import UnsupportedParams
from haar_averager.engine.constants import ConstantResult, closed_form_C_unit
from haar_averager.engine.optimize import (
    Evaluation,
    SearchResult,
    SearchSpec,
    check_bounds,
    diagonal_mirror,
    kernel_at,
    ranked_evaluations,
    report,
    search,
    sigma_pattern_search,
    summary,
)
from haar_averager.engine.quad import NonConvergence

SQRT2 = math.sqrt(2.0)


def _bowl(kernel, cfg=None, method="reduced"):
    """C = 2 + |(b, phi) - (sqrt 2, pi/2)|^2, standing in for the quadrature."""
    c = 2.0 + (kernel.b - SQRT2) ** 2 + (kernel.phi - math.pi / 2) ** 2
    return ConstantResult.from_integral(1.0 / c, 0.0, 1, method=method, degenerate=kernel.degenerate,
                                        family=kernel.family, params=kernel.params())


@pytest.fixture
def bowl(monkeypatch):
    monkeypatch.setattr(optimize, "constant_for", _bowl)


class TestBounds:
    @pytest.mark.parametrize("family, bounds", [
        ("new", {"b": (0.0, 1.0)}),
        ("new", {"phi": (0.5, math.pi)}),
        ("new", {"b": (2.0, 1.0)}),
        ("new", {"theta": (0.0, 1.0)}),
        ("diagonal", {"b": (0.5, 1.5)}),
        ("diagonal", {"theta": (-4.0, 0.0)}),
        ("triangle", {"a": (-2.0, 0.0)}),
        ("triangle", {"b": (0.5, 2.5)}),
        ("hexagon", {"b": (0.5, 1.0)}),
        ("new", {}),
    ])
    def test_rejected(self, family, bounds):
        with pytest.raises(UnsupportedParams):
            check_bounds(family, bounds)

    def test_defaults_accepted(self):
        for family in optimize.SEARCH_FAMILIES:
            check_bounds(family, optimize.DEFAULT_BOUNDS[family])


class TestSearchSpec:
    def test_grid_points(self):
        spec = SearchSpec("new", (("b", 1.0, 2.0), ("phi", 1.0, 2.0)), grid=3)
        points = spec.grid_points()
        assert len(points) == 9
        assert points[0] == {"b": 1.0, "phi": 1.0}
        assert points[-1] == {"b": 2.0, "phi": 2.0}
        assert points[1] == {"b": 1.0, "phi": 1.5}

    def test_default(self):
        spec = SearchSpec.default("triangle", stages=1)
        assert spec.grid == 5
        assert spec.names == ("a", "b", "arg_sigma_plus", "arg_sigma_minus")
        assert len(spec.grid_points()) == 5 ** 4

    @pytest.mark.parametrize("changes", [{"grid": 1}, {"stages": 0}, {"method": "series"}])
    def test_invalid(self, changes):
        with pytest.raises(UnsupportedParams):
            SearchSpec.default("new", **changes)

    def test_duplicate_parameter(self):
        with pytest.raises(UnsupportedParams):
            SearchSpec("new", (("b", 1.0, 2.0), ("b", 1.0, 1.5)))

    def test_from_config(self):
        spec = SearchSpec.from_config({
            "family": "diagonal", "bounds": {"theta": [0.0, 1.0]}, "fixed": {"b": 0.5},
            "grid": 4, "stages": 1, "seed": 3, "method": "planar",
        })
        assert spec.bounds == (("theta", 0.0, 1.0),)
        assert spec.fixed == (("b", 0.5),)
        assert (spec.grid, spec.stages, spec.seed, spec.method) == (4, 1, 3, "planar")
        assert spec.to_dict()["bounds"] == {"theta": [0.0, 1.0]}


class TestKernelAt:
    def test_diagonal_phases(self):
        kernel = kernel_at(SearchSpec.default("diagonal"), {"b": 0.5, "theta": 1.0})
        assert kernel.phases == (0.0, 1.0, -1.0)
        assert kernel.b == 0.5

    def test_fixed_values_fill_unsearched_parameters(self):
        spec = SearchSpec("new", (("phi", 1.0, 2.0),), fixed=(("b", 1.7),))
        assert kernel_at(spec, {"phi": 1.2}).b == 1.7

    def test_triangle_phases(self):
        kernel = kernel_at(SearchSpec.default("triangle"), {"a": 0.0, "b": 1.0, "arg_sigma_plus": 0.5,
                                                            "arg_sigma_minus": -0.5})
        assert kernel.phases == (0.0, 0.5, -0.5)

    def test_diagonal_mirror(self):
        assert diagonal_mirror({"b": 0.5, "theta": 1.0}) == {"b": 2.0, "theta": -1.0}


class TestSearch:
    def test_grid_stage_picks_nearest_point(self, bowl):
        spec = SearchSpec("new", (("b", 1.2, 1.6), ("phi", math.pi / 2 - 0.2, math.pi / 2 + 0.2)), grid=5, stages=1)
        result = search(spec, threads=1)
        assert len(result.evaluations) == 25
        assert result.best_params["b"] == pytest.approx(1.4)
        assert result.best_params["phi"] == pytest.approx(math.pi / 2)
        assert result.stage_bests == [result.best_C]

    def test_refinement_converges(self, bowl):
        result = search(SearchSpec.default("new", stages=2), threads=1)
        assert result.best_params["b"] == pytest.approx(SQRT2, abs=1e-3)
        assert result.best_params["phi"] == pytest.approx(math.pi / 2, abs=1e-3)
        assert result.best_C == pytest.approx(2.0, abs=1e-6)
        assert {e.stage for e in result.evaluations} == {1, 2}

    def test_stage_bests_never_increase(self, bowl):
        result = search(SearchSpec.default("new", grid=3, stages=3), threads=1)
        assert len(result.stage_bests) == 3
        assert all(b <= a for a, b in zip(result.stage_bests, result.stage_bests[1:]))

    def test_reproducible(self, bowl):
        spec = SearchSpec.default("new", grid=3, stages=2, seed=4)
        first, second = search(spec, threads=1), search(spec, threads=2)
        assert first.best_params == second.best_params
        assert first.best_C == second.best_C

    def test_nonconvergent_points_are_skipped(self, monkeypatch):
        def flaky(kernel, cfg=None, method="reduced"):
            if kernel.b == 1.0:
                raise NonConvergence("quadrature did not reach tolerance", 0j, 1.0)
            return _bowl(kernel, cfg, method)

        monkeypatch.setattr(optimize, "constant_for", flaky)
        result = search(SearchSpec("new", (("b", 1.0, 2.0),), grid=3, stages=1), threads=1)
        assert result.failed == 1
        assert len(result.evaluations) == 2
        assert result.best_params == {"b": 1.5}

    def test_degenerate_points_are_never_best(self, monkeypatch):
        def fake(kernel, cfg=None, method="reduced"):
            result = _bowl(kernel, cfg, method)
            if kernel.b == 2.0:
                return ConstantResult.from_integral(1.0, 0.0, 1, degenerate=True)
            return result

        monkeypatch.setattr(optimize, "constant_for", fake)
        result = search(SearchSpec("new", (("b", 1.0, 2.0),), grid=3, stages=1), threads=1)
        assert result.best_params == {"b": 1.5}
        ranked = ranked_evaluations(result.evaluations)
        assert ranked[-1].degenerate
        assert summary(result)["degenerate"] == 1

    def test_no_admissible_point(self, monkeypatch):
        monkeypatch.setattr(optimize, "constant_for",
                            lambda kernel, cfg=None, method="reduced":
                            ConstantResult.from_integral(1.0, 0.0, 1, degenerate=True))
        result = search(SearchSpec("new", (("b", 1.0, 2.0),), grid=2, stages=2), threads=1)
        assert result.best is None
        assert result.best_C == math.inf
        assert result.stage_bests == [math.inf, math.inf]

    @pytest.mark.slow
    def test_rectangle_family_minimum(self):
        result = search(SearchSpec.default("new", stages=2))
        assert result.best_params["b"] == pytest.approx(SQRT2, abs=1e-3)
        assert result.best_params["phi"] == pytest.approx(math.pi / 2, abs=1e-3)
        assert result.best_C == pytest.approx(2.00714, abs=1e-5)


def test_sigma_patterns():
    patterns = sigma_pattern_search()
    assert patterns[0].sigma == (1, -1, -1)
    assert patterns[0].C == pytest.approx(closed_form_C_unit(), abs=1e-6)
    assert patterns[-1].sigma == (1, 1, 1)
    assert patterns[-1].degenerate
    assert len(patterns) == 4


class TestReport:
    @staticmethod
    def _result(count):
        spec = SearchSpec("new", (("b", 1.0, 2.0), ("phi", 1.0, 2.0)), grid=2, stages=1)
        evaluations = [
            Evaluation({"b": 1.0 + i / count, "phi": 1.5}, 2.0 + ((i * 37) % count) / 7.0, 1e-11,
                       complex(0.4, 0.0), False, 1)
            for i in range(count)
        ]
        return SearchResult(spec, evaluations, [2.0])

    @staticmethod
    def _rows(path):
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
            return first, list(csv.DictReader(fh))

    def test_writes_log_and_summary(self, tmp_path):
        result = self._result(100)
        paths = report(result, str(tmp_path / "search"))
        assert [p.name for p in paths] == ["search.csv", "search.json"]
        first, rows = self._rows(tmp_path / "search.csv")
        assert first.startswith("# ")
        assert json.loads(first[2:])["subcommand"] == "optimize"
        assert len(rows) == 100
        assert list(rows[0]) == ["stage", "b", "phi", "C", "err_est", "I_re", "I_im", "degenerate"]
        costs = [float(r["C"]) for r in rows]
        assert costs == sorted(costs)

        document = json.loads((tmp_path / "search.json").read_text(encoding="utf-8"))
        best = document["data"]["best"]
        assert best["params"] == {"b": float(rows[0]["b"]), "phi": float(rows[0]["phi"])}
        assert best["C"] == float(rows[0]["C"])
        assert document["data"]["evaluations"] == 100

    def test_empty_log_has_header_only(self, tmp_path):
        report(self._result(0), str(tmp_path / "empty"), formats=("csv",))
        lines = (tmp_path / "empty.csv").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        assert lines[1] == "stage,b,phi,C,err_est,I_re,I_im,degenerate"
