import numpy as np
import pytest

from haar_averager.engine.basis import HaarAtom, UnsupportedParams, decompose, get_system, random_step_function
from haar_averager.engine.martingale import (
    SignChoice,
    apply_transform,
    build_run,
    check_subordination,
    depth_projection,
    empirical_norm_ratio,
    kind_projection,
    near_extremal_search,
    norm_ratios,
    p_star,
)

SUBORDINATE = ["one-d", "new", "parallelogram", "triangle", "cube"]
SIGMA_NEW = SignChoice.from_values({"0": 1, "+": -1, "-": -1})


class TestSignChoice:
    def test_missing_kinds_default_to_one(self):
        sigma = SignChoice.from_values({"+": 1j})
        assert sigma.per_kind(get_system("new")) == pytest.approx({"0": 1, "+": 1j, "-": 1})

    def test_identity(self):
        assert SignChoice.identity().homogeneous
        assert SignChoice.identity().for_kind("0") == 1

    def test_rejects_non_unimodular(self):
        with pytest.raises(UnsupportedParams):
            SignChoice.from_values({"0": 2})

    def test_random_is_seeded(self):
        kinds = ("0", "+", "-")
        first = SignChoice.random(kinds, np.random.default_rng(3))
        assert first == SignChoice.random(kinds, np.random.default_rng(3))

    def test_overrides_win(self):
        system = get_system("new")
        atom = HaarAtom(system.root_cell(), "0", system)
        sigma = SignChoice.from_values({"0": 1}, overrides={atom: -1})
        assert not sigma.homogeneous
        assert sigma.for_atom(atom) == -1
        assert sigma.for_atom(HaarAtom(system.root_cell(), "+", system)) == 1


@pytest.mark.parametrize("p, expected", [(2.0, 2.0), (4.0 / 3.0, 4.0), (4.0, 4.0), (1.5, 3.0)])
def test_p_star(p, expected):
    assert p_star(p) == pytest.approx(expected)


def test_p_star_rejects_p_at_most_one():
    with pytest.raises(ValueError):
        p_star(1.0)


class TestTransform:
    def test_identity_leaves_f_unchanged(self, rng):
        system = get_system("new")
        f = random_step_function(system, rng, 3)
        np.testing.assert_allclose(apply_transform(f, system, SignChoice.identity()).values, f.values, atol=1e-12)

    def test_conjugate_inverts(self, rng):
        system = get_system("triangle", a=0.5, b=0.8)
        f = random_step_function(system, rng, 2)
        sigma = SignChoice.random(system.kinds, rng)
        back = apply_transform(apply_transform(f, system, sigma), system, sigma.conjugate())
        np.testing.assert_allclose(back.values, f.values, atol=1e-12)

    def test_all_minus_one_negates_mean_zero_function(self, rng):
        system = get_system("new")
        f = random_step_function(system, rng, 2)
        sigma = SignChoice.from_values({"0": -1, "+": -1, "-": -1})
        np.testing.assert_allclose(apply_transform(f, system, sigma).values, -f.values, atol=1e-12)

    def test_override_flips_one_coefficient(self, rng):
        system = get_system("new")
        f = random_step_function(system, rng, 2)
        atom = HaarAtom(system.root_cell(), "+", system)
        g = apply_transform(f, system, SignChoice.from_values({}, overrides={atom: -1}))
        before, after = decompose(f, system), decompose(g, system)
        for key, value in before.items():
            expected = -value if key == atom else value
            assert after[key] == pytest.approx(expected, abs=1e-12)

    def test_kind_projections_sum_to_f(self, rng):
        system = get_system("new")
        f = random_step_function(system, rng, 2)
        parts = sum(kind_projection(f, system, [kind]).values for kind in system.kinds)
        np.testing.assert_allclose(parts, f.values, atol=1e-12)
        np.testing.assert_allclose(depth_projection(f, system).values, f.values, atol=1e-12)

    def test_shallow_depth_keeps_fine_detail_out(self, rng):
        system = get_system("new")
        f = random_step_function(system, rng, 2)
        coarse = depth_projection(f, system, depth=1)
        assert np.ptp(coarse.values.real.reshape(2, 2, 2, 2), axis=(1, 3)).max() < 1e-12


class TestNormRatios:
    @pytest.mark.parametrize("tag", SUBORDINATE)
    def test_l2_isometry(self, tag):
        ratios = norm_ratios(get_system(tag), None, 2.0, trials=5, seed=1)
        np.testing.assert_allclose(ratios, 1.0, atol=1e-10)

    @pytest.mark.parametrize("tag", SUBORDINATE)
    @pytest.mark.parametrize("p", [4.0 / 3.0, 3.0, 4.0])
    def test_bounded_by_burkholder_constant(self, tag, p):
        assert empirical_norm_ratio(get_system(tag), None, p, trials=10, seed=2) <= p_star(p) - 1 + 1e-9

    def test_reproducible(self):
        system = get_system("new")
        np.testing.assert_array_equal(norm_ratios(system, SIGMA_NEW, 3.0, 4, seed=9),
                                      norm_ratios(system, SIGMA_NEW, 3.0, 4, seed=9))

    def test_trials_must_be_positive(self):
        with pytest.raises(ValueError):
            norm_ratios(get_system("new"), SIGMA_NEW, 3.0, 0, seed=0)

    @pytest.mark.slow
    @pytest.mark.parametrize("tag", SUBORDINATE)
    def test_full_trials(self, tag):
        for p in (4.0 / 3.0, 3.0, 4.0):
            assert empirical_norm_ratio(get_system(tag), None, p, trials=200, seed=0) <= p_star(p) - 1 + 1e-9


class TestSubordination:
    def test_new_is_differentially_subordinate(self, rng):
        system = get_system("new")
        for _ in range(10):
            f = random_step_function(system, rng, 3)
            report = check_subordination(build_run(f, system, SignChoice.random(system.kinds, rng)))
            assert report.max_violation <= 1e-12
            assert report.measurability_error <= 1e-12
            assert report.martingale_error <= 1e-12

    def test_orig_is_not(self, rng):
        system = get_system("orig")
        worst = max(
            check_subordination(build_run(random_step_function(system, rng, 2), system,
                                          SignChoice.random(system.kinds, rng))).max_violation
            for _ in range(10)
        )
        assert worst > 1e-6

    def test_steps_per_stage(self, rng):
        system = get_system("new")
        run = build_run(random_step_function(system, rng, 3), system, SIGMA_NEW)
        assert len(run) == 1 + 3 * 2
        assert run.stages[:3] == ("trivial", "g0:0", "g0:+/-")

    def test_last_step_is_the_transform(self, rng):
        system = get_system("new")
        f = random_step_function(system, rng, 2)
        run = build_run(f, system, SIGMA_NEW)
        x, y = run.steps[-1]
        np.testing.assert_allclose(x.values, f.values, atol=1e-12)
        np.testing.assert_allclose(y.values, apply_transform(f, system, SIGMA_NEW).values, atol=1e-12)


def test_near_extremal_search_stays_below_bound():
    system = get_system("new")
    result = near_extremal_search(system, SIGMA_NEW, p=4.0, depth=2, seed=0, maxiter=200)
    assert 0.0 < result.ratio <= p_star(4.0) - 1 + 1e-9
    assert result.evaluations > 0
    assert abs(result.f.values.mean()) < 1e-12
    assert result.ratio == pytest.approx(
        apply_transform(result.f, system, SIGMA_NEW).lp_norm(4.0) / result.f.lp_norm(4.0))
