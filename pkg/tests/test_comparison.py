import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scorekit.comparison import (
    Alternative,
    Dominance,
    MurphyCurve,
    dm_test,
    dominance_check,
    empirical_score,
    murphy_elementary,
    murphy_tweedie,
    skill_score,
    trivial_model,
)
from scorekit.core import EvaluationSample, ScoreSpec, TargetFunctional
from scorekit.errors import (
    DegenerateVariance,
    DomainViolation,
    EmptyGrid,
    EmptySample,
    UnknownModel,
    ValidationError,
    ZeroReferenceScore,
)
from scorekit.identification import Constant, v_bar
from scorekit.scoring import score

SE = ScoreSpec.parse("squared_error")
GAMMA = ScoreSpec.parse("gamma")


def _sample(y, weights=None, **models):
    return EvaluationSample(y=y, predictions=models, weights=weights)


class TestEmpiricalScore:
    def test_plain_mean(self):
        s = empirical_score(SE, _sample([0.0, 2.0], m=[1.0, 1.0]), "m")
        assert s.mean_score == 1.0
        assert not s.weighted and s.n == 2
        assert s.std_error == 0.0

    def test_uniform_weights(self, rng):
        y, m = rng.normal(size=40), rng.normal(size=40)
        plain = empirical_score(SE, _sample(y, m=m), "m")
        weighted = empirical_score(SE, _sample(y, weights=np.full(40, 3.5), m=m), "m")
        assert weighted.weighted
        assert weighted.mean_score == pytest.approx(plain.mean_score, rel=1e-14)
        assert weighted.std_error == pytest.approx(plain.std_error, rel=1e-12)

    def test_weighted_average(self):
        s = empirical_score(SE, _sample([0.0, 0.0], m=[1.0, 3.0]), "m", weights=[3.0, 1.0])
        assert s.mean_score == (3 * 1 + 9) / 4

    def test_domain_violation_names_row_and_model(self):
        with pytest.raises(DomainViolation) as err:
            empirical_score(GAMMA, _sample([1.0, 0.0, 2.0], m=[1.0, 1.0, 1.0]), "m")
        assert err.value.index == 1
        assert "'m'" in str(err.value)

    def test_bad_weights(self):
        with pytest.raises(ValidationError):
            empirical_score(SE, _sample([0.0, 1.0], m=[1.0, 1.0]), "m", weights=[1.0, -1.0])


class TestDM:
    def test_identical_models(self):
        s = _sample([1.0, 2.0, 3.0], a=[1.5, 2.0, 2.0], b=[1.5, 2.0, 2.0])
        r = dm_test(SE, s, "a", "b")
        assert (r.mean_diff, r.p_value) == (0.0, 1.0)

    def test_swap_antisymmetry(self, rng):
        y = rng.normal(size=100)
        s = _sample(y, a=y + rng.normal(size=100), b=y + 1.2 * rng.normal(size=100))
        ab, ba = dm_test(SE, s, "a", "b"), dm_test(SE, s, "b", "a")
        assert ab.mean_diff == -ba.mean_diff
        assert ab.t_stat == -ba.t_stat
        assert ab.p_value == ba.p_value

    def test_one_sided_direction(self, rng):
        y = rng.normal(size=500)
        s = _sample(y, good=y + 0.1 * rng.normal(size=500), bad=y + rng.normal(size=500))
        assert dm_test(SE, s, "good", "bad", Alternative.A_GREATER).p_value < 1e-10
        assert dm_test(SE, s, "good", "bad", Alternative.B_GREATER).p_value > 1 - 1e-10
        assert dm_test(SE, s, "bad", "good", "b-greater").p_value < 1e-10

    def test_degenerate(self):
        with pytest.raises(DegenerateVariance):
            dm_test(SE, _sample([0.0, 0.0], a=[1.0, 1.0], b=[0.0, 0.0]), "a", "b")
        with pytest.raises(DegenerateVariance):
            dm_test(SE, _sample([0.0], a=[1.0], b=[0.0]), "a", "b")

    def test_alternative_parse(self):
        assert Alternative.parse("a_greater") is Alternative.A_GREATER
        assert Alternative.parse("b-better") is Alternative.B_GREATER
        with pytest.raises(ValidationError):
            Alternative.parse("sideways")

    def test_power_against_perturbed_mean(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = rng.normal(size=10_000)
            y = x + rng.normal(size=10_000)
            s = _sample(y, a=x, b=x + 0.1 * rng.normal(size=10_000) + 0.05)
            hits += dm_test(SE, s, "a", "b").p_value < 0.01
        assert hits >= 18

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.01, 100.0))
    def test_t_invariant_to_score_scale(self, lam):
        rng = np.random.default_rng(0)
        y = rng.normal(size=50)
        a, b = y + rng.normal(size=50), y + rng.normal(size=50)
        s1 = _sample(y, a=a, b=b)
        # homogeneous:2 with scaled inputs multiplies the score by lam**2
        s2 = _sample(lam * y, a=lam * a, b=lam * b)
        r1, r2 = dm_test(SE, s1, "a", "b"), dm_test(SE, s2, "a", "b")
        assert r2.t_stat == pytest.approx(r1.t_stat, rel=1e-9)
        assert r2.mean_diff == pytest.approx(lam**2 * r1.mean_diff, rel=1e-9)
        assert skill_score(SE, s2, "a", "b") == pytest.approx(skill_score(SE, s1, "a", "b"), rel=1e-9, abs=1e-12)


class TestSkillScore:
    def test_examples(self):
        y = np.array([1.0, 2.0, 4.0])
        s = _sample(y, perfect=y, ref=np.full(3, 2.0))
        assert skill_score(GAMMA, s, "ref", "ref") == 0.0
        assert skill_score(GAMMA, s, "perfect", "ref") == 1.0
        # mean squared error 4 against a reference with 2
        s2 = _sample([0.0, 0.0], m=[2.0, 2.0], ref=[1.0, np.sqrt(3.0)])
        assert skill_score(SE, s2, "m", "ref") == pytest.approx(-1.0)

    def test_zero_reference(self):
        with pytest.raises(ZeroReferenceScore):
            skill_score(SE, _sample([1.0, 2.0], m=[0.0, 0.0], ref=[1.0, 2.0]), "m", "ref")


class TestTrivialModel:
    def test_examples(self):
        assert trivial_model(TargetFunctional.mean(), [1, 2, 3]) == 2
        assert trivial_model(TargetFunctional.quantile(0.5), [1, 2, 3]) == 2
        assert trivial_model(TargetFunctional.expectile(0.3), [7.5]) == 7.5
        with pytest.raises(EmptySample):
            trivial_model(TargetFunctional.mean(), [])

    def test_trivial_mean_is_unconditionally_calibrated(self):
        y = np.array([0.1, 0.7, 0.2, 5.0, 3.3])
        s = _sample(y, t=np.full(5, trivial_model(TargetFunctional.mean(), y)))
        assert v_bar(TargetFunctional.mean(), s, "t", Constant()).v_bar == pytest.approx(0.0, abs=1e-15)


class TestMurphy:
    def test_examples(self):
        curve = murphy_elementary(_sample([1.0], m=[0.0]), theta_grid=[0.5])
        assert curve.values["m"][0] == 0.25
        curve = murphy_elementary(_sample([1.0, 2.0], a=[0.5, 3.0], b=[0.5, 3.0]), theta_grid=[-5.0, 0.0, 1.0])
        assert curve.values["a"][0] == 0.0
        np.testing.assert_array_equal(curve.values["a"], curve.values["b"])

    def test_default_grid_is_knots(self):
        s = _sample([1.0, 3.0], a=[2.0, 2.0])
        np.testing.assert_array_equal(murphy_elementary(s).parameter_grid, [1.0, 2.0, 3.0])
        assert murphy_elementary(s, window=(1.5, 5.0)).parameter_grid.tolist() == [2.0, 3.0]
        with pytest.raises(EmptyGrid):
            murphy_elementary(s, window=(10.0, 11.0))

    def test_weights_used(self):
        s = _sample([1.0, 0.0], weights=[3.0, 1.0], m=[0.0, 0.0])
        assert murphy_elementary(s, theta_grid=[0.5]).values["m"][0] == 0.75 * 0.25

    def test_mixture_integral(self, rng):
        y, z = rng.normal(size=30), rng.normal(size=30)
        grid = np.linspace(min(y.min(), z.min()), max(y.max(), z.max()), 20_001)
        curve = murphy_elementary(_sample(y, m=z), theta_grid=grid)
        integral = 4 * np.trapezoid(curve.values["m"], grid)
        assert integral == pytest.approx(np.mean((z - y) ** 2), rel=1e-3)

    def test_tweedie(self):
        y = np.array([1.0, 2.0, 5.0])
        m = np.array([1.5, 1.5, 4.0])
        s = _sample(y, m=m)
        curve = murphy_tweedie(s, p_grid=[0.0, 2.0])
        ybar = y.mean()
        assert curve.values["m"][0] == pytest.approx(np.mean((y - m) ** 2) / ybar**2)
        assert curve.values["m"][1] == pytest.approx(np.mean(score(GAMMA, m, y)))
        raw = murphy_tweedie(s, p_grid=[0.0, 2.0], rescale=False)
        assert raw.values["m"][0] == pytest.approx(np.mean((y - m) ** 2))
        with pytest.raises(DomainViolation):
            murphy_tweedie(s, p_grid=[0.0, 0.5])

    def test_tweedie_rescaled_is_unit_free(self, rng):
        y = rng.gamma(2.0, size=50)
        m = y * rng.uniform(0.5, 1.5, size=50)
        p_grid = [-1.0, 0.0, 1.0, 1.5, 2.0, 3.0]
        a = murphy_tweedie(_sample(y, m=m), p_grid=p_grid).values["m"]
        b = murphy_tweedie(_sample(8.0 * y, m=8.0 * m), p_grid=p_grid).values["m"]
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_csv(self):
        curve = MurphyCurve(np.array([0.0, 1.0]), {"a": np.array([0.5, 0.25]), "b": np.array([1.0, 2.0])})
        lines = curve.to_csv().splitlines()
        assert lines[0] == "parameter,model,mean_score"
        assert lines[1:] == ["0.0,a,0.5", "0.0,b,1.0", "1.0,a,0.25", "1.0,b,2.0"]

    def test_grid_must_increase(self):
        with pytest.raises(ValidationError):
            MurphyCurve(np.array([1.0, 0.0]), {"a": np.zeros(2)})
        with pytest.raises(EmptyGrid):
            MurphyCurve(np.array([]), {})


class TestDominance:
    def _curve(self, a, b):
        return MurphyCurve(np.arange(len(a), dtype=float), {"a": np.asarray(a, float), "b": np.asarray(b, float)})

    def test_cases(self):
        assert dominance_check(self._curve([1, 2], [1, 2]), "a", "b") is Dominance.CROSSING
        assert dominance_check(self._curve([0, 1], [1, 2]), "a", "b") is Dominance.A_DOMINATES
        assert dominance_check(self._curve([0, 1], [1, 2]), "b", "a") is Dominance.B_DOMINATES
        assert dominance_check(self._curve([0, 3], [1, 2]), "a", "b") is Dominance.CROSSING
        with pytest.raises(UnknownModel):
            dominance_check(self._curve([0], [1]), "a", "c")

    def test_better_model_dominates_on_real_sample(self, rng):
        x = rng.normal(size=2000)
        y = x + rng.normal(size=2000)
        curve = murphy_elementary(_sample(y, ideal=x, flat=np.zeros(2000)))
        assert dominance_check(curve, "ideal", "flat", tol=1e-3) is not Dominance.B_DOMINATES
