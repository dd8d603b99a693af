import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_discrete
from scorekit.core import EvaluationSample, TargetFunctional, functional_of_empirical
from scorekit.errors import (
    DegenerateVariance,
    EmptySubsample,
    NonNumericFeature,
    SingularCovariance,
    UnknownModel,
    ValidationError,
)
from scorekit.identification import (
    BinIndicator,
    CategoryIndicator,
    Constant,
    Custom,
    FeatureProjection,
    ModelPrediction,
    Product,
    calibration_report,
    default_test_functions,
    generalized_residuals,
    identification_value,
    parse_test_function,
    quantile_bins,
    subsample_bias,
    t_test,
    v_bar,
    wald_joint_test,
)

MEAN = TargetFunctional.mean()


def _sample(y, m, **features):
    return EvaluationSample(y=y, predictions={"m": m}, features=features)


class TestIdentificationValue:
    def test_examples(self):
        assert identification_value(MEAN, 2.0, 1.0) == 1.0
        assert identification_value(TargetFunctional.quantile(0.25), 1.0, 0.0) == 0.75
        assert identification_value(TargetFunctional.expectile(0.5), 3.0, 1.0) == 2.0
        assert identification_value(TargetFunctional.median(), 0.0, 1.0) == -0.5

    def test_beta_median(self):
        f = TargetFunctional.beta_median(1.0)
        assert identification_value(f, 3.0, 2.0) == 1.0
        with pytest.raises(ValidationError):
            identification_value(f, 1.0, 0.0)

    @pytest.mark.parametrize(
        "f",
        [MEAN, TargetFunctional.quantile(0.2), TargetFunctional.expectile(0.8), TargetFunctional.median()],
        ids=str,
    )
    def test_zero_crossing_at_functional(self, f, rng):
        for _ in range(50):
            dist = random_discrete(rng, -3.0, 3.0)
            t = functional_of_empirical(f, dist.y, dist.p)
            z = np.linspace(-4.0, 4.0, 801)
            ev = identification_value(f, z[:, None], dist.y[None, :]) @ dist.p
            assert np.all(np.diff(ev) >= -1e-12)
            assert np.all(ev[z < t - 1e-9] <= 1e-12)
            assert np.all(ev[z > t + 1e-9] >= -1e-12)


class TestGeneralizedResiduals:
    def test_examples(self):
        np.testing.assert_array_equal(generalized_residuals(MEAN, _sample([1, 2], [1, 2]), "m"), [0, 0])
        np.testing.assert_array_equal(generalized_residuals(MEAN, _sample([1, 2], [2, 2]), "m"), [1, 0])
        med = generalized_residuals(TargetFunctional.quantile(0.5), _sample([0, 2], [1, 1]), "m")
        np.testing.assert_array_equal(med, [0.5, -0.5])

    def test_unknown_model(self):
        with pytest.raises(UnknownModel):
            generalized_residuals(MEAN, _sample([1, 2], [1, 2]), "other")


class TestTestFunctions:
    def test_category_and_bins(self):
        s = _sample([1, 2, 3, 4], [1, 2, 3, 4], x=[0.0, 1.0, 2.0, 3.0], g=["a", "b", "a", "b"])
        np.testing.assert_array_equal(CategoryIndicator("g", "a").evaluate(s, "m"), [1, 0, 1, 0])
        np.testing.assert_array_equal(BinIndicator("x", 0.0, 2.0).evaluate(s, "m"), [0, 1, 1, 0])
        np.testing.assert_array_equal(BinIndicator("x", 0.0, 2.0, include_lower=True).evaluate(s, "m"), [1, 1, 1, 0])
        prod = Product((FeatureProjection("x"), CategoryIndicator("g", "b")))
        np.testing.assert_array_equal(prod.evaluate(s, "m"), [0, 1, 0, 3])
        assert prod.label == "col:x*cat:g=b"

    def test_bin_bounds(self):
        with pytest.raises(ValidationError):
            BinIndicator("x", 1.0, 1.0)
        with pytest.raises(ValidationError):
            BinIndicator("x", 2.0, 1.0)
        BinIndicator("x", 1.0, 1.0, include_lower=True)

    def test_categorical_feature_cannot_be_projected(self):
        s = _sample([1, 2], [1, 2], g=["a", "b"])
        with pytest.raises(NonNumericFeature):
            FeatureProjection("g").evaluate(s, "m")

    def test_custom_shape_checked(self):
        s = _sample([1, 2], [1, 2])
        assert Custom(lambda smp, m: smp.y**2, "y2").evaluate(s, "m").tolist() == [1, 4]
        with pytest.raises(ValidationError):
            Custom(lambda smp, m: np.ones(3)).evaluate(s, "m")

    @pytest.mark.parametrize(
        "text, expected",
        [
            ("constant", Constant()),
            ("model", ModelPrediction()),
            ("col:x", FeatureProjection("x")),
            ("cat:g=a", CategoryIndicator("g", "a")),
            ("bin:x:0:2.5", BinIndicator("x", 0.0, 2.5)),
            ("product:col:x*cat:g=a", Product((FeatureProjection("x"), CategoryIndicator("g", "a")))),
        ],
    )
    def test_parse(self, text, expected):
        assert parse_test_function(text) == expected

    def test_parse_rejects(self):
        with pytest.raises(ValidationError):
            parse_test_function("weird")


class TestTTest:
    def test_matches_scipy(self, rng):
        from scipy import stats

        x = rng.normal(0.1, 1.0, size=50)
        _, se, t, p = t_test(x)
        ref = stats.ttest_1samp(x, 0.0)
        assert t == pytest.approx(ref.statistic, rel=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-10)
        assert se == pytest.approx(np.std(x, ddof=1) / np.sqrt(50))
        assert t_test(x, "greater")[3] + t_test(x, "less")[3] == pytest.approx(1.0)

    def test_degenerate(self):
        assert t_test(np.zeros(5)) == (0.0, 0.0, 0.0, 1.0)
        with pytest.raises(DegenerateVariance):
            t_test(np.ones(5))
        with pytest.raises(DegenerateVariance):
            t_test(np.array([1.0]))


class TestVBar:
    def test_examples(self):
        perfect = v_bar(MEAN, _sample([1, 2, 3], [1, 2, 3]), "m", Constant())
        assert perfect.v_bar == 0.0 and perfect.p_value == 1.0
        assert v_bar(MEAN, _sample([0, 2], [2, 2]), "m", Constant()).v_bar == 1.0

    def test_indicator_normalized_by_full_n(self):
        s = _sample([0.0, 2.0, 10.0, 4.0], [1.0, 3.0, 10.0, 4.0], g=["F", "F", "M", "M"])
        row = v_bar(MEAN, s, "m", CategoryIndicator("g", "F"))
        assert row.v_bar == 2.0 / 4
        assert row.n_effective == 2

    def test_single_row(self):
        row = v_bar(MEAN, _sample([1.0], [2.0]), "m", Constant())
        assert row.v_bar == 1.0
        assert row.std_error is None and row.p_value is None

    def test_subsample_bias(self):
        s = _sample([0, 2, 10], [1, 1, 10])
        sel = lambda v: Custom(lambda smp, m: np.array(v, dtype=float), "sel")  # noqa: E731
        assert subsample_bias(MEAN, s, "m", sel([1, 1, 0])) == 0.0
        assert subsample_bias(MEAN, s, "m", sel([0, 0, 1])) == 0.0
        assert subsample_bias(MEAN, s, "m", Constant()) == v_bar(MEAN, s, "m", Constant()).v_bar
        with pytest.raises(EmptySubsample):
            subsample_bias(MEAN, s, "m", sel([0, 0, 0]))
        with pytest.raises(ValidationError):
            subsample_bias(MEAN, s, "m", sel([0.5, 0, 0]))

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100), st.booleans()), min_size=2, max_size=30).filter(
            lambda rows: any(r[2] for r in rows)
        )
    )
    def test_invariants(self, rows):
        y, m, sel = (np.array(c) for c in zip(*rows))
        s = _sample(y, m)
        resid = generalized_residuals(MEAN, s, "m")
        try:
            const = v_bar(MEAN, s, "m", Constant()).v_bar
        except DegenerateVariance:
            return
        assert const == np.mean(resid)
        assert const == pytest.approx(np.mean(m) - np.mean(y), abs=1e-12 * max(1.0, np.abs(y).max(), np.abs(m).max()))
        phi = Custom(lambda smp, mm: sel.astype(float), "sel")
        try:
            vb = v_bar(MEAN, s, "m", phi).v_bar
        except DegenerateVariance:
            return
        sb = subsample_bias(MEAN, s, "m", phi)
        assert sb * sel.sum() / len(y) == pytest.approx(vb, rel=1e-12, abs=1e-12)

    def test_t_test_size_under_calibration(self):
        rng = np.random.default_rng(7)
        reps, n = 2000, 200
        rejects = 0
        for _ in range(reps):
            x = rng.uniform(0, 1, size=n)
            mu = 1.0 + 2.0 * x
            y = rng.poisson(mu).astype(float)
            row = v_bar(MEAN, _sample(y, mu, x=x), "m", FeatureProjection("x"))
            assert 0.0 <= row.p_value <= 1.0
            rejects += row.p_value < 0.05
        assert abs(rejects / reps - 0.05) <= 0.02


class TestCalibrationReport:
    def test_default_row_count(self, rng):
        s = _sample(
            rng.normal(size=20), rng.normal(size=20), a=rng.normal(size=20), b=rng.normal(size=20), g=["u", "v"] * 10
        )
        phis = default_test_functions(s)
        assert [p.label for p in phis] == ["constant", "col:a", "col:b", "cat:g=u", "cat:g=v", "model"]
        assert len(calibration_report(MEAN, s, "m")) == 6
        assert len(calibration_report(MEAN, s, "m", phis=[Constant()], include_defaults=False)) == 1

    def test_perfect_and_constant_models(self):
        y = np.array([1.0, 2.0, 5.0, 3.0])
        rows = calibration_report(MEAN, _sample(y, y, x=[1.0, 2.0, 3.0, 4.0]), "m")
        assert all(r.v_bar == 0.0 and r.p_value == 1.0 for r in rows)
        s = _sample(y, np.full(4, y.mean()))
        assert v_bar(MEAN, s, "m", Constant()).v_bar == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            calibration_report(MEAN, _sample([1, 2], [1, 2]), "m", phis=[], include_defaults=False)


class TestWald:
    def test_single_function_equals_t_squared(self):
        rng = np.random.default_rng(3)
        n = 10_000
        x = rng.normal(size=n)
        y = x + rng.normal(size=n)
        s = _sample(y, x + 0.02, x=x)
        w, p = wald_joint_test(MEAN, s, "m", [Constant()])
        t = v_bar(MEAN, s, "m", Constant()).t_stat
        assert w == pytest.approx(t**2, rel=1.0 / n)
        assert 0.0 <= p <= 1.0

    def test_perfect_model(self):
        y = np.arange(5.0)
        assert wald_joint_test(MEAN, _sample(y, y, x=y), "m", [Constant(), FeatureProjection("x")]) == (0.0, 1.0)

    def test_singular(self, rng):
        s = _sample(rng.normal(size=30), rng.normal(size=30))
        with pytest.raises(SingularCovariance):
            wald_joint_test(MEAN, s, "m", [Constant(), Constant()])
        with pytest.raises(SingularCovariance):
            wald_joint_test(MEAN, s.subset([0, 1]), "m", [Constant(), ModelPrediction()])

    def test_miscalibration_detected(self, rng):
        x = rng.uniform(size=2000)
        y = 2 * x + rng.normal(scale=0.1, size=2000)
        s = _sample(y, np.full(2000, y.mean()), x=x)
        _, p = wald_joint_test(MEAN, s, "m", [Constant(), FeatureProjection("x")])
        assert p < 1e-10


class TestQuantileBins:
    def test_constant_feature(self):
        bins = quantile_bins(_sample([1, 2, 3], [1, 2, 3], x=[4.0, 4.0, 4.0]), "x", 5)
        assert len(bins) == 1
        assert bins[0].evaluate(_sample([1, 2, 3], [1, 2, 3], x=[4.0, 4.0, 4.0]), "m").tolist() == [1, 1, 1]

    def test_quartiles(self):
        x = np.arange(1.0, 101.0)
        s = _sample(x, x, x=x)
        bins = quantile_bins(s, "x", 4)
        counts = [int(b.evaluate(s, "m").sum()) for b in bins]
        assert counts == [25, 25, 25, 25]

    def test_mass_at_minimum_merges_edges(self, rng):
        x = np.concatenate([np.zeros(22), rng.uniform(1, 2, size=78)])
        s = _sample(x, x, x=x)
        bins = quantile_bins(s, "x", 10)
        assert len(bins) < 10
        total = sum(b.evaluate(s, "m") for b in bins)
        np.testing.assert_array_equal(total, np.ones(100))

    def test_errors(self):
        s = _sample([1, 2], [1, 2], g=["a", "b"])
        with pytest.raises(NonNumericFeature):
            quantile_bins(s, "g", 3)
        with pytest.raises(ValidationError):
            quantile_bins(_sample([1, 2], [1, 2], x=[1.0, 2.0]), "x", 1)


class TestTTestScaling:
    @pytest.mark.parametrize("scale", [1e-300, 1e-150, 1.0, 1e150, 1e300])
    def test_scale_free(self, scale):
        base = np.array([0.0, 1.0, 3.0, -0.5])
        _, _, t_ref, p_ref = t_test(base)
        _, se, t, p = t_test(base * scale)
        assert t == pytest.approx(t_ref, rel=1e-12)
        assert p == pytest.approx(p_ref, rel=1e-12)
        assert se > 0
