"""Baselines, the repeated-split experiment harness, and the synthetic
rate sanity runner."""

import numpy as np
import pytest

from tcreg import (
    BaselineSpec,
    Dataset,
    ExperimentPlan,
    fit_baseline,
    ModelSpec,
    rate_sanity,
    run_experiment,
    write_experiment_reports,
)


def quadratic_dataset(rng, n=24):
    X = rng.uniform(size=(n, 2))
    y = -((X[:, 0] - 0.4) ** 2) - 0.5 * (X[:, 1] - 0.6) ** 2 + 0.1 * rng.normal(size=n)
    return Dataset(X=X, y=y)


class TestFitBaseline:
    def test_linear_recipe_exact(self):
        X = np.array([[0.0], [0.5], [1.0]])
        ds = Dataset(X=X, y=1.0 + 2.0 * X[:, 0])
        b = fit_baseline(ds, BaselineSpec(name="lin", terms=((1,),)))
        np.testing.assert_allclose(b.predict(X), ds.y, atol=1e-10)

    def test_quadratic_recipe_recovers_square(self):
        X = np.linspace(0, 1, 9)[:, None]
        ds = Dataset(X=X, y=X[:, 0] ** 2)
        b = fit_baseline(ds, BaselineSpec(name="quad", terms=((1,), (2,))))
        intercept, cx, cx2 = b.coefs
        assert cx == pytest.approx(0.0, abs=1e-8)
        assert cx2 == pytest.approx(1.0, abs=1e-8)

    def test_rank_deficient_duplicate_features(self):
        X = np.linspace(0, 1, 6)[:, None]
        ds = Dataset(X=X, y=3.0 * X[:, 0] - 1.0)
        b = fit_baseline(ds, BaselineSpec(name="dup", terms=((1,), (1,))))
        assert np.all(np.isfinite(b.coefs))
        np.testing.assert_allclose(b.predict(X), ds.y, atol=1e-5)

    def test_multivariate_term(self):
        rng = np.random.default_rng(61)
        X = rng.uniform(size=(20, 2))
        y = 2.0 * X[:, 0] * X[:, 1]
        b = fit_baseline(Dataset(X=X, y=y), BaselineSpec(name="int", terms=((1, 1),)))
        np.testing.assert_allclose(b.predict(X), y, atol=1e-9)


class TestRunExperiment:
    def test_single_model_all_ranks_one(self):
        rng = np.random.default_rng(62)
        plan = ExperimentPlan(repetitions=4, train_fraction=0.7, seed=5,
                              roster=(("quad", BaselineSpec(name="quad", terms=((2, 0), (0, 2)))),))
        res = run_experiment(quadratic_dataset(rng), plan)
        np.testing.assert_array_equal(res.ranks, 1)
        assert not res.had_ties

    def test_identical_models_tie_to_roster_order(self):
        rng = np.random.default_rng(63)
        spec = BaselineSpec(name="q", terms=((2, 0), (0, 2)))
        plan = ExperimentPlan(repetitions=3, train_fraction=0.7, seed=5,
                              roster=(("first", spec), ("second", spec)))
        res = run_experiment(quadratic_dataset(rng), plan)
        assert res.had_ties
        np.testing.assert_array_equal(res.ranks[:, 0], 1)
        np.testing.assert_array_equal(res.ranks[:, 1], 2)

    def test_same_seed_identical_results(self):
        rng = np.random.default_rng(64)
        ds = quadratic_dataset(rng)
        plan = ExperimentPlan(
            repetitions=3, train_fraction=0.7, seed=11,
            roster=(("tc", ModelSpec(variant="tc", s=2)),
                    ("quad", BaselineSpec(name="quad", terms=((2, 0), (0, 2))))))
        a = run_experiment(ds, plan)
        b = run_experiment(ds, plan)
        np.testing.assert_array_equal(a.mse, b.mse)
        np.testing.assert_array_equal(a.ranks, b.ranks)

    def test_reports_byte_identical(self, tmp_path):
        rng = np.random.default_rng(65)
        ds = quadratic_dataset(rng)
        plan = ExperimentPlan(
            repetitions=2, train_fraction=0.7, seed=2,
            roster=(("tc", ModelSpec(variant="tc", s=1)),
                    ("quad", BaselineSpec(name="quad", terms=((2, 0), (0, 2))))))
        blobs = []
        for tag in ("a", "b"):
            res = run_experiment(ds, plan)
            mse, cdf = tmp_path / f"mse_{tag}.csv", tmp_path / f"cdf_{tag}.csv"
            write_experiment_reports(res, mse, cdf)
            blobs.append((mse.read_bytes(), cdf.read_bytes()))
        assert blobs[0] == blobs[1]

    def test_report_formats(self, tmp_path):
        rng = np.random.default_rng(66)
        ds = quadratic_dataset(rng)
        plan = ExperimentPlan(repetitions=2, train_fraction=0.7, seed=2,
                              roster=(("quad", BaselineSpec(name="quad", terms=((2, 0), (0, 2)))),))
        res = run_experiment(ds, plan)
        mse, cdf = tmp_path / "mse.csv", tmp_path / "cdf.csv"
        write_experiment_reports(res, mse, cdf)
        lines = mse.read_text().splitlines()
        assert lines[0] == "rep,model,mse"
        assert len(lines) == 1 + 2
        lines = cdf.read_text().splitlines()
        assert lines[0] == "model,rank,cum_fraction"

    def test_inputs_not_mutated(self):
        rng = np.random.default_rng(67)
        ds = quadratic_dataset(rng)
        X0, y0 = ds.X.copy(), ds.y.copy()
        plan = ExperimentPlan(repetitions=2, train_fraction=0.6, seed=1,
                              roster=(("tc", ModelSpec(variant="tc", s=1)),))
        run_experiment(ds, plan)
        np.testing.assert_array_equal(ds.X, X0)
        np.testing.assert_array_equal(ds.y, y0)

    def test_failing_entry_recorded_missing(self):
        rng = np.random.default_rng(68)
        ds = quadratic_dataset(rng, n=10)
        # recipe referencing a nonexistent column fails per repetition
        plan = ExperimentPlan(
            repetitions=2, train_fraction=0.7, seed=3,
            roster=(("ok", BaselineSpec(name="ok", terms=((1, 0),))),
                    ("broken", BaselineSpec(name="broken", terms=((1, 0, 2),)))))
        res = run_experiment(ds, plan)
        assert np.all(np.isnan(res.mse[:, 1]))
        assert np.all(res.ranks[:, 1] == 0)
        np.testing.assert_array_equal(res.ranks[:, 0], 1)

    def test_plan_validation(self):
        spec = BaselineSpec(name="x", terms=((1,),))
        with pytest.raises(ValueError):
            ExperimentPlan(repetitions=0, train_fraction=0.5, seed=0,
                           roster=(("a", spec),))
        with pytest.raises(ValueError):
            ExperimentPlan(repetitions=1, train_fraction=1.0, seed=0,
                           roster=(("a", spec),))
        with pytest.raises(ValueError):
            ExperimentPlan(repetitions=1, train_fraction=0.5, seed=0,
                           roster=(("a", spec), ("a", spec)))


class TestRateSanity:
    def test_zero_noise_interpolates(self):
        for truth in ("-x^2", "-x1^2-x2^2+x1x2"):
            rows = rate_sanity(truth, [9, 16], noise_sd=0.0, reps=2, seed=0)
            for _, risk in rows:
                assert risk <= 1e-10

    def test_risk_decreases_with_n(self):
        rows = rate_sanity("-x^2", [64, 256], noise_sd=0.2, reps=8, seed=1)
        risks = dict(rows)
        assert risks[256] < risks[64]

    def test_noise_doubling_scales_risk(self):
        lo = dict(rate_sanity("-x^2", [32], noise_sd=0.1, reps=12, seed=2))[32]
        hi = dict(rate_sanity("-x^2", [32], noise_sd=0.2, reps=12, seed=2))[32]
        assert 3.0 <= hi / lo <= 5.0
