"""End-to-end command line behavior and the exit-code contract."""

import json

import numpy as np
import pytest

from tcreg import load_model, predict
from tcreg.cli import main


def write_csv(path, header, rows):
    lines = [header] if header else []
    lines += [",".join(repr(float(v)) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def concave_csv(tmp_path):
    return write_csv(tmp_path / "line.csv", "x,y",
                     [(0.0, 0.0), (0.25, 0.8), (0.5, 1.0), (0.75, 1.15), (1.0, 1.2)])


@pytest.fixture
def plane_csv(tmp_path):
    rng = np.random.default_rng(71)
    X = rng.uniform(size=(16, 2))
    y = -((X[:, 0] - 0.4) ** 2) - 0.5 * (X[:, 1] - 0.6) ** 2 + 0.05 * rng.normal(size=16)
    return write_csv(tmp_path / "plane.csv", "a,b,y",
                     [(xa, xb, yy) for (xa, xb), yy in zip(X, y)])


class TestFitCommand:
    def test_fit_writes_model_and_summary(self, concave_csv, tmp_path, capsys):
        out = tmp_path / "model.json"
        code = main(["fit", concave_csv, "--variant", "tc", "--s", "1", "-o", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert "sse=" in text and "total_hinge_weight=" in text
        model = load_model(out)
        assert model.spec.variant == "tc"

    def test_fit_stdout_json(self, concave_csv, capsys):
        code = main(["fit", concave_csv, "--s", "1"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["schema_version"] == 1

    def test_missing_s_is_usage_error(self, concave_csv):
        assert main(["fit", concave_csv]) == 1

    def test_unknown_flag_is_usage_error(self, concave_csv):
        assert main(["fit", concave_csv, "--s", "1", "--frobnicate"]) == 1

    def test_blank_cell_is_data_error(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x,y\n0.0,1.0\n,2.0\n")
        assert main(["fit", str(p), "--s", "1"]) == 2

    def test_missing_file_is_data_error(self, tmp_path):
        assert main(["fit", str(tmp_path / "absent.csv"), "--s", "1"]) == 2

    def test_nonconvergence_writes_model_then_exit_3(self, plane_csv, tmp_path, capsys):
        out = tmp_path / "axial.json"
        code = main(["fit", plane_csv, "--variant", "axial", "--tol", "1e-14",
                     "--max-iter", "2", "-o", str(out)])
        assert code == 3
        assert out.exists()
        assert "did not converge" in capsys.readouterr().err

    def test_v_cap_on_axial_is_usage_error(self, plane_csv):
        assert main(["fit", plane_csv, "--variant", "axial", "--v-cap", "1.0"]) == 1


class TestPredictCommand:
    def test_predictions_match_library(self, concave_csv, tmp_path, capsys):
        model_path = tmp_path / "model.json"
        main(["fit", concave_csv, "--s", "1", "-o", str(model_path)])
        capsys.readouterr()
        newx = write_csv(tmp_path / "new.csv", "x", [(0.1,), (0.6,), (2.0,)])
        out = tmp_path / "pred.csv"
        code = main(["predict", str(model_path), newx, "-o", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "prediction,extrapolated"
        got = np.array([float(l.split(",")[0]) for l in lines[1:]])
        flags = [l.split(",")[1] for l in lines[1:]]
        model = load_model(model_path)
        want, mask = predict(model, np.array([[0.1], [0.6], [2.0]]))
        np.testing.assert_allclose(got, want, rtol=1e-15)
        assert flags == [str(int(f)) for f in mask] == ["0", "0", "1"]

    def test_column_mismatch_is_data_error(self, concave_csv, plane_csv, tmp_path, capsys):
        model_path = tmp_path / "model.json"
        main(["fit", concave_csv, "--s", "1", "-o", str(model_path)])
        capsys.readouterr()
        assert main(["predict", str(model_path), plane_csv]) == 2


class TestCheckCommand:
    def test_concave_grid_passes(self, tmp_path, capsys):
        u = np.linspace(0, 1, 5)
        grid = write_csv(tmp_path / "g.csv", "x,value", [(x, -(x**2)) for x in u])
        code = main(["check", grid, "--s", "1"])
        assert code == 0
        assert "PASS" in capsys.readouterr().out

    def test_convex_grid_fails(self, tmp_path, capsys):
        u = np.linspace(0, 1, 5)
        grid = write_csv(tmp_path / "g.csv", "x,value", [(x, x**2) for x in u])
        code = main(["check", grid, "--s", "1"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out

    def test_axial_variant(self, tmp_path, capsys):
        rows = []
        for a in np.linspace(0, 1, 3):
            for b in np.linspace(0, 1, 3):
                rows.append((a, b, -a * a - b * b + 10 * a * b))
        grid = write_csv(tmp_path / "g.csv", "a,b,value", rows)
        assert main(["check", grid, "--variant", "axial"]) == 0
        capsys.readouterr()

    def test_incomplete_grid_is_data_error(self, tmp_path):
        grid = write_csv(tmp_path / "g.csv", "a,b,value",
                         [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)])
        assert main(["check", grid]) == 2

    def test_s_out_of_range_is_usage_error(self, tmp_path):
        u = np.linspace(0, 1, 4)
        grid = write_csv(tmp_path / "g.csv", "x,value", [(x, -(x**2)) for x in u])
        assert main(["check", grid, "--s", "3"]) == 1


class TestCvCommand:
    def test_explicit_grid_and_table(self, concave_csv, tmp_path, capsys):
        out = tmp_path / "cv.csv"
        code = main(["cv", concave_csv, "--s", "1", "--v-grid", "0.05,5.0",
                     "--folds", "3", "--seed", "7", "-o", str(out)])
        assert code == 0
        assert "selected V = " in capsys.readouterr().out
        lines = out.read_text().splitlines()
        assert lines[0] == "V,mean_mse,fold_0,fold_1,fold_2"
        assert len(lines) == 3

    def test_deterministic_output_bytes(self, concave_csv, tmp_path, capsys):
        blobs = []
        for tag in ("a", "b"):
            out = tmp_path / f"cv_{tag}.csv"
            main(["cv", concave_csv, "--s", "1", "--v-grid", "auto",
                  "--folds", "3", "--seed", "9", "-o", str(out)])
            capsys.readouterr()
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1]

    def test_bad_grid_is_usage_error(self, concave_csv):
        assert main(["cv", concave_csv, "--s", "1", "--v-grid", "nope"]) == 1


class TestExperimentCommand:
    def plan(self, tmp_path):
        doc = {
            "repetitions": 3,
            "train_fraction": 0.7,
            "seed": 11,
            "roster": [
                {"name": "tc_s2", "kind": "estimator", "variant": "tc", "s": 2},
                {"name": "quad", "kind": "baseline",
                 "terms": [[1, 0], [0, 1], [2, 0], [0, 2], [1, 1]]},
            ],
        }
        p = tmp_path / "plan.json"
        p.write_text(json.dumps(doc))
        return str(p)

    def test_reports_written(self, plane_csv, tmp_path, capsys):
        outdir = tmp_path / "reports"
        code = main(["experiment", plane_csv, self.plan(tmp_path), "-o", str(outdir)])
        assert code == 0
        text = capsys.readouterr().out
        assert "model=tc_s2" in text and "model=quad" in text
        mse = (outdir / "mse_table.csv").read_text().splitlines()
        assert mse[0] == "rep,model,mse" and len(mse) == 1 + 3 * 2
        cdf = (outdir / "rank_cdf.csv").read_text().splitlines()
        assert cdf[0] == "model,rank,cum_fraction"

    def test_byte_identical_reruns(self, plane_csv, tmp_path, capsys):
        plan = self.plan(tmp_path)
        blobs = []
        for tag in ("a", "b"):
            outdir = tmp_path / f"rep_{tag}"
            main(["experiment", plane_csv, plan, "-o", str(outdir)])
            capsys.readouterr()
            blobs.append(((outdir / "mse_table.csv").read_bytes(),
                          (outdir / "rank_cdf.csv").read_bytes()))
        assert blobs[0] == blobs[1]

    def test_invalid_plan_is_data_error(self, plane_csv, tmp_path):
        p = tmp_path / "plan.json"
        p.write_text("{not json")
        assert main(["experiment", plane_csv, str(p)]) == 2
        p.write_text(json.dumps({"repetitions": 2, "train_fraction": 0.7,
                                 "roster": [{"name": "x", "kind": "mystery"}]}))
        assert main(["experiment", plane_csv, str(p)]) == 2


class TestRateSanityCommand:
    def test_small_run_writes_table(self, tmp_path, capsys):
        out = tmp_path / "rate.csv"
        code = main(["rate-sanity", "--n", "8,16", "--reps", "2",
                     "--noise-sd", "0.1", "--seed", "3", "-o", str(out)])
        assert code == 0
        assert "mean_risk" in capsys.readouterr().out
        lines = out.read_text().splitlines()
        assert lines[0] == "n,mean_risk" and len(lines) == 3

    def test_unknown_truth_is_usage_error(self):
        assert main(["rate-sanity", "--truth", "-x^3", "--n", "8", "--reps", "1"]) == 1

    def test_bad_n_is_usage_error(self):
        assert main(["rate-sanity", "--n", "two"]) == 1
