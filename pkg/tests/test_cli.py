"""End-to-end tests of the command-line interface."""

import csv
import json
import math

import numpy as np
import pytest

from oufactor.cli import main
from oufactor.dataio import (
    example_path,
    load_model_params,
    read_labels,
    read_params,
    read_series,
    write_params,
    write_series,
)
from oufactor.kalman import loglikelihood
from oufactor.params import ModelParams
from oufactor.preprocess import day_of_year, read_counts, read_dated_series
from oufactor.simulate import simulate


@pytest.fixture(scope="module")
def small_csv(tmp_path_factory):
    true = ModelParams(
        theta=np.array([[0.35]]),
        loadings=np.array([[1.0], [0.7]]),
        obs_mean=np.array([0.2, -0.2]),
        noise_var=np.array([0.2, 0.2]),
    )
    series, _ = simulate(true, np.arange(120.0), 77)
    path = tmp_path_factory.mktemp("data") / "small.csv"
    write_series(path, series)
    return str(path)


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


class TestTopLevel:
    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert "oufactor" in capsys.readouterr().out

    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "invalid choice" in capsys.readouterr().err

    def test_bad_option_value(self, capsys):
        assert main(["fit", "whatever.csv", "--m", "0"]) == 1
        assert "must be >= 1" in capsys.readouterr().err

    def test_missing_input_file(self, tmp_path, capsys):
        code = main(["fit", str(tmp_path / "absent.csv"), "--m", "1",
                     "--out-dir", str(tmp_path)])
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestSimulateCommand:
    def test_from_params_file(self, tmp_path, capsys):
        out = tmp_path / "sim.csv"
        code = main([
            "simulate", "--params", example_path("example_real_params.json"),
            "--n", "50", "--output", str(out), "--seed", "3",
        ])
        assert code == 0
        assert "wrote" in capsys.readouterr().out
        series = read_series(out)
        assert series.n == 50 and series.p == 2

    def test_byte_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["simulate", "--params",
                example_path("example_real_params.json"), "--n", "40",
                "--seed", "9"]
        assert main(argv + ["--output", str(a)]) == 0
        assert main(argv + ["--output", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        c = tmp_path / "c.csv"
        assert main(argv[:-2] + ["--seed", "10", "--output", str(c)]) == 0
        assert a.read_bytes() != c.read_bytes()

    def test_scenario_with_latent_and_no_noise(self, tmp_path):
        out = tmp_path / "sim.csv"
        lat = tmp_path / "latent.csv"
        code = main([
            "simulate", "--scenario", "t01-z2o", "--n", "30", "--no-noise",
            "--latent", str(lat), "--output", str(out), "--seed", "4",
        ])
        assert code == 0
        series = read_series(out)
        latent = read_series(lat)
        assert read_labels(lat) == ["x1", "x2"]
        z = np.array([[0.2, 0.5], [0.5, -0.2]])
        assert np.array_equal(series.values, latent.values @ z.T)

    def test_unknown_scenario(self, tmp_path, capsys):
        code = main(["simulate", "--scenario", "t99-z9x",
                     "--out-dir", str(tmp_path)])
        assert code == 1
        err = capsys.readouterr().err
        assert "unknown scenario" in err
        assert "experiment --list" in err


@pytest.fixture(scope="module")
def fit_output(small_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit") / "fit.json"
    code = main([
        "fit", small_csv, "--m", "1", "--starts", "2",
        "--max-evals", "800", "--output", str(out), "--seed", "5",
    ])
    assert code == 0
    return out


class TestFitCommand:
    def test_document_fields(self, fit_output, small_csv):
        doc = json.loads(fit_output.read_text(encoding="utf-8"))
        assert doc["format"] == "oufactor-fit"
        assert doc["m"] == 1 and doc["p"] == 2
        assert doc["n_rows"] == 120
        assert doc["k"] == 7
        assert doc["aic"] == pytest.approx(-2 * doc["loglik"] + 14)
        assert doc["bic"] == pytest.approx(
            -2 * doc["loglik"] + math.log(doc["n_observed"]) * 7
        )
        assert doc["block"] is not None
        assert doc["block_error"] is None

    def test_reloaded_params_reproduce_loglik(self, fit_output, small_csv):
        doc = json.loads(fit_output.read_text(encoding="utf-8"))
        params = load_model_params(fit_output)
        series = read_series(small_csv)
        assert loglikelihood(params, series) == pytest.approx(
            doc["loglik"], abs=1e-12
        )

    def test_byte_deterministic(self, small_csv, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        argv = ["fit", small_csv, "--m", "1", "--starts", "2",
                "--max-evals", "800", "--seed", "5"]
        assert main(argv + ["--output", str(a)]) == 0
        assert main(argv + ["--output", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestSelectCommand:
    def test_table_is_internally_consistent(self, small_csv, tmp_path, capsys):
        out = tmp_path / "select.csv"
        code = main([
            "select", small_csv, "--m-values", "1", "2", "--starts", "1",
            "--max-evals", "500", "--output", str(out), "--seed", "2",
        ])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "best by aic: m=" in stdout
        assert "best by bic: m=" in stdout
        rows = _read_rows(out)
        assert rows[0] == ["m", "loglik", "k", "aic", "bic", "converged",
                           "refitted", "error"]
        assert len(rows) == 3
        for record in rows[1:]:
            m, loglik, k = int(record[0]), float(record[1]), int(record[2])
            assert k == 2 * (m + 2) + m * (m + 1) // 2
            assert float(record[3]) == pytest.approx(-2 * loglik + 2 * k,
                                                     abs=1e-9)
            assert float(record[4]) == pytest.approx(
                -2 * loglik + math.log(120) * k, abs=1e-9
            )


class TestPredictCommand:
    def test_with_fixed_params(self, tmp_path, capsys):
        out = tmp_path / "pred.csv"
        code = main([
            "predict", example_path("example_real.csv"),
            "--params", example_path("example_real_params.json"),
            "--output", str(out),
        ])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "interval coverage:" in stdout
        rows = _read_rows(out)
        assert rows[0] == ["time", "channel", "observed", "predicted",
                           "lower95", "upper95"]
        assert len(rows) == 1 + 30 * 2
        for record in rows[1:]:
            t = float(record[0])
            assert t >= 270.0
            assert record[1] in ("genus_a", "genus_b")
            lower, mid, upper = (float(record[4]), float(record[3]),
                                 float(record[5]))
            assert lower < mid < upper

    def test_fit_then_predict(self, small_csv, tmp_path):
        out = tmp_path / "pred.csv"
        saved = tmp_path / "train_fit.json"
        code = main([
            "predict", small_csv, "--m", "1", "--starts", "1",
            "--max-evals", "500", "--split", "0.8", "--output", str(out),
            "--save-params", str(saved), "--seed", "6",
        ])
        assert code == 0
        assert out.exists()
        params = read_params(saved)
        assert params.m == 1 and params.p == 2
        rows = _read_rows(out)
        assert len(rows) == 1 + 24 * 2  # 120 rows, 20% held out

    def test_split_without_test_rows(self, tmp_path, capsys):
        series_path = tmp_path / "five.csv"
        rng = np.random.default_rng(0)
        from oufactor.kalman import TimeSeries

        write_series(series_path,
                     TimeSeries(np.arange(5.0), rng.normal(size=(5, 1))))
        code = main(["predict", str(series_path), "--m", "1",
                     "--split", "0.1", "--out-dir", str(tmp_path)])
        assert code == 1
        assert "leaves no usable" in capsys.readouterr().err

    def test_divergent_model_is_numerical_failure(self, small_csv, tmp_path,
                                                  capsys):
        bad = ModelParams(
            theta=np.array([[0.5]]),
            loadings=np.array([[1.0], [1.0]]),
            obs_mean=np.zeros(2),
            noise_var=np.zeros(2),
        )
        params_path = tmp_path / "bad.json"
        write_params(params_path, bad)
        code = main(["predict", small_csv, "--params", str(params_path),
                     "--out-dir", str(tmp_path)])
        assert code == 2
        assert "numerical failure" in capsys.readouterr().err


class TestCanonicalizeCommand:
    def test_general_model(self, tmp_path):
        original = ModelParams(
            theta=np.array([[1.2, 0.4], [0.1, 0.6]]),
            loadings=np.array([[1.0, 0.3], [0.2, 0.8], [0.5, -0.4]]),
            obs_mean=np.array([0.1, 0.2, 0.3]),
            noise_var=np.array([0.2, 0.3, 0.4]),
            diffusion=np.array([[1.5, 0.2], [0.2, 0.8]]),
        )
        src = tmp_path / "params.json"
        write_params(src, original)
        out = tmp_path / "canonical.json"
        assert main(["canonicalize", str(src), "--output", str(out)]) == 0
        canonical = load_model_params(out)
        assert canonical.is_canonical(tol=1e-8)
        series, _ = simulate(original, np.arange(40.0), 8)
        assert loglikelihood(canonical, series) == pytest.approx(
            loglikelihood(original, series), abs=1e-8
        )
        doc = json.loads(out.read_text(encoding="utf-8"))
        assert doc["format"] == "oufactor-canonical"
        assert doc["block"] is not None
        transform = np.array(doc["transform"])
        assert np.allclose(
            transform @ original.diffusion @ transform.T, np.eye(2), atol=1e-10
        )

    def test_accepts_fit_documents(self, small_csv, tmp_path):
        fit_out = tmp_path / "fit.json"
        assert main(["fit", small_csv, "--m", "1", "--starts", "1",
                     "--max-evals", "400", "--output", str(fit_out)]) == 0
        out = tmp_path / "canon.json"
        assert main(["canonicalize", str(fit_out), "--output", str(out)]) == 0
        assert load_model_params(out).is_canonical(tol=1e-8)


class TestPreprocessCommand:
    def test_logratio(self, tmp_path):
        out = tmp_path / "ratios.csv"
        code = main(["preprocess", "logratio",
                     example_path("example_counts.csv"),
                     "--output", str(out)])
        assert code == 0
        series = read_series(out)
        assert read_labels(out) == ["genus_a", "genus_b"]
        raw = read_counts(example_path("example_counts.csv"))
        expected = np.log(
            (raw.counts[:, :2] + 0.3) / (raw.counts[:, [2]] + 0.3)
        )
        assert np.allclose(series.values, expected, rtol=1e-15, atol=0)

    def test_logratio_reference_flag(self, tmp_path):
        out = tmp_path / "ratios.csv"
        code = main(["preprocess", "logratio",
                     example_path("example_counts.csv"),
                     "--reference", "genus_a", "--output", str(out)])
        assert code == 0
        assert read_labels(out) == ["genus_b", "reference_total"]

    def test_deseason(self, tmp_path):
        out = tmp_path / "anomalies.csv"
        clim_out = tmp_path / "clim.csv"
        code = main(["preprocess", "deseason",
                     example_path("example_daily.csv"),
                     "--output", str(out), "--climatology", str(clim_out)])
        assert code == 0
        dates, values, labels = read_dated_series(out)
        assert labels == ["site_a", "site_b"]
        doys = day_of_year(dates)
        for d in np.unique(doys)[:10]:
            assert np.abs(np.nanmean(values[doys == d], axis=0)).max() < 1e-10
        rows = _read_rows(clim_out)
        assert rows[0] == ["doy", "site_a", "site_b"]
        assert len(rows) == 1 + 365


class TestExperimentCommand:
    def test_list(self, capsys):
        assert main(["experiment", "--list"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 90
        assert lines[0].startswith("t01-z2s")

    def test_tiny_run_outputs(self, tmp_path):
        argv = [
            "experiment", "--scenario", "t01-z2o", "--replicates", "2",
            "--n", "150", "--m-values", "1", "2", "--starts", "1",
            "--max-evals", "400", "--seed", "13",
        ]
        out1 = tmp_path / "run1"
        assert main(argv + ["--out-dir", str(out1)]) == 0
        fits = _read_rows(out1 / "experiment_fits.csv")
        reps = _read_rows(out1 / "experiment_replicates.csv")
        summary = _read_rows(out1 / "experiment_summary.csv")
        assert len(fits) == 1 + 2 * 2
        assert len(reps) == 1 + 2
        assert len(summary) == 2
        header = summary[0]
        record = dict(zip(header, summary[1]))
        assert record["scenario_id"] == "t01-z2o"
        assert record["n_failed"] == "0"
        assert int(record["aic_m1"]) + int(record["aic_m2"]) == 2
        assert float(record["median_error_ratio"]) > 0
        for row in fits[1:]:
            m, loglik, aic = int(row[2]), float(row[3]), float(row[4])
            k = 2 * (m + 2) + m * (m + 1) // 2
            assert aic == pytest.approx(-2 * loglik + 2 * k, abs=1e-9)
        out2 = tmp_path / "run2"
        assert main(argv + ["--out-dir", str(out2)]) == 0
        for name in ("experiment_fits.csv", "experiment_replicates.csv",
                     "experiment_summary.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestConfigFile:
    def test_config_supplies_defaults(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"seed": 5, "n": 30}), encoding="utf-8")
        from_config = tmp_path / "a.csv"
        explicit = tmp_path / "b.csv"
        base = ["simulate", "--params",
                example_path("example_real_params.json")]
        assert main(base + ["--config", str(config),
                            "--output", str(from_config)]) == 0
        assert main(base + ["--seed", "5", "--n", "30",
                            "--output", str(explicit)]) == 0
        assert from_config.read_bytes() == explicit.read_bytes()

    def test_flags_beat_config(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"n": 30}), encoding="utf-8")
        out = tmp_path / "a.csv"
        assert main(["simulate", "--params",
                     example_path("example_real_params.json"),
                     "--config", str(config), "--n", "40",
                     "--output", str(out)]) == 0
        assert read_series(out).n == 40

    def test_unknown_key_rejected(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"points": 30}), encoding="utf-8")
        code = main(["simulate", "--params",
                     example_path("example_real_params.json"),
                     "--config", str(config), "--out-dir", str(tmp_path)])
        assert code == 1
        assert "unknown config keys: points" in capsys.readouterr().err

    def test_bad_value_rejected(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"n": "many"}), encoding="utf-8")
        code = main(["simulate", "--params",
                     example_path("example_real_params.json"),
                     "--config", str(config), "--out-dir", str(tmp_path)])
        assert code == 1
        assert "key 'n'" in capsys.readouterr().err
