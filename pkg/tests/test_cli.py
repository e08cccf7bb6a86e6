"""End-to-end command-line tests: artifact schemas, option handling,
byte-level determinism, and exit codes."""

import csv
import json

import numpy as np
import pytest

from conftest import make_ecm_data
from envcore.cli import main
from envcore.estimators import fit_cm, fit_um
from envcore.model import Dataset


def _run(*argv):
    return main(list(argv))


def _write_csv(path, Y, X):
    r, p = Y.shape[1], X.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"y{i}" for i in range(r)]
                        + [f"x{j}" for j in range(p)])
        for yrow, xrow in zip(Y, X):
            writer.writerow([repr(float(v)) for v in yrow]
                            + [repr(float(v)) for v in xrow])


@pytest.fixture
def csv_data(tmp_path):
    data, _ = make_ecm_data(seed=80, n=250)
    path = tmp_path / "data.csv"
    _write_csv(path, data.Y, data.X)
    return path, data


class TestFit:
    def test_dental_reference_numbers(self, tmp_path):
        rc = _run("fit", "--data", "dental", "--model", "ecm", "--u", "1",
                  "--U", "poly:1", "--intercept", "model3",
                  "--out", str(tmp_path))
        assert rc == 0
        payload = json.loads((tmp_path / "fit.json").read_text())
        assert payload["model"] == "ecm"
        assert payload["dim"] == 1
        got = np.diag(np.asarray(payload["avar_beta"]))
        np.testing.assert_allclose(got, [5.88, 9.16, 13.16, 17.89],
                                   atol=0.05)

    def test_dental_bic_selects_dim_one(self, tmp_path):
        rc = _run("fit", "--data", "dental", "--model", "ecm", "--u", "bic",
                  "--U", "poly:1", "--intercept", "model3",
                  "--out", str(tmp_path))
        assert rc == 0
        payload = json.loads((tmp_path / "fit.json").read_text())
        assert payload["dim"] == 1
        assert sorted(payload["bic_table"]) == ["0", "1", "2"]

    def test_json_floats_round_trip_exactly(self, csv_data, tmp_path):
        path, data = csv_data
        Udata = Dataset(Y=data.Y, X=data.X, U=np.eye(data.r))
        rc = _run("fit", "--data", str(path), "--model", "um",
                  "--out", str(tmp_path))
        assert rc == 0
        payload = json.loads((tmp_path / "fit.json").read_text())
        fit = fit_um(Udata)
        assert np.asarray(payload["beta"]).tolist() == fit.beta.tolist()
        assert payload["loglik"] == fit.loglik
        rows = list(csv.DictReader((tmp_path / "tables.csv").open()))
        assert len(rows) == data.r * data.p
        one = rows[0]
        i, j = int(one["response"]), int(one["predictor"])
        assert float(one["estimate"]) == fit.beta[i, j]

    def test_poly_U_equals_explicit_file(self, csv_data, tmp_path):
        path, data = csv_data
        t = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        Ufile = tmp_path / "U.csv"
        np.savetxt(Ufile, np.vander(t, 3, increasing=True), delimiter=",")
        times = ",".join(str(v) for v in t)
        rc = _run("fit", "--data", str(path), "--model", "cm",
                  "--U", "poly:2", "--times", times,
                  "--out", str(tmp_path / "a"))
        assert rc == 0
        rc = _run("fit", "--data", str(path), "--model", "cm",
                  "--U", str(Ufile), "--out", str(tmp_path / "b"))
        assert rc == 0
        a = (tmp_path / "a" / "fit.json").read_bytes()
        b = (tmp_path / "b" / "fit.json").read_bytes()
        assert a == b

    def test_trig_U_shape(self, csv_data, tmp_path):
        path, data = csv_data
        times = ",".join(str(float(v)) for v in range(data.r))
        rc = _run("fit", "--data", str(path), "--model", "cm",
                  "--U", "trig:6", "--times", times,
                  "--out", str(tmp_path))
        assert rc == 0
        payload = json.loads((tmp_path / "fit.json").read_text())
        assert payload["k"] == 3  # constant, cosine, sine

    def test_identity_U_cm_equals_um(self, csv_data, tmp_path):
        path, data = csv_data
        rc = _run("fit", "--data", str(path), "--model", "cm",
                  "--U", "identity", "--intercept", "model3",
                  "--out", str(tmp_path))
        assert rc == 0
        payload = json.loads((tmp_path / "fit.json").read_text())
        um = fit_um(Dataset(Y=data.Y, X=data.X, U=np.eye(data.r)))
        np.testing.assert_allclose(payload["beta"], um.beta, atol=1e-8)

    def test_row_test_section(self, csv_data, tmp_path):
        path, _ = csv_data
        rc = _run("fit", "--data", str(path), "--model", "ecm", "--u", "2",
                  "--U", "identity", "--test-rows", "1",
                  "--out", str(tmp_path))
        assert rc == 0
        payload = json.loads((tmp_path / "fit.json").read_text())
        rt = payload["row_test"]
        assert rt["df"] == 2
        assert 0.0 <= rt["p_value"] <= 1.0

    def test_contrast_and_profile_outputs(self, csv_data, tmp_path):
        path, data = csv_data
        cfile = tmp_path / "c1.csv"
        np.savetxt(cfile, np.array([[1.0], [-1.0]]), delimiter=",")
        xfile = tmp_path / "xnew.csv"
        np.savetxt(xfile, np.array([0.5, -0.5]), delimiter=",")
        rc = _run("fit", "--data", str(path), "--model", "ecm", "--u", "2",
                  "--U", "identity", "--contrast", str(cfile),
                  "--profile", str(xfile), "--out", str(tmp_path))
        assert rc == 0
        payload = json.loads((tmp_path / "fit.json").read_text())
        assert np.asarray(payload["contrast"]["Ualpha1"]).shape == (data.r, 1)
        assert len(payload["profile"]["mean"]) == data.r
        with (tmp_path / "profile.csv").open() as fh:
            header = next(csv.reader(fh))
        assert header == ["series", "x", "y", "lo", "hi"]

    def test_exit_codes_for_bad_input(self, tmp_path):
        assert _run("fit", "--data", "/no/such/file.csv", "--model", "um",
                    "--out", str(tmp_path)) == 2
        assert _run("fit", "--data", "dental", "--model", "em",
                    "--u", "two", "--out", str(tmp_path)) == 2
        assert _run("fit", "--data", "dental", "--model", "em", "--u", "1",
                    "--tol", "bogus=1", "--out", str(tmp_path)) == 2
        assert _run("fit", "--data", "dental", "--model", "um",
                    "--test-rows", "1", "--out", str(tmp_path)) == 2
        assert _run("fit", "--data", "dental", "--model", "um",
                    "--seed", "-1", "--out", str(tmp_path)) == 2

    def test_exit_code_for_convergence_failure(self, csv_data, tmp_path):
        path, _ = csv_data
        rc = _run("fit", "--data", str(path), "--model", "em", "--u", "3",
                  "--U", "identity", "--tol", "tol=0",
                  "--tol", "max_sweeps=1", "--tol", "n_random=0",
                  "--out", str(tmp_path))
        assert rc == 3


class TestSimulate:
    def test_null_scenario_byte_identical(self, tmp_path, monkeypatch):
        out = {}
        for label, threads in (("a", "1"), ("b", "8"), ("c", "1")):
            monkeypatch.setenv("ENVCORE_THREADS", threads)
            d = tmp_path / label
            rc = _run("simulate", "--scenario", "null_test", "--reps", "4",
                      "--out", str(d))
            assert rc == 0
            out[label] = ((d / "report.json").read_bytes(),
                          (d / "tables.csv").read_bytes())
        assert out["a"] == out["b"] == out["c"]

    def test_report_schema(self, tmp_path):
        rc = _run("simulate", "--scenario", "null_test", "--reps", "3",
                  "--n", "500", "--seed", "5", "--out", str(tmp_path))
        assert rc == 0
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["scenario_id"] == "null_test"
        assert payload["seed"] == 5 and payload["n"] == 500
        assert len(payload["extra"]["statistics"]) == 3

    def test_bias_sweep_plot_csv(self, tmp_path):
        rc = _run("simulate", "--scenario", "bias_sweep", "--reps", "2",
                  "--n", "400", "--out", str(tmp_path))
        assert rc == 0
        with (tmp_path / "mse_vs_k.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert set(r["series"] for r in rows) == {"cm", "um", "em"}
        cm = [r for r in rows if r["series"] == "cm"]
        assert [int(float(r["x"])) for r in cm] == list(range(1, 21))
        assert all(float(r["y"]) > 0 for r in rows)
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["extra"]["k_grid"] == list(range(1, 21))

    def test_unknown_scenario_rejected(self):
        with pytest.raises(SystemExit):
            _run("simulate", "--scenario", "mystery", "--reps", "1")
