import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import fake_fit
from proftest.cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, main
from proftest.em import fit_em
from proftest.errors import DimensionError, InputError, NumericOverflowError
from proftest.inference import confidence_ellipse, wald_report
from proftest.io import (
    TESTS_COLUMNS,
    bundled_path,
    emit_report,
    parse_design,
    parse_measurements,
    read_commented_csv,
    write_measurements,
)
from proftest.model import Measurements
from proftest.simulation import reference_truth, simulate_dataset

DATA = str(bundled_path("demo_measurements.csv"))
DESIGN = str(bundled_path("demo_design.json"))


def csv_text(rows):
    return io.StringIO("lab,level,replicate,value\n" + "\n".join(rows) + "\n")


class TestParseMeasurements:
    def test_minimal(self):
        parsed = parse_measurements(csv_text(["R,1,1,1.5", "P,1,1,2.5"]))
        assert parsed.labs == ("R", "P")
        assert parsed.data.p == 2 and parsed.data.replicas == (1, 1)

    def test_reference_moved_first(self):
        parsed = parse_measurements(csv_text(["A,x,1,1", "B,x,1,2", "C,x,1,3"]), reference="B")
        assert parsed.labs == ("B", "A", "C")
        assert parsed.data.y[0][0, 0] == 2.0

    def test_duplicate_names_line(self):
        with pytest.raises(InputError, match="line 4"):
            parse_measurements(csv_text(["A,1,1,1", "B,1,1,2", "A,1,1,3"]))

    @pytest.mark.parametrize("row,msg", [("A,1,1", "line 2"), ("A,1,1,abc", "line 2"), ("A,1,1,inf", "line 2")])
    def test_malformed(self, row, msg):
        with pytest.raises(InputError, match=msg):
            parse_measurements(csv_text([row, "B,1,1,2"]))

    def test_missing_reference(self):
        with pytest.raises(InputError, match="reference"):
            parse_measurements(csv_text(["A,1,1,1", "B,1,1,2"]), reference="Z")

    def test_empty_cell(self):
        with pytest.raises(InputError, match="no measurements"):
            parse_measurements(csv_text(["A,1,1,1", "A,2,1,1", "B,1,1,2"]))

    def test_bad_header(self):
        with pytest.raises(InputError, match="header"):
            parse_measurements(io.StringIO("a,b,c\n"))

    def test_roundtrip_simulated(self):
        data = simulate_dataset(reference_truth("c", 3), 8)
        buf = io.StringIO()
        write_measurements(data, buf)
        buf.seek(0)
        back = parse_measurements(buf).data
        for a, b in zip(data.y, back.y):
            assert a.tobytes() == b.tobytes()


@given(values=st.lists(st.floats(-1e150, 1e150), min_size=4, max_size=4))
def test_roundtrip_property(values):
    data = Measurements((np.array([values[:2]]), np.array([values[2:]])))
    buf = io.StringIO()
    write_measurements(data, buf, labs=["r", "p"], levels=["L"])
    buf.seek(0)
    back = parse_measurements(buf)
    assert back.labs == ("r", "p")
    for a, b in zip(data.y, back.data.y):
        np.testing.assert_array_equal(a, b)


def test_values_with_unrepresentable_squares():
    with pytest.raises(NumericOverflowError, match="lab 2, level 1"):
        parse_measurements(csv_text(["A,1,1,0", "B,1,1,0", "B,1,2,1.9e154"]))


class TestParseDesign:
    def test_engine_values(self):
        d = parse_design(DESIGN)
        assert (d.p, d.m) == (8, 9)
        assert d.sigma2_x[0] == 0.0077
        assert d.sigma2[2, 0] == 0.0005
        np.testing.assert_array_equal(
            d.sigma2_x, [0.0077, 0.0256, 0.0740, 0.0999, 0.1414, 0.2007, 0.2266, 0.2500, 0.2581]
        )
        assert d.sigma2[6, 6] == 0.3307 and d.sigma2[7, 8] == 0.8060

    def test_zero_variance_rejected(self):
        doc = {"sigma2_x": [0.0, 1.0], "sigma2": [[1, 1], [1, 1]], "replicas": [1, 1]}
        with pytest.raises(InputError):
            parse_design(io.StringIO(json.dumps(doc)))

    def test_length_mismatch(self):
        doc = {"sigma2_x": [1.0, 1.0], "sigma2": [[1, 1], [1]], "replicas": [1, 1]}
        with pytest.raises(DimensionError):
            parse_design(io.StringIO(json.dumps(doc)))

    def test_missing_key(self):
        with pytest.raises(InputError, match="replicas"):
            parse_design(io.StringIO(json.dumps({"sigma2_x": [1.0], "sigma2": [[1.0], [1.0]]})))


class TestEmitReport:
    def test_null_fit_retains(self, tmp_path):
        fit = fake_fit([0.0] * 3, [1.0] * 3, np.eye(6))
        emit_report(fit, wald_report(fit), [], tmp_path)
        meta, rows = read_commented_csv(tmp_path / "tests.csv")
        assert meta["schema_version"] == "1"
        assert all(float(r["statistic"]) == 0.0 for r in rows)
        assert {r["verdict"] for r in rows} == {"retain"}

    def test_adjusted_column_order(self):
        adjusted = [c for c in TESTS_COLUMNS if c.startswith("p_") and not c.endswith("6dp")][1:4]
        assert adjusted == ["p_holm", "p_hochberg", "p_hommel"]

    def test_lossless_roundtrip(self, tmp_path):
        truth = reference_truth("a", 3)
        fit = fit_em(simulate_dataset(truth, 3), truth.design)
        ell = confidence_ellipse(fit, 2)
        report = wald_report(fit)
        emit_report(fit, report, [ell], tmp_path)
        doc = json.loads((tmp_path / "fit.json").read_text())
        assert doc["schema_version"] == 1
        np.testing.assert_array_equal(doc["alpha"], fit.theta_hat.alpha)
        np.testing.assert_array_equal(doc["beta"], fit.theta_hat.beta)
        np.testing.assert_array_equal(doc["mu_x"], fit.theta_hat.mu_x)
        np.testing.assert_array_equal(doc["loglik_trace"], fit.loglik_trace)
        meta, rows = read_commented_csv(tmp_path / "tests.csv")
        assert [float(r["p_raw"]) for r in rows] == [t.p_raw for t in report.labs]
        assert float(meta["global_statistic"]) == report.q_global
        meta, pts = read_commented_csv(tmp_path / "ellipse_2.csv")
        assert float(meta["center_alpha"]) == ell.center[0]
        got = np.array([[float(r["alpha"]), float(r["beta"])] for r in pts])
        np.testing.assert_array_equal(got, ell.boundary)

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        fit = fake_fit([0.0], [1.0], np.eye(2))
        with pytest.raises(InputError):
            emit_report(fit, None, [], blocker / "sub")


class TestCli:
    def test_report(self, tmp_path, capsys):
        code = main(["report", "--data", DATA, "--design", DESIGN, "--out", str(tmp_path), "--method", "holm"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "holm" in out and "hommel" in out
        assert (tmp_path / "fit.json").exists() and (tmp_path / "ellipse_8.csv").exists()

    def test_fit_and_test(self, tmp_path):
        assert main(["fit", "--data", DATA, "--design", DESIGN, "--out", str(tmp_path)]) == EXIT_OK
        assert main(["test", "--data", DATA, "--design", DESIGN, "--out", str(tmp_path), "--fwer", "0.05"]) == EXIT_OK
        assert main(["ellipse", "--data", DATA, "--design", DESIGN, "--out", str(tmp_path), "--lab", "3"]) == EXIT_OK
        assert (tmp_path / "ellipse_3.csv").exists()

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"data": DATA, "design": DESIGN, "out": str(tmp_path / "o"), "em": {"max_iter": 5000}}))
        assert main(["test", "--config", str(cfg)]) == EXIT_OK

    def test_input_error_exit(self, tmp_path, capsys):
        assert main(["fit", "--data", str(tmp_path / "none.csv"), "--design", DESIGN]) == EXIT_INPUT
        bad = tmp_path / "bad.csv"
        bad.write_text("lab,level,replicate,value\nA,1,1,1\nA,1,1,2\n")
        assert main(["fit", "--data", str(bad), "--design", DESIGN, "--out", str(tmp_path)]) == EXIT_INPUT
        assert "line 3" in capsys.readouterr().err

    def test_nonconvergence_exit(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"em": {"max_iter": 3}}))
        code = main(["fit", "--config", str(cfg), "--data", DATA, "--design", DESIGN, "--out", str(tmp_path)])
        assert code == EXIT_NUMERICAL

    def test_simulate(self, tmp_path, capsys):
        code = main(["simulate", "size", "--replications", "10", "--seed", "3", "--out", str(tmp_path)])
        assert code == EXIT_OK
        first = capsys.readouterr().out
        assert first.startswith("replica_count,level,regime,rate,se,n_effective")
        assert json.loads((tmp_path / "size.json").read_text())["config"]["seed"] == 3
        main(["simulate", "size", "--replications", "10", "--seed", "3"])
        assert capsys.readouterr().out == first

    def test_simulate_power_bad_hypothesis(self):
        assert main(["simulate", "power", "--replications", "2", "--hypothesis", "9"]) == EXIT_INPUT

    def test_bad_method_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["test", "--method", "fdr"])
        assert exc.value.code == 2
