import json
import math

import numpy as np
import pytest

from mmjsq import bundled_model_path, load_bundled, load_model_file
from mmjsq.cli import main
from mmjsq.errors import ParseError
from mmjsq.modelfile import list_bundled
from mmjsq.output import dumps, format_float


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestModelFiles:
    def test_bundled_names(self):
        assert set(list_bundled()) >= {"jsq3_ssc", "jsq3_nossc", "mm1"}

    def test_load_bundled_scales_rho(self):
        parsed = load_bundled("jsq3_ssc")
        assert parsed.rho == 0.95
        np.testing.assert_allclose(parsed.model.lam, [2.85, 5.7, 8.55], atol=1e-12)
        np.testing.assert_array_equal(parsed.base_model.lam, [3.0, 6.0, 9.0])

    def test_overrides(self):
        parsed = load_bundled("jsq3_ssc", rho=0.5, alpha_scale=1.0)
        np.testing.assert_allclose(parsed.model.chain.exit_rates, 1.0)
        np.testing.assert_allclose(parsed.model.lam, [1.5, 3.0, 4.5], atol=1e-12)

    def test_parse_errors(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ParseError):
            load_model_file(bad)
        missing = tmp_path / "missing.json"
        missing.write_text('{"n": 1}')
        with pytest.raises(ParseError):
            load_model_file(missing)
        unknown = tmp_path / "unknown.json"
        unknown.write_text(
            '{"n": 1, "alpha": [[0]], "lambda_base": [1], "mu": [[2]], "typo": 3}'
        )
        with pytest.raises(ParseError):
            load_model_file(unknown)


class TestFloatFormat:
    @pytest.mark.parametrize(
        "x",
        [1.0 / 3.0, 5.0 / 12.0, 1e-300, 6.02e23, -0.0, 123456.789012345678, 2**-52],
    )
    def test_round_trip(self, x):
        assert float(format_float(x)) == x

    def test_infinity_round_trip(self):
        assert json.loads(format_float(math.inf)) == math.inf

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            format_float(math.nan)

    def test_dumps_parses_back(self):
        obj = {
            "a": [1, 2.5, None, True],
            "b": {"nested": np.array([0.1, 0.2])},
            "c": "text",
        }
        parsed = json.loads(dumps(obj))
        assert parsed["a"] == [1, 2.5, None, True]
        assert parsed["b"]["nested"] == [0.1, 0.2]


class TestAnalyze:
    def test_ssc_setting_report(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        rc = run_cli("analyze", bundled_model_path("jsq3_ssc"), "-o", out)
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["prediction"]["k_star"] == pytest.approx(35.0 / 6.0, rel=1e-12)
        assert report["prediction"]["limit_mean_per_server"] == pytest.approx(
            71.0 / 108.0, rel=1e-12
        )
        assert report["ssc"]["satisfied"] is True
        assert report["reference"]["matches"] is True
        assert report["limit_laplace"]["values"][1] == pytest.approx(
            108.0 / 179.0, rel=1e-12
        )

    def test_nossc_setting_flags(self, tmp_path):
        out = tmp_path / "report.json"
        assert run_cli("analyze", bundled_model_path("jsq3_nossc"), "-o", out) == 0
        report = json.loads(out.read_text())
        assert report["ssc"]["satisfied"] is False
        assert report["ssc"]["margins"][0] < 0
        # published constant disagrees with the first-principles computation
        assert report["reference"]["matches"] is False
        assert report["prediction"]["k_star"] == pytest.approx(
            301.0 / 27.0 / 0.1, rel=1e-12
        )

    def test_mm1_report_stdout(self, capsys):
        assert run_cli("analyze", bundled_model_path("mm1")) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["prediction"]["k_star"] == pytest.approx(0.0, abs=1e-14)
        assert report["prediction"]["limit_mean_per_server"] == pytest.approx(1.0)

    def test_exit_code_on_bad_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert run_cli("analyze", bad) == 2
        assert "ParseError" in capsys.readouterr().err

    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        run_cli("analyze", bundled_model_path("jsq3_ssc"), "-o", a)
        run_cli("analyze", bundled_model_path("jsq3_ssc"), "-o", b)
        assert a.read_bytes() == b.read_bytes()


class TestSimulateCommand:
    def test_outputs_and_determinism(self, tmp_path):
        args = (
            "simulate", bundled_model_path("mm1"),
            "--arrivals", "2e4", "--runs", "3", "--seed", "42", "--pmf-cap", "64",
        )
        assert run_cli(*args, "-o", tmp_path / "one") == 0
        assert run_cli(*args, "-o", tmp_path / "two") == 0
        agg1 = (tmp_path / "one" / "aggregate.json").read_bytes()
        agg2 = (tmp_path / "two" / "aggregate.json").read_bytes()
        assert agg1 == agg2
        csv1 = (tmp_path / "one" / "runs.csv").read_text()
        assert csv1 == (tmp_path / "two" / "runs.csv").read_text()
        lines = csv1.strip().splitlines()
        assert len(lines) == 4  # header + 3 runs
        assert lines[0].startswith("run_index,seed,total_sim_time")
        report = json.loads(agg1)
        assert report["config"]["rng"].startswith("xoshiro256++")

    def test_unstable_load_rejected(self, tmp_path, capsys):
        rc = run_cli(
            "simulate", bundled_model_path("mm1"), "--rho", "1.0",
            "--arrivals", "2e4", "--runs", "2", "-o", tmp_path / "x",
        )
        assert rc == 2
        assert "UnstableModel" in capsys.readouterr().err


class TestSweepCommand:
    def test_load_sweep_files(self, tmp_path):
        rc = run_cli(
            "sweep", bundled_model_path("mm1"), "--kind", "load",
            "--grid", "0.5", "0.7", "--arrivals", "2e4", "--runs", "2",
            "--seed", "9", "-o", tmp_path,
        )
        assert rc == 0
        csv_lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
        assert len(csv_lines) == 3
        header = csv_lines[0].split(",")
        assert header[0] == "grid_value"
        assert "scaled_mean_q_0" in header
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert [row["rho"] for row in summary["rows"]] == [
            pytest.approx(0.5),
            pytest.approx(0.7),
        ]


class TestVerifyCommand:
    def test_single_quick_check(self, capsys):
        rc = run_cli("verify", "--suite", "quick", "--only", "kstar_invariance")
        out = capsys.readouterr().out
        assert rc == 0
        assert "[PASS] kstar_invariance" in out

    def test_unknown_check_rejected(self):
        with pytest.raises(ValueError):
            run_cli("verify", "--only", "definitely_not_a_check")
