import json
from pathlib import Path

import numpy as np
import pytest

from lyapmetric.cli import RunConfig, main
from lyapmetric.errors import LyapmetricError


def _read_report(out_dir):
    return json.loads((Path(out_dir) / "report.json").read_text())


class TestRunConfig:
    def test_round_trip(self):
        cfg = RunConfig(command="analyze", system="scalar-example",
                        radii="0.5,1", samples=3, out="/tmp/x", seed=5)
        again = RunConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_rejects_bad_values(self):
        with pytest.raises(LyapmetricError):
            RunConfig(command="analyze", system="s", tol=-1.0)
        with pytest.raises(LyapmetricError):
            RunConfig(command="analyze", system="s", samples=0)

    def test_grid_forms(self):
        cfg = RunConfig(command="x", system="s", grid="-2,-1,0.5")
        assert cfg.grid_points(1).shape == (3, 1)
        cfg = RunConfig(command="x", system="s", grid="0:1:5")
        assert cfg.grid_points(1).shape == (5, 1)
        cfg = RunConfig(command="x", system="s", grid="1,0;0,1")
        assert cfg.grid_points(2).shape == (2, 2)

    def test_q_forms(self):
        cfg = RunConfig(command="x", system="s", q="I")
        assert np.array_equal(cfg.q_matrix(2), np.eye(2))
        cfg = RunConfig(command="x", system="s", q="2")
        assert np.array_equal(cfg.q_matrix(2), 2 * np.eye(2))
        cfg = RunConfig(command="x", system="s", q="2,0;0,1")
        assert np.array_equal(cfg.q_matrix(2), np.diag([2.0, 1.0]))


class TestAnalyze:
    def test_scalar_example_passes(self, tmp_path):
        code = main(["analyze", "--system", "scalar-example",
                     "--out", str(tmp_path), "--samples", "2",
                     "--horizon", "12"])
        assert code == 0
        report = _read_report(tmp_path)
        assert report["schema"] == 1
        assert report["verdict"] == "pass"
        assert report["local"]["lambda"] == pytest.approx(1.0, rel=0.05)
        assert (tmp_path / "envelopes.csv").exists()

    def test_unstable_linear_exits_two(self, tmp_path):
        payload = tmp_path / "unstable.json"
        payload.write_text(json.dumps({"A": [[1.0]]}))
        code = main(["analyze", "--system", f"linear:{payload}",
                     "--out", str(tmp_path / "r"), "--samples", "2"])
        assert code == 2
        report = _read_report(tmp_path / "r")
        assert report["verdict"] == "falsified"
        assert report["witness"] is not None

    def test_stable_linear_rate_near_abscissa(self, tmp_path):
        payload = tmp_path / "stable.json"
        payload.write_text(json.dumps({"A": [[0.0, 1.0], [-1.0, -1.0]]}))
        code = main(["analyze", "--system", f"linear:{payload}",
                     "--out", str(tmp_path / "r"), "--samples", "4",
                     "--horizon", "20"])
        assert code == 0
        report = _read_report(tmp_path / "r")
        assert report["local"]["lambda"] == pytest.approx(0.5, rel=0.10)

    def test_unknown_system_is_operational_error(self, tmp_path):
        code = main(["analyze", "--system", "missing-system",
                     "--out", str(tmp_path)])
        assert code == 1


class TestMetricCommand:
    def test_origin_variant_writes_dump(self, tmp_path):
        payload = tmp_path / "stable.json"
        payload.write_text(json.dumps({"A": [[0.0, 1.0], [-1.0, -1.0]]}))
        code = main(["metric", "--system", f"linear:{payload}",
                     "--variant", "origin", "--out", str(tmp_path / "r"),
                     "--samples", "2", "--grid", "1,0;0,1;0.5,0.5"])
        assert code == 0
        report = _read_report(tmp_path / "r")
        assert report["residuals"]["verdict"] == "pass"
        header = (tmp_path / "r" / "metric.csv").read_text().splitlines()[0]
        assert header == "e_1,e_2,P_11,P_12,P_21,P_22"

    def test_rescaled_variant(self, tmp_path):
        code = main(["metric", "--system", "scalar-example",
                     "--variant", "rescaled", "--out", str(tmp_path),
                     "--samples", "2", "--grid=-1,0.5,1"])
        assert code == 0
        report = _read_report(tmp_path)
        assert report["residuals"]["max_eigenvalue"] <= 1e-4
        assert min(report["bounds"]["empirical_lower"]) >= 0.5 - 1e-6


class TestCertify:
    def test_linear_origin_passes(self, tmp_path):
        payload = tmp_path / "stable.json"
        payload.write_text(json.dumps({"A": [[0.0, 1.0], [-1.0, -1.0]]}))
        code = main(["certify", "--system", f"linear:{payload}",
                     "--variant", "origin", "--out", str(tmp_path / "r"),
                     "--samples", "2", "--grid", "1,0;0,1;0.7,0.7"])
        assert code == 0
        report = _read_report(tmp_path / "r")
        assert report["verdict"] == "pass"
        assert report["flagged_fraction"] == 0.0
        # V equals the closed form sqrt(e' P e) for the constant metric
        from lyapmetric.catalog import linear_baseline

        base = linear_baseline(np.array([[0.0, 1.0], [-1.0, -1.0]]))
        for row in report["points"]:
            e = np.array(row["point"])
            assert row["V"] == pytest.approx(
                float(np.sqrt(e @ base.p @ e)), abs=1e-8)

    def test_decrease_violation_fails_certificate(self, tmp_path):
        # stable at the origin, divergent beyond |e| ~ 1: the constant
        # origin metric is tight for the linearization, so it certifies
        # only points where the cubic softening is below the tolerance
        spec = tmp_path / "local_only.txt"
        spec.write_text("dim = 1\nF1 = -x1 + 0.9 * x1^3\n")
        code = main(["certify", "--system", str(spec), "--variant", "origin",
                     "--out", str(tmp_path / "r"), "--samples", "2",
                     "--grid", "0.02,1.2"])
        assert code == 2
        report = _read_report(tmp_path / "r")
        assert report["verdict"] == "fail"
        verdicts = {tuple(r["point"]): r["ok"] for r in report["points"]}
        assert verdicts[(0.02,)] is True
        assert verdicts[(1.2,)] is False
        # the large point genuinely grows: its flow derivative is positive
        rows = {tuple(r["point"]): r for r in report["points"]}
        assert rows[(1.2,)]["dini"] > 0.0

    def test_transverse_slow_regime_falsified(self, tmp_path):
        code = main(["certify", "--system", "transverse-counterexample",
                     "--variant", "transverse", "--out", str(tmp_path),
                     "--samples", "2", "--horizon", "6",
                     "--radii", "0.5,1", "--grid", "0.5,1"])
        assert code == 2
        report = _read_report(tmp_path)
        assert report["verdict"] == "falsified"
        assert report["stage"] == "linearized-decay"

    def test_transverse_fast_regime_passes(self, tmp_path):
        spec = tmp_path / "fast.txt"
        spec.write_text("dim = 2\ne_dim = 1\nlam = 2.0\nmu_x = 1.0\n"
                        "F1 = -(lam + x2 * sin(x2)) * x1\nG1 = mu_x * x2\n")
        code = main(["certify", "--system", str(spec),
                     "--variant", "transverse", "--out", str(tmp_path / "r"),
                     "--samples", "2", "--horizon", "6",
                     "--radii", "0.5,1", "--grid", "0.5,1"])
        assert code == 0
        report = _read_report(tmp_path / "r")
        assert report["residuals"]["verdict"] == "pass"


class TestStabilize:
    def test_scalar_plant(self, tmp_path):
        spec = tmp_path / "plant.txt"
        spec.write_text("dim = 1\nF1 = x1\ng1 = 1\n")
        code = main(["stabilize", "--system", str(spec),
                     "--lambda-gain", "3", "--out", str(tmp_path / "r"),
                     "--samples", "2", "--grid=-2,-1,1,2"])
        assert code == 0
        report = _read_report(tmp_path / "r")
        assert report["verdict"] == "pass"
        assert report["controller"]["killing_residual_sup"] <= 1e-8
        assert report["controller"]["integrability_residual_sup"] <= 1e-8
        text = (tmp_path / "r" / "closed_loop.txt").read_text()
        from lyapmetric import parse_system

        closed = parse_system(text)
        assert closed.f(np.array([1.0]))[0] == pytest.approx(-2.0, abs=1e-12)

    def test_insufficient_gain_exits_two(self, tmp_path):
        spec = tmp_path / "plant.txt"
        spec.write_text("dim = 1\nF1 = x1\ng1 = 1\n")
        code = main(["stabilize", "--system", str(spec),
                     "--lambda-gain", "1", "--out", str(tmp_path / "r"),
                     "--samples", "2", "--grid=-1,1"])
        assert code == 2
        report = _read_report(tmp_path / "r")
        assert "condition 1" in report["reason"]


class TestDeterminism:
    def test_reports_byte_identical_under_fixed_seed(self, tmp_path):
        args = ["analyze", "--system", "scalar-example",
                "--out", str(tmp_path), "--samples", "2", "--seed", "11"]
        assert main(args) == 0
        first = (tmp_path / "report.json").read_bytes()
        assert main(args) == 0
        second = (tmp_path / "report.json").read_bytes()
        assert first == second

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LYAPMETRIC_SAMPLES", "3")
        from lyapmetric.cli import build_parser, config_from_args

        args = build_parser().parse_args(
            ["analyze", "--system", "scalar-example", "--out", str(tmp_path)])
        assert config_from_args(args).samples == 3

    def test_thread_cap_does_not_change_results(self, tmp_path):
        payload = tmp_path / "stable.json"
        payload.write_text(json.dumps({"A": [[0.0, 1.0], [-1.0, -1.0]]}))
        reports = []
        for threads in ("1", "2"):
            out = tmp_path / f"t{threads}"
            code = main(["certify", "--system", f"linear:{payload}",
                         "--variant", "origin", "--out", str(out),
                         "--samples", "2", "--grid", "1,0;0,1;0.7,0.7",
                         "--threads", threads])
            assert code == 0
            report = _read_report(out)
            del report["config"]  # differs in `threads` and `out` only
            reports.append(report)
        assert reports[0] == reports[1]
