import json
from pathlib import Path

import numpy as np
import pytest

from interdiff import ConfigError
from interdiff.cli import main
from interdiff.config import parse_config

REPO_CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def small_config(tmp_path, name="small.json", paths=400, checks=None, **tweaks):
    doc = {
        "window": [-2.0, 2.0],
        "bounds": [0.5, 4.0],
        "interfaces": [{"x": 0.0, "beta_plus": 1.0, "beta_minus": 1.0}],
        "pieces": [
            {"left": -2.0, "right": 0.0, "D": [1.0], "eta": [1.0]},
            {"left": 0.0, "right": 2.0, "D": [2.0], "eta": [1.0]},
        ],
        "experiment": {
            "name": "small",
            "engine": {"h": 0.05, "t": 0.1, "paths": paths, "seed": 3},
            "estimator": {"probes": [0.5]},
            "solver": {"cells": 160, "dt": 0.001},
            "checks": checks if checks is not None else ["conservation"],
        },
    }
    doc.update(tweaks)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


class TestParseConfig:
    def test_bundled_d_jump_config_parses_and_validates(self):
        spec, plan = parse_config(REPO_CONFIGS / "d_jump.json")
        assert spec.n_interfaces == 1
        assert spec.interfaces[0].lam == pytest.approx(2.0 / 3.0)
        assert plan.name == "d_jump"
        assert len(plan.checks) == 6

    def test_all_bundled_configs_parse(self):
        for name in ("d_jump.json", "jump_eta.json", "symmetric.json"):
            spec, plan = parse_config(REPO_CONFIGS / name)
            assert plan is not None and plan.checks

    def test_missing_pieces_key_named(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "window": [-1, 1], "bounds": [0.5, 2.0],
            "interfaces": []}))
        with pytest.raises(ConfigError, match="pieces"):
            parse_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        cfg = small_config(tmp_path, wildcard=1)
        with pytest.raises(ConfigError, match="wildcard"):
            parse_config(cfg)

    def test_lambda_out_of_range_fails_validation(self, tmp_path):
        doc = json.loads(small_config(tmp_path).read_text())
        doc["interfaces"] = [{"x": 0.0, "lambda": 1.0}]
        path = tmp_path / "lam.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigError, match="lambda"):
            parse_config(path)

    def test_parse_error_reports_position(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"window": [1, 2,]}')
        with pytest.raises(ConfigError, match="line 1"):
            parse_config(path)

    def test_unknown_check_rejected(self, tmp_path):
        cfg = small_config(tmp_path, checks=["no-such-check"])
        with pytest.raises(ConfigError, match="no-such-check"):
            parse_config(cfg)

    def test_epsilons_and_mode_round_trip(self, tmp_path):
        doc = json.loads(small_config(tmp_path).read_text())
        doc["experiment"]["estimator"]["epsilons"] = [0.4, 0.2, 0.1]
        doc["experiment"]["engine"]["mode"] = "exp"
        path = tmp_path / "eps.json"
        path.write_text(json.dumps(doc))
        _, plan = parse_config(path)
        assert plan.estimator.epsilons == (0.4, 0.2, 0.1)
        assert plan.engine.mode == "exp"


class TestCliCommands:
    def test_validate_ok(self, tmp_path, capsys):
        cfg = small_config(tmp_path)
        assert main(["validate", "--config", str(cfg)]) == 0
        assert "no violations" in capsys.readouterr().out

    def test_validate_reports_violations(self, tmp_path, capsys):
        doc = json.loads(small_config(tmp_path).read_text())
        doc["interfaces"] = [{"x": 0.0, "lambda": 1.0}]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        assert main(["validate", "--config", str(path)]) == 1
        assert "lambda" in capsys.readouterr().out

    def test_config_error_exit_code_2(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        assert main(["validate", "--config", str(path)]) == 2

    def test_tabulate_scale(self, tmp_path):
        cfg = small_config(tmp_path)
        out = tmp_path / "out"
        assert main(["tabulate-scale", "--config", str(cfg),
                     "--out", str(out), "--points", "11"]) == 0
        header = (out / "scale.csv").read_text().splitlines()[0]
        assert header == "x,s_prime_left,s_prime_right,m_prime_left,m_prime_right,s"

    def test_simulate_then_localtime_and_ratio(self, tmp_path):
        cfg = small_config(tmp_path)
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(cfg), "--out", str(out),
                     "--trace", "2"]) == 0
        assert (out / "ensemble.csv").exists()
        assert (out / "ensemble.npz").exists()
        assert (out / "traces.csv").exists()
        assert main(["localtime", "--config", str(cfg), "--out", str(out),
                     "--ensemble", str(out / "ensemble.npz"),
                     "--at", "0.0", "--eps", "0.4,0.2,0.1"]) == 0
        body = (out / "localtime.csv").read_text()
        assert body.startswith("x,side,epsilon,notion,value,stderr")
        assert main(["ratio", "--config", str(cfg), "--out", str(out),
                     "--ensemble", str(out / "ensemble.npz"),
                     "--eps", "0.4,0.2,0.1"]) == 0
        ratio_lines = (out / "ratio.csv").read_text().splitlines()
        assert ratio_lines[0] == "x_j,predicted,estimated,half_width"
        assert len(ratio_lines) == 2

    def test_simulate_rerun_is_byte_identical(self, tmp_path):
        cfg = small_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(cfg), "--out", str(out1)])
        main(["simulate", "--config", str(cfg), "--out", str(out2)])
        assert (out1 / "ensemble.csv").read_bytes() == \
            (out2 / "ensemble.csv").read_bytes()

    def test_pde_command(self, tmp_path):
        cfg = small_config(tmp_path)
        out = tmp_path / "pde"
        assert main(["pde", "--config", str(cfg), "--out", str(out),
                     "--t", "0.05", "--cells", "160", "--dt", "0.001",
                     "--init", "delta:0.0"]) == 0
        lines = (out / "pde.csv").read_text().splitlines()
        assert lines[0] == "cell_center,u,p,eta"
        assert lines[-1].startswith("# mass_initial=")

    def test_check_all_pass_exit_zero(self, tmp_path):
        cfg = small_config(tmp_path, checks=["conservation", "duality",
                                             "splitting-probability"])
        out = tmp_path / "chk"
        assert main(["check", "--config", str(cfg), "--out", str(out)]) == 0
        report = (out / "report.csv").read_text().splitlines()
        assert report[0] == "name,predicted,observed,tolerance,passed"
        names = [line.split(",")[0] for line in report[1:]]
        assert names == ["conservation", "duality", "splitting-probability"]

    def test_check_impossible_tolerance_fails_but_completes(self, tmp_path):
        cfg = small_config(tmp_path, checks=[
            {"name": "conservation", "tolerance": 0.0},
            "duality",
        ])
        out = tmp_path / "chk0"
        assert main(["check", "--config", str(cfg), "--out", str(out)]) == 1
        report = (out / "report.csv").read_text().splitlines()
        assert len(report) == 3          # both checks reported despite the failure
        conservation = [l for l in report if l.startswith("conservation")][0]
        assert conservation.endswith("false")

    def test_check_report_lists_each_check_once(self, tmp_path):
        cfg = small_config(tmp_path, checks=[
            "conservation", "duality", "splitting-probability",
            "jump-ratio", "occupation-ratio", "continuity-probe"])
        out = tmp_path / "all"
        main(["check", "--config", str(cfg), "--out", str(out)])
        names = [line.split(",")[0]
                 for line in (out / "report.csv").read_text().splitlines()[1:]]
        assert sorted(names) == names
        assert len(set(names)) == 6

    def test_check_rerun_is_byte_identical(self, tmp_path):
        cfg = small_config(tmp_path, checks=["conservation", "duality",
                                             "jump-ratio"])
        out1, out2 = tmp_path / "c1", tmp_path / "c2"
        main(["check", "--config", str(cfg), "--out", str(out1)])
        main(["check", "--config", str(cfg), "--out", str(out2)])
        for name in ("report.csv", "ensemble.csv", "localtime.csv", "ratio.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_seed_override_changes_simulation(self, tmp_path):
        cfg = small_config(tmp_path)
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        main(["simulate", "--config", str(cfg), "--out", str(out1), "--seed", "1"])
        main(["simulate", "--config", str(cfg), "--out", str(out2), "--seed", "2"])
        assert (out1 / "ensemble.csv").read_bytes() != \
            (out2 / "ensemble.csv").read_bytes()

    def test_threads_flag_keeps_results_identical(self, tmp_path):
        cfg = small_config(tmp_path)
        out1, out2 = tmp_path / "t1", tmp_path / "t4"
        main(["simulate", "--config", str(cfg), "--out", str(out1)])
        main(["simulate", "--config", str(cfg), "--out", str(out2),
              "--threads", "4"])
        assert (out1 / "ensemble.csv").read_bytes() == \
            (out2 / "ensemble.csv").read_bytes()
