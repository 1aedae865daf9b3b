import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustbandit import io
from robustbandit.cli import EXIT_IO, EXIT_OK, EXIT_VALIDATION, OUTPUT_ENV, main
from robustbandit.core import LinearPolicy, LoggedDataset, OverlapViolation
from robustbandit.sim import LINEAR_TABLE, generate_dataset, make_linear_env, make_testsets

TWO_POINT_VALUE = 0.28020537383859023


def write_csv(path, rows, header="x1,action,reward,propensity"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return str(path)


@pytest.fixture
def out(tmp_path, monkeypatch):
    d = tmp_path / "out"
    monkeypatch.setenv(OUTPUT_ENV, str(d))
    return d


class TestIO:
    def test_dataset_round_trip(self, tmp_path):
        d = generate_dataset(make_linear_env(), LINEAR_TABLE, 300, 1)
        io.write_dataset(d, tmp_path / "d.csv")
        e = io.read_dataset(tmp_path / "d.csv", d.num_actions, d.reward_bound)
        for f in ("contexts", "actions", "rewards", "propensities"):
            assert np.array_equal(getattr(d, f), getattr(e, f))

    @given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.integers(1, 3), st.floats(0, 1),
                              st.floats(1e-3, 1)), min_size=1, max_size=20))
    @settings(max_examples=30, deadline=None)
    def test_round_trip_property(self, tmp_path_factory, rows):
        x, a, y, p = map(np.array, zip(*rows))
        d = LoggedDataset(x, a, y, p, 3, 1.0)
        path = tmp_path_factory.mktemp("rt") / "d.csv"
        io.write_dataset(d, path)
        e = io.read_dataset(path, 3, 1.0)
        assert np.array_equal(d.contexts, e.contexts) and np.array_equal(d.rewards, e.rewards)

    def test_parse_error_line(self, tmp_path):
        p = write_csv(tmp_path / "b.csv", ["0.1,1,0.5,1", "0.2,1,oops,1"])
        with pytest.raises(io.ParseError) as err:
            io.read_dataset(p)
        assert err.value.line == 3

    def test_field_count(self, tmp_path):
        with pytest.raises(io.ParseError, match="line 2"):
            io.read_dataset(write_csv(tmp_path / "b.csv", ["0.1,1,0.5"]))

    def test_bad_header(self, tmp_path):
        with pytest.raises(io.ParseError, match="line 1"):
            io.read_dataset(write_csv(tmp_path / "b.csv", ["1,1,1,1"], header="a,b,c,d"))

    def test_validation_names_line(self, tmp_path):
        p = write_csv(tmp_path / "b.csv", ["0.1,1,0.5,1", "", "0.2,1,0.5,0.01"])
        with pytest.raises(OverlapViolation, match="line 4"):
            io.read_dataset(p, eta=0.05)

    def test_theta_round_trip(self, tmp_path):
        pol = LinearPolicy(np.random.default_rng(0).normal(size=(6, 3)))
        io.write_theta(pol, tmp_path / "t.csv")
        assert np.array_equal(io.read_theta(tmp_path / "t.csv").theta, pol.theta)

    def test_full_info(self, tmp_path):
        ts = make_testsets(make_linear_env(), 1, 10, 0)[0]
        io.write_full_info(ts, tmp_path / "f.csv")
        rows = list(csv.reader(open(tmp_path / "f.csv")))
        assert rows[0] == ["x1", "x2", "x3", "x4", "x5", "y1", "y2", "y3"] and len(rows) == 11

    def test_json_nan(self):
        assert json.loads(io.dumps({"a": float("nan"), "b": np.float64(1.5), "c": np.arange(2)})) == \
            {"a": None, "b": 1.5, "c": [0, 1]}


class TestCli:
    def test_constant_rewards(self, tmp_path, out):
        p = write_csv(tmp_path / "c.csv", ["0.1,1,0.7,0.5", "0.2,2,0.7,0.5", "0.3,1,0.7,0.5"])
        assert main(["evaluate", "--data", p, "--policy", "constant:1", "--delta", "0.37"]) == EXIT_OK
        rep = json.loads((out / "evaluate.json").read_text())
        assert rep["value"] == 0.7 and rep["boundary"] is True

    def test_vanishing_ball(self, tmp_path, out):
        rows = [f"0,1,{v},0.5" for v in (0.1, 0.4, 0.9, 0.3)]
        p = write_csv(tmp_path / "v.csv", rows)
        assert main(["evaluate", "--data", p, "--policy", "constant:1", "--delta", "1e-8"]) == EXIT_OK
        assert json.loads((out / "evaluate.json").read_text())["value"] == pytest.approx(0.425, abs=1e-3)

    def test_two_point(self, tmp_path, out):
        p = write_csv(tmp_path / "t.csv", ["0,1,0,1", "0,1,1,1"])
        assert main(["evaluate", "--data", p, "--policy", "constant:1", "--delta", "0.1"]) == EXIT_OK
        assert json.loads((out / "evaluate.json").read_text())["value"] == pytest.approx(TWO_POINT_VALUE, abs=1e-4)
        assert main(["evaluate", "--data", p, "--policy", "constant:1", "--fdiv", "2"]) == EXIT_OK
        rep = json.loads((out / "evaluate.json").read_text())
        assert rep["divergence"].startswith("cressie-read") and rep["variance"] is None

    def test_exit_codes(self, tmp_path, out, capsys):
        bad = write_csv(tmp_path / "b.csv", ["0,1,zz,1"])
        assert main(["evaluate", "--data", bad, "--policy", "constant:1"]) == EXIT_IO
        assert "line 2" in capsys.readouterr().err
        assert main(["evaluate", "--data", str(tmp_path / "missing.csv"), "--policy", "constant:1"]) == EXIT_IO
        invalid = write_csv(tmp_path / "i.csv", ["0,1,0.5,1.5"])
        assert main(["evaluate", "--data", invalid, "--policy", "constant:1"]) == EXIT_VALIDATION
        assert main(["evaluate", "--data", invalid.replace("i.csv", "t.csv"), "--policy", "bayes"]) == EXIT_IO

    def test_oracle_needs_env(self, tmp_path, out):
        p = write_csv(tmp_path / "t.csv", ["0,1,0,1"])
        assert main(["evaluate", "--data", p, "--policy", "bayes"]) == EXIT_VALIDATION

    def test_learn_and_boundary_maps(self, out):
        args = ["learn", "--env", "linear", "--n", "5000", "--delta", "0.2", "--resolution", "21"]
        assert main(args) == EXIT_OK
        assert main(args + ["--nonrobust"]) == EXIT_OK
        for stem in ("dro", "lin"):
            rows = list(csv.reader(open(out / f"boundary_{stem}.csv")))
            assert rows[0] == ["x1", "x2", "action"] and len(rows) == 21 * 21 + 1
            assert io.read_theta(out / f"theta_{stem}.csv").theta.shape == (6, 3)
        assert main(["evaluate", "--env", "linear", "--n", "2000", "--policy", str(out / "theta_dro.csv")]) == EXIT_OK

    def test_learn_single_action(self, tmp_path, out):
        p = write_csv(tmp_path / "s.csv", [f"{x},1,{x * x},1" for x in np.linspace(-1, 1, 30)])
        assert main(["learn", "--data", p, "--epochs", "20"]) == EXIT_OK
        rows = list(csv.reader(open(out / "theta_dro.csv")))
        assert rows[0] == ["a1"] and all(len(r) == 1 for r in rows)

    def test_boundary(self, out):
        assert main(["boundary", "--policy", "bayes", "--resolution", "5", "--out", "b.csv"]) == EXIT_OK
        rows = list(csv.reader(open(out / "b.csv")))[1:]
        assert len(rows) == 25
        cell = {(float(r[0]), float(r[1])): int(r[2]) for r in rows}
        assert cell[(1.0, 0.0)] == 1

    def test_boundary_equal_sigma(self, out):
        sig = ["--sigmas", "0.5,0.5,0.5", "--resolution", "15"]
        assert main(["boundary", "--policy", "bayes", "--out", "a.csv"] + sig) == EXIT_OK
        assert main(["boundary", "--policy", "bayes-dro", "--out", "b.csv"] + sig) == EXIT_OK
        assert (out / "a.csv").read_text() == (out / "b.csv").read_text()
        assert main(["boundary", "--sigmas", "1,2"]) == EXIT_VALIDATION

    def test_simulate(self, out):
        assert main(["simulate", "--env", "nonlinear", "--n", "100", "--full-info", "20"]) == EXIT_OK
        d = io.read_dataset(out / "dataset.csv", eta=0.25)
        assert d.n == 100 and (out / "full_info.csv").exists()

    def test_output_dir_flag(self, tmp_path):
        target = tmp_path / "elsewhere"
        assert main(["--output-dir", str(target), "simulate", "--n", "10"]) == EXIT_OK
        assert (target / "dataset.csv").exists()

    def test_experiment_config(self, tmp_path, out):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n_grid": [300], "replications": 2, "m_sets": 3, "n_prime": 300,
                                   "epochs": 30}))
        assert main(["experiment", "--config", str(cfg)]) == EXIT_OK
        rep = json.loads((out / "experiment_comparison.json").read_text())
        assert len(rep["records"]) == 4 and rep["config"]["replications"] == 2
        assert (out / "experiment_records.csv").exists()
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["experiment", "--config", str(cfg)]) == EXIT_VALIDATION
        cfg.write_text("{not json")
        assert main(["experiment", "--config", str(cfg)]) == EXIT_IO

    def test_full_flag(self, tmp_path, out, monkeypatch):
        seen = {}
        import robustbandit.cli as cli

        def fake(cfg, workers=1):
            seen["reps"] = cfg.replications
            from robustbandit.experiments import RunReport
            return RunReport(cfg.describe())

        monkeypatch.setattr(cli, "run_comparison", fake)
        main(["experiment", "--full"])
        assert seen["reps"] == 100
        main(["experiment"])
        assert seen["reps"] == 30

    def test_help(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["--help"])
        assert e.value.code == 0
        assert "evaluate" in capsys.readouterr().out
