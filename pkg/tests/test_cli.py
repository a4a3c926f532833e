import io
import math

import numpy as np
import pytest

from ehopt import cli
from ehopt.cli import (
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    EXIT_MISMATCH,
    EXIT_OK,
    SUMMARY_COLUMNS,
    load_experiment,
    main,
    midway_lambda,
    parse_grid,
    read_summary,
)
from ehopt.params import ConfigError

FAST = ["--set", "run.horizon=2000", "--set", "run.warmup=100"]
TINY_MDP = ["--set", "q_max=4", "--set", "n_q=6", "--set", "n_e=5", "--set", "n_h=2",
            "--set", "n_p=2", "--set", "N_E=2", "--set", "mdp.tol=1e-9"]


def write_ini(tmp_path, body, name="exp.ini"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


def run(args, tmp_path):
    return main(list(args) + ["--out", str(tmp_path)])


BASIC = """
[meta]
id = basic

[system]
tau = 0.1
lambda_bar = 1.82
alpha_bar = 10
N_E = 600
N = 1

[run]
policies = closed_form, greedy
horizon = 3000
seeds = 2
"""


class TestConfig:
    def test_presets_load(self):
        for name in ("paper_figures", "paper_text", "fig2", "fig5", "fig6", "fig7", "fig8",
                     "fig9"):
            exp = load_experiment(name)
            assert exp.config_id == name

    def test_paper_text_step(self):
        assert load_experiment("paper_text").system().tau == 0.05

    def test_override_applied_before_validation(self, tmp_path):
        path = write_ini(tmp_path, BASIC)
        exp = load_experiment(path, ["lambda_bar=0.5", "run.seeds=3"])
        assert exp.system().lambda_bar == 0.5
        assert exp.seeds() == [0, 1, 2]
        with pytest.raises(ConfigError):
            load_experiment(path, ["tau=-1"])

    @pytest.mark.parametrize("item", ["nokey=1", "system.nokey=1", "q0=1", "horizon",
                                      "run.horizon=abc", "N=1.5"])
    def test_bad_overrides(self, tmp_path, item):
        with pytest.raises(ConfigError):
            load_experiment(write_ini(tmp_path, BASIC), [item])

    def test_unknown_key_in_file(self, tmp_path):
        path = write_ini(tmp_path, BASIC.replace("N = 1", "N = 1\nbogus = 3"))
        with pytest.raises(ConfigError, match="bogus"):
            load_experiment(path)

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError, match="extra"):
            load_experiment(write_ini(tmp_path, BASIC + "\n[extra]\na = 1\n"))

    def test_seed_flag(self, tmp_path):
        exp = load_experiment(write_ini(tmp_path, BASIC), seed=40)
        assert exp.seeds() == [40, 41]

    def test_parse_grid(self):
        np.testing.assert_allclose(parse_grid("1.8:1.84:5"), [1.8, 1.81, 1.82, 1.83, 1.84])
        assert parse_grid("1, 2,6") == [1.0, 2.0, 6.0]
        assert parse_grid("1:2:0") == []
        with pytest.raises(ConfigError):
            parse_grid("1:x:3")

    def test_midway_rule(self):
        from scipy.special import exp1
        lam = midway_lambda(10.0)
        assert lam == pytest.approx(0.5 * (exp1(0.1) + 2.229941858284879), rel=1e-10)


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert run(["simulate", "--config", str(tmp_path / "none.ini")], tmp_path) == EXIT_CONFIG

    def test_unknown_command(self, tmp_path):
        assert run(["launch", "--config", "fig7"], tmp_path) == EXIT_CONFIG

    def test_parse_error_reports_field(self, tmp_path, capsys):
        path = write_ini(tmp_path, BASIC.replace("horizon = 3000", "horizon = lots"))
        assert run(["simulate", "--config", path], tmp_path) == EXIT_CONFIG
        assert "[run] horizon" in capsys.readouterr().err

    def test_infeasible(self, tmp_path, capsys):
        path = write_ini(tmp_path, BASIC)
        code = run(["simulate", "--config", path, "--set", "lambda_bar=2.4"], tmp_path)
        assert code == EXIT_INFEASIBLE
        assert "exp(1/x) E1(1/x)" in capsys.readouterr().err

    def test_empty_sweep_grid(self, tmp_path):
        path = write_ini(tmp_path, BASIC + "\n[sweep]\naxis = lambda_bar\nvalues = 1:2:0\n")
        assert run(["sweep", "--config", path], tmp_path) == EXIT_CONFIG

    def test_sweep_needs_axis(self, tmp_path):
        assert run(["sweep", "--config", write_ini(tmp_path, BASIC)], tmp_path) == EXIT_CONFIG

    def test_compare_without_table(self, tmp_path):
        code = run(["compare", "--config", write_ini(tmp_path, BASIC)] + TINY_MDP, tmp_path)
        assert code == EXIT_MISMATCH


class TestSimulate:
    def test_summary_rows(self, tmp_path):
        path = write_ini(tmp_path, BASIC)
        assert run(["simulate", "--config", path], tmp_path) == EXIT_OK
        rows = read_summary(str(tmp_path / "summary_basic.csv"))
        assert len(rows) == 4
        assert {r["policy"] for r in rows} == {"closed_form", "greedy"}
        for r in rows:
            assert set(SUMMARY_COLUMNS) <= set(r)
            assert r["seed"] in (0.0, 1.0)
            assert r["config_id"] == "basic"
            assert r["avg_delay_s"] * r["lambda_bar"] == pytest.approx(r["avg_queue"])
            assert r["stability_verdict"] in ("plateau", "diverging")

    def test_header_order(self, tmp_path):
        run(["simulate", "--config", write_ini(tmp_path, BASIC)], tmp_path)
        header = (tmp_path / "summary_basic.csv").read_text().splitlines()[0].split(",")
        assert header[:len(SUMMARY_COLUMNS)] == SUMMARY_COLUMNS

    def test_no_arrivals(self, tmp_path):
        path = write_ini(tmp_path, BASIC)
        assert run(["simulate", "--config", path, "--set", "lambda_bar=0"], tmp_path) == 0
        for r in read_summary(str(tmp_path / "summary_basic.csv")):
            assert r["avg_delay_s"] == 0.0

    def test_four_policies_from_preset(self, tmp_path):
        code = run(["simulate", "--config", "fig7", "--set", "run.seeds=1"] + FAST, tmp_path)
        assert code == EXIT_OK
        rows = read_summary(str(tmp_path / "summary_fig7.csv"))
        assert [r["policy"] for r in rows] == ["closed_form", "greedy", "csi_wf", "qwwf"]
        assert all(r["lambda_bar"] == 1.8 for r in rows)

    def test_trace_written(self, tmp_path):
        path = write_ini(tmp_path, BASIC)
        run(["simulate", "--config", path, "--set", "run.trace=yes", "--set", "seeds=1",
             "--set", "policies=greedy"], tmp_path)
        lines = (tmp_path / "trace_basic_0_greedy_0.csv").read_text().splitlines()
        assert lines[0] == "slot,h2,Q,E,p,lambda,alpha"
        assert len(lines) == 3001

    def test_parallel_matches_serial(self, tmp_path):
        path = write_ini(tmp_path, BASIC)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", path, "--out", str(a)]) == 0
        assert main(["simulate", "--config", path, "--out", str(b), "--jobs", "2"]) == 0
        assert (a / "summary_basic.csv").read_text() == (b / "summary_basic.csv").read_text()


class TestSweep:
    def test_cardinality(self, tmp_path):
        code = run(["sweep", "--config", "fig7", "--set", "horizon=400",
                    "--set", "warmup=50", "--set", "checkpoints=2"], tmp_path)
        assert code == EXIT_OK
        rows = read_summary(str(tmp_path / "sweep_fig7.csv"))
        assert len(rows) == 200
        assert len({(r["point"], r["policy"], r["seed"]) for r in rows}) == 200
        np.testing.assert_allclose(sorted({r["lambda_bar"] for r in rows}),
                                   [1.8, 1.81, 1.82, 1.83, 1.84])

    def test_aggregation_columns(self, tmp_path):
        path = write_ini(tmp_path, BASIC + "\n[sweep]\naxis = lambda_bar\nvalues = 1.0, 1.5\n")
        run(["sweep", "--config", path], tmp_path)
        rows = read_summary(str(tmp_path / "sweep_basic.csv"))
        for r in rows:
            same = [s["avg_delay_s"] for s in rows
                    if s["point"] == r["point"] and s["policy"] == r["policy"]]
            assert r["delay_mean"] == pytest.approx(np.mean(same))
            se = np.std(same, ddof=1) / math.sqrt(len(same))
            assert r["delay_stderr"] == pytest.approx(se)

    def test_single_point_equals_simulate(self, tmp_path):
        path = write_ini(tmp_path, BASIC + "\n[sweep]\naxis = lambda_bar\nvalues = 1.82\n")
        run(["simulate", "--config", path], tmp_path)
        run(["sweep", "--config", path], tmp_path)
        a = read_summary(str(tmp_path / "summary_basic.csv"))
        b = read_summary(str(tmp_path / "sweep_basic.csv"))
        assert a == b

    def test_alpha_sweep_with_midway_rule(self, tmp_path):
        exp = load_experiment("fig6")
        pts = cli.grid_points(exp)
        assert [p.alpha_bar for p in pts] == [1.0, 2.0, 3.0, 6.0, 10.0]
        for p in pts:
            assert p.lambda_bar == pytest.approx(midway_lambda(p.alpha_bar))
            assert p.N_E == pytest.approx(16 * p.alpha_bar * p.tau)


class TestRegimes:
    def test_fig5_report(self, tmp_path):
        out = io.StringIO()
        exp = load_experiment("fig5", out_dir=str(tmp_path))
        path = cli.cmd_regimes(exp, out)
        text = out.getvalue()
        # E1(0.1) = 1.8229 puts lambda_bar = 1.8 just inside the small-arrival side
        assert "regime=SmallArrivalEnergySufficient" in text
        row = read_summary(path)[0]
        assert row["small_arrival_bound"] == pytest.approx(1.8229239584193906, rel=1e-12)
        assert row["existence_bound"] == pytest.approx(2.229941858284879, rel=1e-11)
        assert row["e_th"] > 0 and row["rate_margin"] > 0

    def test_large_arrival_point(self, tmp_path):
        code = run(["regimes", "--config", "fig5", "--set", "lambda_bar=1.84"], tmp_path)
        assert code == EXIT_OK
        row = read_summary(str(tmp_path / "regimes_fig5.csv"))[0]
        assert row["regime"] == "LargeArrivalEnergySufficient"
        assert row["stable"] == "True"

    def test_infeasible_is_reported_not_fatal(self, tmp_path):
        code = run(["regimes", "--config", "fig5", "--set", "lambda_bar=2.4"], tmp_path)
        assert code == EXIT_OK
        row = read_summary(str(tmp_path / "regimes_fig5.csv"))[0]
        assert row["regime"] == "Infeasible"
        assert "exp(1/x) E1(1/x)" in row["note"]

    def test_storage_failure(self, tmp_path):
        code = run(["regimes", "--config", "fig5", "--set", "lambda_bar=1.84",
                    "--set", "N_E=1"], tmp_path)
        assert code == EXIT_OK
        row = read_summary(str(tmp_path / "regimes_fig5.csv"))[0]
        assert row["stable"] == "False"
        assert row["storage_margin"] < 0
        assert "N_E < N e*" in row["note"]

    def test_sweep_axis_gives_one_line_per_point(self, tmp_path):
        out = io.StringIO()
        exp = load_experiment("fig8", out_dir=str(tmp_path))
        cli.cmd_regimes(exp, out)
        assert len(out.getvalue().splitlines()) == 5


class TestVcts:
    def test_fig2(self, tmp_path):
        assert run(["vcts", "--config", "fig2", "--set", "T=200"], tmp_path) == EXIT_OK
        row = read_summary(str(tmp_path / "vcts_summary_fig2.csv"))[0]
        assert row["dt"] == pytest.approx(0.01)
        assert row["total_cost"] > 0
        traj = np.loadtxt(tmp_path / "vcts_fig2.csv", delimiter=",", skiprows=1)
        assert traj[-1, 0] == pytest.approx(200.0)
        assert np.all(traj[:, 1] >= 0)

    def test_unknown_fluid_policy(self, tmp_path):
        code = run(["vcts", "--config", "fig2", "--set", "vcts.policy=magic"], tmp_path)
        assert code == EXIT_CONFIG


class TestOracle:
    def test_solve_and_compare(self, tmp_path):
        path = write_ini(tmp_path, BASIC)
        assert run(["solve-mdp", "--config", path] + TINY_MDP, tmp_path) == EXIT_OK
        summary = read_summary(str(tmp_path / "mdp_summary_basic.csv"))[0]
        assert summary["span"] <= 1e-9
        assert isinstance(summary["theta_star"], float)
        with pytest.warns(RuntimeWarning):
            assert run(["compare", "--config", path] + TINY_MDP, tmp_path) == EXIT_OK
        rows = {r["policy"]: r for r in read_summary(str(tmp_path / "compare_basic.csv"))}
        assert rows["mdp_table"]["loss_ratio"] == pytest.approx(0.0, abs=1e-7)
        assert rows["closed_form"]["loss_ratio"] >= -1e-7
        assert rows["greedy"]["loss_ratio"] >= -1e-7

    def test_regime3_closed_form_near_greedy(self, tmp_path):
        # closed form spends the battery; greedy differs only once E / tau > alpha_bar - eps
        path = write_ini(tmp_path, BASIC)
        args = TINY_MDP + ["--set", "lambda_bar=0.36", "--set", "alpha_bar=6"]
        run(["solve-mdp", "--config", path] + args, tmp_path)
        with pytest.warns(RuntimeWarning):
            run(["compare", "--config", path] + args, tmp_path)
        rows = {r["policy"]: r for r in read_summary(str(tmp_path / "compare_basic.csv"))}
        assert rows["closed_form"]["loss_ratio"] >= -1e-7
        assert rows["greedy"]["loss_ratio"] >= -1e-7
        assert abs(rows["closed_form"]["loss_ratio"] - rows["greedy"]["loss_ratio"]) < 0.05

    @pytest.mark.parametrize("change", ["lambda_bar=1.8", "n_q=7", "N_E=3", "q_max=5"])
    def test_mismatch(self, tmp_path, change):
        path = write_ini(tmp_path, BASIC)
        run(["solve-mdp", "--config", path] + TINY_MDP, tmp_path)
        code = run(["compare", "--config", path] + TINY_MDP + ["--set", change], tmp_path)
        assert code == EXIT_MISMATCH

    def test_infeasible_solve(self, tmp_path):
        code = run(["solve-mdp", "--config", write_ini(tmp_path, BASIC)] + TINY_MDP
                   + ["--set", "lambda_bar=2.4"], tmp_path)
        assert code == EXIT_INFEASIBLE
