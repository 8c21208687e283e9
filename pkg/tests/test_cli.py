import json

import pytest

from sgl.cli import main
from sgl.games import save_game, save_policy, uniform_profile
from sgl.generators import GeneratorSpec, generate


@pytest.fixture
def game_file(tmp_path):
    game = generate(GeneratorSpec(kind="random-ergodic", n_states=2, seed=1))
    path = tmp_path / "game.json"
    save_game(game, path)
    return path


class TestValidate:
    def test_good_file(self, game_file, capsys):
        assert main(["validate", str(game_file)]) == 0
        assert "ok:" in capsys.readouterr().out

    def test_bad_row_sum_exits_one_with_indices(self, tmp_path, capsys):
        game = generate(GeneratorSpec(kind="random-ergodic", n_states=2, seed=2))
        doc = json.loads(json.dumps({
            "n_states": 2,
            "actions": [2, 2],
            "rewards": game.rewards.tolist(),
            "transitions": game.transitions.tolist(),
        }))
        doc["transitions"][0][1] = [0.6, 0.3]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        assert main(["validate", str(path)]) == 1
        err = capsys.readouterr().err
        assert "state=0" in err and "joint_action=1" in err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "nope.json")]) == 1

    def test_unknown_flag_exits_one(self, game_file, capsys):
        assert main(["validate", "--frobnicate", str(game_file)]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_command_exits_one(self, capsys):
        assert main(["dance"]) == 1


class TestAnalyze:
    def test_document_contents(self, game_file, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(
            ["analyze", "--game", str(game_file), "--samples", "4", "--out", str(out)]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        for key in (
            "values",
            "gradients",
            "nash_gap",
            "mixing",
            "mismatch_estimate",
            "lipschitz_estimate",
            "first_order_residual",
        ):
            assert key in doc
        assert doc["mixing"]["ok"] is True
        assert doc["mismatch_estimate"]["certificate"] == "sampled lower bound"

    def test_report_alias(self, game_file, capsys):
        assert main(["report", "--game", str(game_file), "--samples", "3"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert "values" in doc


class TestGradient:
    def test_fd_close_to_exact(self, game_file, tmp_path, capsys):
        out = tmp_path / "grad.json"
        code = main(
            [
                "gradient", "--game", str(game_file), "--policy", "uniform",
                "--method", "fd", "--out", str(out),
            ]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["max_abs_diff_vs_exact"] <= 1e-4
        assert "max abs difference" in capsys.readouterr().err

    def test_exact_output_shape(self, game_file, capsys):
        assert main(
            ["gradient", "--game", str(game_file), "--policy", "uniform"]
        ) == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc["gradient"]) == 2
        assert doc["coordinates"] == "reduced"

    def test_spsa_estimate_runs(self, game_file, capsys):
        code = main(
            [
                "gradient", "--game", str(game_file), "--policy", "uniform",
                "--method", "spsa", "--delta", "0.2", "--draws", "2000",
                "--seed", "0",
            ]
        )
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["draws"] == 2000
        assert doc["max_abs_diff_vs_exact"] < 0.5  # loose Monte Carlo sanity

    def test_policy_file_argument(self, game_file, tmp_path, capsys):
        game = generate(GeneratorSpec(kind="random-ergodic", n_states=2, seed=1))
        pol_path = tmp_path / "policy.json"
        save_policy(uniform_profile(game), pol_path)
        assert main(
            ["gradient", "--game", str(game_file), "--policy", str(pol_path)]
        ) == 0


class TestLearn:
    def test_matching_pennies_with_sqrt_horizon_preset(self, tmp_path, capsys):
        game = generate(GeneratorSpec(kind="matching-pennies"))
        game_path = tmp_path / "mp.json"
        save_game(game, game_path)
        out_dir = tmp_path / "run"
        code = main(
            [
                "learn", "--game", str(game_path), "--iters", "300",
                "--seed", "0", "--preset", "sqrt-horizon", "--ref", "uniform",
                "--log-every", "100", "--out", str(out_dir),
            ]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["iters"] == 300
        assert "final_values" in summary and "final_dist_to_ref" in summary
        lines = (out_dir / "run.csv").read_text().strip().splitlines()
        assert lines[0] == "t,gamma,delta,horizon,player,value,fenchel,nash_gap,dist_to_ref,est_norm"
        ts = [int(line.split(",")[0]) for line in lines[1:]]
        assert ts == sorted(ts)
        assert set(ts) == {100, 200, 300}

    def test_schedule_warning_on_bad_exponents(self, tmp_path, capsys):
        game = generate(GeneratorSpec(kind="matching-pennies"))
        game_path = tmp_path / "mp.json"
        save_game(game, game_path)
        code = main(
            [
                "learn", "--game", str(game_path), "--iters", "20",
                "--seed", "0", "--gamma-exp", "0.5", "--delta-exp", "0.25",
                "--log-every", "10",
            ]
        )
        assert code == 0
        assert "schedule conditions failing" in capsys.readouterr().err

    def test_env_var_default_seed(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("SGL_SEED", "123")
        game = generate(GeneratorSpec(kind="matching-pennies"))
        game_path = tmp_path / "mp.json"
        save_game(game, game_path)
        code = main(
            ["learn", "--game", str(game_path), "--iters", "10", "--log-every", "5"]
        )
        assert code == 0
        assert json.loads(capsys.readouterr().out)["seed"] == 123


class TestGenerateCommand:
    def test_generate_validates_round_trip(self, tmp_path, capsys):
        out = tmp_path / "gen.json"
        code = main(
            [
                "generate", "--kind", "random-ergodic", "--states", "3",
                "--actions", "2", "3", "--eps", "0.05", "--seed", "9",
                "--out", str(out),
            ]
        )
        assert code == 0
        capsys.readouterr()
        assert main(["validate", str(out)]) == 0

    def test_bad_spec_exits_one(self, tmp_path, capsys):
        code = main(
            [
                "generate", "--kind", "random-ergodic", "--states", "5",
                "--eps", "0.3", "--out", str(tmp_path / "x.json"),
            ]
        )
        assert code == 1


class TestSweepCommand:
    def test_sweep_from_config(self, tmp_path, capsys):
        game = generate(GeneratorSpec(kind="matching-pennies"))
        game_path = tmp_path / "mp.json"
        save_game(game, game_path)
        cfg = {
            "game": str(game_path),
            "grid": [{"p": 1.0, "q": 1 / 3, "horizon": "log", "T0": 0.0}],
            "seeds": [0, 1],
            "iters": 30,
            "log_every": 10,
            "out": str(tmp_path / "out"),
        }
        cfg_path = tmp_path / "sweep.json"
        cfg_path.write_text(json.dumps(cfg))
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["completed"] == 2
        assert (tmp_path / "out" / "summary.json").exists()
