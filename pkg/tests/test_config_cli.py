import json
from pathlib import Path

import numpy as np
import pytest

from lobswitch.cli import main
from lobswitch.config import (ConfigError, config_hash, grid_from_config,
                              model_params_from_config, parse_kv_file,
                              reward_from_config)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


TINY_PARAMS = """
sigma_a = 1.0
sigma_b = 1.0
delta_a = 2
delta_b = 2
theta_a = linear:0.2
theta_b = linear:0.2
lambda_a = table:[0.25]
lambda_b = table:[0.25]
pa_bar = 15
pb_under = 12
epsilon = 0.0
horizon = 2.0
q0_a = 2
q0_b = 2
pa0 = 14
pb0 = 13
"""

TINY_GRID = """
t_start = 0.0
t_end = 2.0
steps = 2
q_max = 3
i_min = -4
i_max = 4
pa_min = 13
pa_max = 15
pb_min = 12
pb_max = 14
"""

TINY_REWARD = """
r_c = 1.0
r_i = 1.0
variant = liquidation:1,1
"""


class TestConfigParsing:
    def test_parse_kv_strips_comments_and_blanks(self, tmp_path):
        p = _write(tmp_path, "a.conf", "# hello\nfoo = 1 # trailing\n\nbar=x\n")
        assert parse_kv_file(p) == {"foo": "1", "bar": "x"}

    def test_parse_kv_rejects_bad_line(self, tmp_path):
        p = _write(tmp_path, "a.conf", "not a kv line\n")
        with pytest.raises(ConfigError, match="key = value"):
            parse_kv_file(p)

    def test_parse_kv_rejects_duplicates(self, tmp_path):
        p = _write(tmp_path, "a.conf", "a = 1\na = 2\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_kv_file(p)

    def test_unknown_key_rejected(self, tmp_path):
        p = _write(tmp_path, "a.params", "sigma_q = 1\n")
        with pytest.raises(ConfigError, match="unknown key"):
            model_params_from_config(p)

    def test_shipped_configs_parse(self):
        params = model_params_from_config(CONFIGS / "lattice.params")
        assert params.pa_bar == 18 and params.delta_a == 5.0
        gspec = grid_from_config(CONFIGS / "lattice.grid")
        assert gspec.steps == 9
        reward = reward_from_config(CONFIGS / "liquidation.reward")
        assert reward.variant == "liquidation" and reward.u_a == 2.0

    def test_reward_variants_parse(self, tmp_path):
        p = _write(tmp_path, "r.reward", "variant = target_abs:3.5\nr_i = -1\n")
        spec = reward_from_config(p)
        assert spec.variant == "target_abs" and spec.z0 == 3.5
        p = _write(tmp_path, "r2.reward", "variant = bogus\n")
        with pytest.raises(ConfigError):
            reward_from_config(p)

    def test_config_hash_is_content_stable(self):
        a = config_hash({"x": "1"}, extra={"seed": 3})
        b = config_hash({"x": "1"}, extra={"seed": 3})
        c = config_hash({"x": "2"}, extra={"seed": 3})
        assert a == b != c


@pytest.fixture
def tiny_files(tmp_path):
    return {
        "params": _write(tmp_path, "tiny.params", TINY_PARAMS),
        "grid": _write(tmp_path, "tiny.grid", TINY_GRID),
        "reward": _write(tmp_path, "tiny.reward", TINY_REWARD),
        "dir": tmp_path,
    }


class TestCli:
    def test_book_sim_writes_reproducible_csv_and_figures(self, tmp_path):
        out1 = tmp_path / "b1.csv"
        out2 = tmp_path / "b2.csv"
        argv = ["book-sim", "--t-end", "10", "--dt", "0.5", "--seed", "4",
                "--params", str(CONFIGS / "book600.params")]
        assert main(argv + ["--out", str(out1)]) == 0
        assert main(argv + ["--out", str(out2)]) == 0
        assert out1.read_bytes().split(b"\n", 1)[1] == \
            out2.read_bytes().split(b"\n", 1)[1]
        head = out1.read_text().splitlines()
        assert head[0].startswith("# config_hash=")
        assert head[1] == "t,qa,qb,pa,pb,La,Lb,Na,Nb"
        assert (tmp_path / "b1_prices.png").exists()
        assert (tmp_path / "b1_volumes.png").exists()

    def test_solve_evaluate_premium_round(self, tiny_files):
        d = tiny_files["dir"]
        pol = d / "pol.bin"
        rc = main(["solve", "--model", "binomial", "--trader", "internalizing",
                   "--epsilon", "0.25", "--params", str(tiny_files["params"]),
                   "--grid", str(tiny_files["grid"]),
                   "--reward", str(tiny_files["reward"]),
                   "--threads", "2", "--out", str(pol)])
        assert rc == 0 and pol.exists()

        traj = d / "traj.csv"
        rc = main(["evaluate", "--policy", str(pol),
                   "--params", str(tiny_files["params"]),
                   "--reward", str(tiny_files["reward"]),
                   "--paths", "500", "--seed", "2", "--x0", "2,2,0,14,13",
                   "--out", str(traj), "--no-figures"])
        assert rc == 0
        lines = traj.read_text().splitlines()
        header_idx = next(i for i, l in enumerate(lines) if l.startswith("t,"))
        assert lines[header_idx] == \
            "t,qa,qb,pa,pb,action,ua,ub,ha,hb,inventory,cash"
        assert len(lines) > header_idx + 2

        report = d / "report.json"
        rc = main(["premium", "--params", str(tiny_files["params"]),
                   "--grid", str(tiny_files["grid"]),
                   "--reward", str(tiny_files["reward"]),
                   "--epsilon-ladder", "0,0.5", "--delta", "0.005",
                   "--threads", "2", "--out", str(report), "--no-figures"])
        assert rc == 0
        payload = json.loads(report.read_text())
        assert set(payload["curve"]) == {"0.0", "0.5"}
        assert "config_hash" in payload

    def test_solve_csv_format_round_trips(self, tiny_files):
        from lobswitch.dp_solver import load_policy
        d = tiny_files["dir"]
        out_bin = d / "p.bin"
        out_csv = d / "p.csv"
        base = ["solve", "--model", "binomial", "--trader", "regular",
                "--params", str(tiny_files["params"]),
                "--grid", str(tiny_files["grid"]),
                "--reward", str(tiny_files["reward"])]
        assert main(base + ["--out", str(out_bin), "--format", "bin"]) == 0
        assert main(base + ["--out", str(out_csv), "--format", "csv"]) == 0
        a = load_policy(out_bin)
        b = load_policy(out_csv)
        assert np.array_equal(a.v0, b.v0)
        assert np.array_equal(a.u0a, b.u0a)

    def test_full_grid_solve_logs_node_count(self, tmp_path, capsys):
        pol = tmp_path / "full.bin"
        rc = main(["solve", "--model", "binomial", "--trader", "regular",
                   "--params", str(CONFIGS / "lattice.params"),
                   "--grid", str(CONFIGS / "lattice.grid"),
                   "--reward", str(CONFIGS / "liquidation.reward"),
                   "--threads", "2", "--out", str(pol)])
        assert rc == 0
        assert "104181 admissible points" in capsys.readouterr().out

    def test_missing_config_exits_2_without_partial_output(self, tmp_path):
        out = tmp_path / "never.csv"
        rc = main(["book-sim", "--t-end", "1", "--dt", "0.5",
                   "--params", str(tmp_path / "absent.params"),
                   "--out", str(out)])
        assert rc == 2
        assert not out.exists()

    def test_malformed_config_exits_65(self, tmp_path):
        bad = _write(tmp_path, "bad.params", "sigma_a = not_a_number\n")
        rc = main(["book-sim", "--t-end", "1", "--dt", "0.5",
                   "--params", str(bad), "--out", str(tmp_path / "o.csv")])
        assert rc == 65

    def test_unknown_flag_exits_64(self):
        assert main(["solve", "--bogus"]) == 64
        assert main([]) == 64

    def test_version_prints_build_info(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "lobswitch" in capsys.readouterr().out

    def test_oracle_check_smoke(self):
        assert main(["oracle-check", "--instances", "2", "--seed", "3"]) == 0

    def test_threads_env_var_is_the_default(self, monkeypatch):
        from lobswitch.cli import _default_threads
        monkeypatch.setenv("LOBSWITCH_THREADS", "6")
        assert _default_threads() == 6
        monkeypatch.setenv("LOBSWITCH_THREADS", "junk")
        assert _default_threads() == 1
        monkeypatch.delenv("LOBSWITCH_THREADS")
        assert _default_threads() == 1

    def test_premium_accepts_weight_file(self, tiny_files):
        from lobswitch.dp_solver import build_grid
        from lobswitch.config import grid_from_config
        d = tiny_files["dir"]
        grid = build_grid(grid_from_config(tiny_files["grid"]))
        n = grid.n_nodes
        wfile = d / "w.csv"
        wfile.write_text("node,weight\n" + "".join(
            f"{i},{1.0 / n!r}\n" for i in range(n)))
        report = d / "wreport.json"
        rc = main(["premium", "--params", str(tiny_files["params"]),
                   "--grid", str(tiny_files["grid"]),
                   "--reward", str(tiny_files["reward"]),
                   "--epsilon-ladder", "0", "--delta", "0.005",
                   "--weights", str(wfile), "--out", str(report),
                   "--no-figures"])
        assert rc == 0
        assert json.loads(report.read_text())["per_epsilon"]["0.0"]

    def test_premium_rejects_unnormalized_weight_file(self, tiny_files):
        d = tiny_files["dir"]
        wfile = d / "bad_w.csv"
        wfile.write_text("node,weight\n0,0.4\n1,0.4\n")
        rc = main(["premium", "--params", str(tiny_files["params"]),
                   "--grid", str(tiny_files["grid"]),
                   "--reward", str(tiny_files["reward"]),
                   "--epsilon-ladder", "0", "--delta", "0.005",
                   "--weights", str(wfile), "--out", str(d / "r.json"),
                   "--no-figures"])
        assert rc == 1
