import csv
import json

import numpy as np
import pytest

from netnaf import nn
from netnaf.cli import main
from netnaf.config import (ExperimentConfig, apply_overrides, load_config,
                           parse_config)
from netnaf.errors import ConfigError
from netnaf.plant import ChuaCircuit, InputSchedule, integrate


SMALL_CONFIG = """
[plant]
horizon = 1.0

[network]
hidden = 8,8

[training]
episodes = 3
batch = 4
warmup = 4
iters = 1
checkpoint_every = 2
"""


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def rows_without_wall_clock(path):
    """Learning-curve rows minus the wall-time column (the only
    nondeterministic field)."""
    return [row[:-1] for row in read_csv(path)]


# ---------------------------------------------------------------------------
# configuration


def test_defaults_match_reference_experiment():
    cfg = ExperimentConfig()
    assert cfg.delta == 2.0 ** -4
    assert cfg.gamma == 0.99
    assert cfg.soft_update_rate == 0.001
    assert cfg.batch_size == 128
    assert cfg.update_iters == 10
    assert cfg.update_period == 4
    assert cfg.learning_rate == 1.25e-5
    assert cfg.max_delay_steps == 8
    assert cfg.output_history_len == 4
    assert cfg.hidden == (128, 128, 128, 128)
    assert cfg.replay_capacity == 10 ** 6
    assert cfg.horizon == 12.0
    assert cfg.steps_per_episode == 192
    assert cfg.init_box == 4.5
    assert cfg.noise_scale == 3.5
    assert cfg.noise_decay_start == 1000
    assert cfg.episodes == 8500
    assert cfg.sc_min == cfg.delta and cfg.sc_max == 3 * cfg.delta
    assert cfg.extended_dim == 22


def test_config_text_roundtrip():
    cfg = ExperimentConfig()
    again = parse_config(cfg.to_text())
    assert again == cfg
    assert again.to_text() == cfg.to_text()


def test_partial_config_overrides_defaults():
    cfg = parse_config(SMALL_CONFIG)
    assert cfg.horizon == 1.0
    assert cfg.hidden == (8, 8)
    assert cfg.episodes == 3
    assert cfg.gamma == 0.99  # untouched default


def test_unknown_key_is_hard_error():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[training]\nepisodess = 10\n")


def test_unknown_section_is_hard_error():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[trainin]\nepisodes = 10\n")


def test_bad_value_is_hard_error():
    with pytest.raises(ConfigError, match="bad value"):
        parse_config("[training]\nepisodes = many\n")


def test_invalid_combinations_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig(horizon=1.01)  # not a whole number of periods
    with pytest.raises(ConfigError):
        ExperimentConfig(sc_max=10.0)  # beyond declared bound
    with pytest.raises(ConfigError):
        ExperimentConfig(plant_name="lorenz")
    with pytest.raises(ConfigError):
        ExperimentConfig(output_history_len=0)


def test_apply_overrides():
    cfg = ExperimentConfig()
    cfg2 = apply_overrides(cfg, seed=9, episodes=10)
    assert cfg2.seed == 9 and cfg2.episodes == 10
    assert cfg.seed == 0  # original untouched
    assert apply_overrides(cfg, seed=None).seed == 0
    with pytest.raises(ConfigError):
        apply_overrides(cfg, nonsense=1)


# ---------------------------------------------------------------------------
# train command


@pytest.fixture()
def small_run(tmp_path):
    cfg_path = tmp_path / "exp.txt"
    cfg_path.write_text(SMALL_CONFIG)
    out = tmp_path / "run"
    code = main(["train", "--config", str(cfg_path), "--seed", "5",
                 "--out", str(out)])
    assert code == 0
    return out


def test_train_writes_expected_artifacts(small_run):
    assert (small_run / "config.txt").is_file()
    assert (small_run / "learning_curve.csv").is_file()
    assert (small_run / "final.nnc").is_file()
    assert (small_run / "checkpoints" / "ep000002.nnc").is_file()


def test_train_learning_curve_rows(small_run):
    rows = read_csv(small_run / "learning_curve.csv")
    assert rows[0] == ["episode", "reward_sum_from_50th", "mean_loss",
                       "noise_scale", "seconds_elapsed"]
    assert len(rows) == 1 + 3
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]


def test_train_snapshot_records_overrides(small_run):
    snap = load_config(small_run / "config.txt")
    assert snap.seed == 5
    assert snap.episodes == 3


def test_train_same_seed_reproduces_curve(small_run, tmp_path):
    out2 = tmp_path / "run2"
    # re-feed the resolved snapshot, as a fresh run
    code = main(["train", "--config", str(small_run / "config.txt"),
                 "--out", str(out2)])
    assert code == 0
    assert (rows_without_wall_clock(small_run / "learning_curve.csv")
            == rows_without_wall_clock(out2 / "learning_curve.csv"))
    assert ((small_run / "final.nnc").read_bytes()
            == (out2 / "final.nnc").read_bytes())


def test_train_episode_override_changes_row_count(tmp_path):
    cfg_path = tmp_path / "exp.txt"
    cfg_path.write_text(SMALL_CONFIG)
    out = tmp_path / "ten"
    code = main(["train", "--config", str(cfg_path), "--episodes", "2",
                 "--out", str(out)])
    assert code == 0
    assert len(read_csv(out / "learning_curve.csv")) == 1 + 2


def test_train_rejects_bad_config(tmp_path, capsys):
    cfg_path = tmp_path / "exp.txt"
    cfg_path.write_text("[training]\nepisodess = 1\n")
    code = main(["train", "--config", str(cfg_path)])
    assert code == 1
    assert "unknown key" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# eval command


def test_eval_logs_requested_initial_state(small_run, tmp_path):
    out_csv = tmp_path / "traj.csv"
    trace_csv = tmp_path / "delays.csv"
    code = main(["eval", "--checkpoint", str(small_run / "final.nnc"),
                 "--init=-0.2,0.1,-0.1", "--delay-seed", "3",
                 "--out", str(out_csv), "--delay-trace", str(trace_csv)])
    assert code == 0
    rows = read_csv(out_csv)
    assert rows[0][:5] == ["k", "t", "x1", "x2", "x3"]
    assert [float(v) for v in rows[1][2:5]] == [-0.2, 0.1, -0.1]
    assert len(rows) == 1 + 17  # horizon 1.0 at delta 2^-4
    trace = read_csv(trace_csv)
    assert trace[0] == ["k", "t_sent", "tau_sc", "tau_cp", "ctrl_arrival",
                        "plant_arrival"]
    assert len(trace) == 1 + 17


def test_eval_second_initial_state(small_run, tmp_path):
    out_csv = tmp_path / "traj2.csv"
    code = main(["eval", "--checkpoint", str(small_run / "final.nnc"),
                 "--init", "2.0,-1.0,1.0", "--out", str(out_csv)])
    assert code == 0
    rows = read_csv(out_csv)
    assert [float(v) for v in rows[1][2:5]] == [2.0, -1.0, 1.0]


def test_eval_zero_weight_checkpoint_matches_uncontrolled(tmp_path):
    # zero delays, so the loop splits integration windows exactly like the
    # free-running reference
    cfg = parse_config(SMALL_CONFIG + "\n[delays]\nsc_min = 0.0\nsc_max = 0.0\n"
                       "cp_min = 0.0\ncp_max = 0.0\n"
                       "sc_bound_steps = 0\ncp_bound_steps = 0\n")
    dim = cfg.extended_dim
    net = nn.init_network([dim, *cfg.hidden], 1, cfg.tanh_weight, 0)
    nn.set_params(net, np.zeros(nn.flatten_params(net).size))
    run = tmp_path / "zero"
    run.mkdir()
    cfg.save(run / "config.txt")
    nn.save_checkpoint(run / "zero.nnc", net,
                       nn.AdamState.fresh(nn.flatten_params(net).size))
    out_csv = tmp_path / "traj.csv"
    code = main(["eval", "--checkpoint", str(run / "zero.nnc"),
                 "--init", "2.0,-1.0,1.0", "--out", str(out_csv)])
    assert code == 0
    rows = read_csv(out_csv)
    states = np.array([[float(v) for v in r[2:5]] for r in rows[1:]])
    free = integrate(ChuaCircuit(), np.array([2.0, -1.0, 1.0]),
                     InputSchedule(np.zeros(1)), 0.0, 1.0, cfg.substep)
    assert np.abs(states[-1] - free).max() <= 1e-12


def test_eval_dimension_mismatch_fails(small_run, tmp_path, capsys):
    other = ExperimentConfig(output_history_len=6)
    bad_cfg = tmp_path / "bad.txt"
    bad_cfg.write_text(other.to_text())
    code = main(["eval", "--checkpoint", str(small_run / "final.nnc"),
                 "--init", "0,0,0", "--config", str(bad_cfg)])
    assert code == 1
    assert "input width" in capsys.readouterr().err


def test_eval_missing_config_reports_error(small_run, tmp_path, capsys):
    lonely = tmp_path / "lonely.nnc"
    lonely.write_bytes((small_run / "final.nnc").read_bytes())
    code = main(["eval", "--checkpoint", str(lonely), "--init", "0,0,0"])
    assert code == 1
    assert "config" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# verify command


def test_verify_passes_and_reports_timing(capsys):
    code = main(["verify"])
    out = capsys.readouterr().out.strip().splitlines()
    assert code == 0
    assert out[-1] == "VERIFY PASS"
    suites = [json.loads(line) for line in out[:-1]]
    names = {s["suite"] for s in suites}
    assert {"naf_algebra", "gradients", "channels", "rk4_order",
            "mutation_guard"} <= names
    assert all(s["ok"] for s in suites)
    assert all("seconds" in s for s in suites)
