"""Tests for config parsing/validation and the command-line interface."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from speedlab.config import ConfigError, load_config, loads_config, render_config
from speedlab.runner import execute_run, execute_sweep, execute_verify

SPEED_CONFIG = """
[run]
mode = speed
seed = 7

[policy]
size = 24
n_responses = 4
zero_mass = 0.25
one_mass = 0.25
hard_pass_rate = 0.05
easy_pass_rate = 0.9

[curriculum]
n_init = 2
n_cont = 4
train_batch_size = 4
generation_batch_size = 8

[train]
learning_rate = 4.0
total_updates = 40
n_total = 6
batch_size = 4
max_engine_calls = 400
targets = 0.5, 0.7
"""

LATENT_CONFIG = """
[run]
mode = speed
seed = 3

[population]
size = 48
zero_mass = 0.2
one_mass = 0.2

[curriculum]
n_init = 4
n_cont = 8
train_batch_size = 4
generation_batch_size = 8

[train]
total_updates = 20
max_engine_calls = 200
"""

SWEEP_CONFIG = """
[run]
mode = sweep
seed = 5

[policy]
size = 24
n_responses = 4
zero_mass = 0.25
one_mass = 0.25
hard_pass_rate = 0.05
easy_pass_rate = 0.9

[curriculum]
n_init = 2
n_cont = 4
train_batch_size = 4
generation_batch_size = 8

[train]
learning_rate = 2.0
total_updates = 30
n_total = 6
batch_size = 4
max_engine_calls = 300
targets = 0.5

[sweep]
axis = n_init
values = 2, 3
"""


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "speedlab.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )


class TestConfigSchema:
    def test_missing_required_key_names_path(self):
        with pytest.raises(ConfigError) as err:
            loads_config("[run]\nseed = 1\n")
        assert "run.mode" in str(err.value)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError) as err:
            loads_config("[run]\nmode = verify\nbogus = 1\n")
        assert "run.bogus" in str(err.value)

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            loads_config("[run]\nmode = verify\n\n[mystery]\nx = 1\n")

    def test_bad_type_names_path(self):
        with pytest.raises(ConfigError) as err:
            loads_config("[run]\nmode = verify\nseed = not-a-number\n")
        assert "run.seed" in str(err.value)

    def test_speed_mode_needs_exactly_one_data_section(self):
        with pytest.raises(ConfigError):
            loads_config("[run]\nmode = speed\n")
        both = ("[run]\nmode = speed\n\n[policy]\nsize = 8\n\n"
                "[population]\nsize = 8\n")
        with pytest.raises(ConfigError):
            loads_config(both)

    def test_sweep_needs_two_values(self):
        bad = SWEEP_CONFIG.replace("values = 2, 3", "values = 2")
        with pytest.raises(ConfigError) as err:
            loads_config(bad)
        assert "sweep.values" in str(err.value)

    def test_seed_and_out_overrides(self):
        config = loads_config(SPEED_CONFIG, seed_override=99, out_override="x/y")
        assert config.seed == 99
        assert config["output"]["dir"] == "x/y"

    def test_defaults_filled(self):
        config = loads_config(SPEED_CONFIG)
        assert config["latency"]["concurrency_width"] == 64
        assert config["train"]["eval_interval"] == 1


class TestConfigEcho:
    def test_render_parses_back_equal(self):
        config = loads_config(SPEED_CONFIG)
        echo = render_config(config)
        again = loads_config(echo)
        assert again.sections == config.sections
        assert again.mode == config.mode

    def test_echo_rerun_reproduces_run(self, tmp_path):
        config = loads_config(SPEED_CONFIG)
        out_a = tmp_path / "a"
        execute_run(config, out_a)
        echoed = load_config(str(out_a / "config.echo.ini"))
        out_b = tmp_path / "b"
        execute_run(echoed, out_b)
        assert (out_a / "metrics.jsonl").read_bytes() == \
            (out_b / "metrics.jsonl").read_bytes()
        assert (out_a / "config.echo.ini").read_bytes() == \
            (out_b / "config.echo.ini").read_bytes()


class TestRunner:
    def test_policy_run_writes_artifacts(self, tmp_path):
        config = loads_config(SPEED_CONFIG)
        summary = execute_run(config, tmp_path / "run")
        assert (tmp_path / "run" / "metrics.jsonl").exists()
        assert (tmp_path / "run" / "summary.json").exists()
        assert summary["schema_version"] == 1
        assert "0.5" in summary["time_to_target"]

    def test_same_seed_byte_identical_metrics(self, tmp_path):
        config = loads_config(SPEED_CONFIG)
        execute_run(config, tmp_path / "a")
        execute_run(config, tmp_path / "b")
        assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == \
            (tmp_path / "b" / "metrics.jsonl").read_bytes()

    def test_latent_scheduling_run(self, tmp_path):
        config = loads_config(LATENT_CONFIG)
        summary = execute_run(config, tmp_path / "latent")
        assert summary["totals"]["updates"] > 0
        rows = [json.loads(line) for line in
                (tmp_path / "latent" / "metrics.jsonl").read_text().splitlines()]
        assert all(r["grad_norm"] in (None, 0.0) for r in rows)

    def test_paired_baseline_summary_has_speedup(self, tmp_path):
        text = SPEED_CONFIG + "paired_baseline = true\n"
        config = loads_config(text)
        summary = execute_run(config, tmp_path / "paired")
        assert "speedup" in summary
        assert "baseline" in summary
        assert (tmp_path / "paired" / "baseline_metrics.jsonl").exists()

    def test_sweep_outputs(self, tmp_path):
        config = loads_config(SWEEP_CONFIG)
        summary = execute_sweep(config, tmp_path / "sweep")
        assert (tmp_path / "sweep" / "sweep_table.csv").exists()
        assert (tmp_path / "sweep" / "series_n_init_2.jsonl").exists()
        assert (tmp_path / "sweep" / "series_n_init_3.jsonl").exists()
        first_rows = [r for r in summary["table"] if r["value"] == 2]
        for row in first_rows:
            if row["time_to_target_s"] is not None:
                assert row["speedup_vs_first"] == pytest.approx(1.0)

    def test_verify_report_document(self, tmp_path):
        code, document = execute_verify("phi", seed=0, out_dir=tmp_path)
        assert code == 0
        assert document["status"] == "pass"
        assert (tmp_path / "verify_phi.json").exists()


class TestCliProcess:
    def test_missing_key_exits_2_and_names_key(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[run]\nseed = 1\n")
        result = run_cli(["run", "--config", str(bad)], tmp_path)
        assert result.returncode == 2
        assert "run.mode" in result.stderr

    def test_missing_file_exits_2(self, tmp_path):
        result = run_cli(["run", "--config", str(tmp_path / "absent.ini")],
                         tmp_path)
        assert result.returncode == 2

    def test_run_and_determinism(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(SPEED_CONFIG)
        a = run_cli(["run", "--config", str(cfg), "--out", "out_a"], tmp_path)
        b = run_cli(["run", "--config", str(cfg), "--out", "out_b"], tmp_path)
        assert a.returncode == 0 and b.returncode == 0
        assert (tmp_path / "out_a" / "metrics.jsonl").read_bytes() == \
            (tmp_path / "out_b" / "metrics.jsonl").read_bytes()

    def test_verify_subcommand(self, tmp_path):
        result = run_cli(["verify", "--suite", "fact1", "--out", "v"], tmp_path)
        assert result.returncode == 0
        assert "fact1" in result.stdout
        assert (tmp_path / "v" / "verify_fact1.json").exists()

    def test_sweep_subcommand_and_axis_validation(self, tmp_path):
        cfg = tmp_path / "sweep.ini"
        cfg.write_text(SWEEP_CONFIG)
        bad = run_cli(["sweep", "--config", str(cfg), "--axis", "bogus"], tmp_path)
        assert bad.returncode == 2
        good = run_cli(["sweep", "--config", str(cfg), "--out", "sw"], tmp_path)
        assert good.returncode == 0
        assert (tmp_path / "sw" / "sweep_table.csv").exists()
