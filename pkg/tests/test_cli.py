"""Command-line pipeline: configs, file outputs, exit codes.

Every test drives main() in-process with a throwaway output directory.
Byte-level determinism is asserted by hashing whole files.
"""

import hashlib
import json
import os

import numpy as np
import pytest

from splitflow.cli import (
    config_hash,
    main,
    resolve_config,
    run_analyze,
    run_generate,
)


def write_config(tmp_path, **overrides):
    cfg = {
        "dataset": "two_atoms",
        "n_particles": 80,
        "grid": {"n_nodes": 40},
        "out_dir": str(tmp_path / "run"),
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def read_lines(path):
    with open(path) as fh:
        return fh.read().splitlines()


def file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def test_generate_writes_requested_particle_count(tmp_path):
    cfg = write_config(tmp_path, dataset="two_moons", n_particles=100,
                       dataset_params={"n_samples": 120}, max_atoms=50)
    assert main(["--config", cfg, "generate"]) == 0
    lines = read_lines(tmp_path / "run" / "prior.csv")
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == "x,y"
    assert len(lines) == 102
    atoms = read_lines(tmp_path / "run" / "atoms.csv")
    assert atoms[1] == "x,y,prior"
    assert len(atoms) == 52


def test_generate_twice_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, dataset="s_curve",
                       dataset_params={"n_samples": 150})
    assert main(["--config", cfg, "generate"]) == 0
    first = {n: file_digest(tmp_path / "run" / n)
             for n in os.listdir(tmp_path / "run")}
    assert main(["--config", cfg, "generate"]) == 0
    second = {n: file_digest(tmp_path / "run" / n)
              for n in os.listdir(tmp_path / "run")}
    assert first == second


def test_bad_dataset_name_is_usage_error(tmp_path, capsys):
    cfg = write_config(tmp_path, dataset="spiral")
    assert main(["--config", cfg, "generate"]) == 2
    assert "unknown dataset" in capsys.readouterr().err


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    cfg = write_config(tmp_path, grid={"n_nodes": 40, "dt": 0.1})
    assert main(["--config", cfg, "generate"]) == 2
    assert "grid.dt" in capsys.readouterr().err


def test_malformed_json_config_is_usage_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["--config", str(path), "generate"]) == 2


def test_unknown_command_is_usage_exit(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_flags_override_config_file(tmp_path):
    cfg_path = write_config(tmp_path, seed_data=3, seed_train=4, seed_run=5)
    cfg = resolve_config(config_path=cfg_path, seed=9,
                         out_dir=str(tmp_path / "other"), threads=2)
    assert (cfg["seed_data"], cfg["seed_train"], cfg["seed_run"]) == (9, 9, 9)
    assert cfg["out_dir"] == str(tmp_path / "other")
    assert cfg["threads"] == 2


def test_config_hash_ignores_execution_placement(tmp_path):
    base = resolve_config(overrides={"out_dir": "a", "threads": 1})
    moved = resolve_config(overrides={"out_dir": "b", "threads": 8})
    other = resolve_config(overrides={"k": 10})
    assert config_hash(base) == config_hash(moved)
    assert config_hash(base) != config_hash(other)


def test_train_writes_checkpoint_and_trace(tmp_path):
    cfg = write_config(tmp_path,
                       train={"n_steps": 50, "batch_size": 32})
    assert main(["--config", cfg, "train"]) == 0
    checkpoint = json.loads((tmp_path / "run" / "checkpoint.json").read_text())
    assert checkpoint["step"] == 50
    assert checkpoint["params"]["widths"] == [1, 64, 64, 3]
    assert "config_hash" in checkpoint
    assert checkpoint["optimizer"]["step"] == 50
    lines = read_lines(tmp_path / "run" / "train_trace.csv")
    assert lines[1] == "step,total,bound,energy,grad_norm"
    assert len(lines) == 52
    first = np.array(lines[2].split(","), dtype=float)
    assert first[0] == 0
    assert np.all(np.isfinite(first))


def test_train_zero_energy_weight_reports_zero_total(tmp_path):
    cfg = write_config(tmp_path,
                       train={"n_steps": 10, "batch_size": 16,
                              "lambda_energy": 0.0})
    assert main(["--config", cfg, "train"]) == 0
    lines = read_lines(tmp_path / "run" / "train_trace.csv")[2:]
    totals = np.array([float(line.split(",")[1]) for line in lines])
    assert np.all(totals == 0.0)


def test_train_divergence_exits_3_with_step(tmp_path, capsys):
    cfg = write_config(tmp_path,
                       train={"n_steps": 300, "batch_size": 32,
                              "learning_rate": 1e8})
    assert main(["--config", cfg, "train"]) == 3
    err = capsys.readouterr().err
    assert "diverged at step" in err


def test_analyze_without_inputs_is_io_error(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["--config", cfg, "analyze"]) == 4
    assert "run generate" in capsys.readouterr().err


def test_report_without_analysis_is_io_error(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["--config", cfg, "generate"]) == 0
    assert main(["--config", cfg, "report"]) == 4


def test_analyze_output_schemas(tmp_path):
    cfg = write_config(tmp_path, n_particles=60, k=10)
    assert main(["--config", cfg, "generate"]) == 0
    assert main(["--config", cfg, "analyze"]) == 0
    run = tmp_path / "run"

    indicator = read_lines(run / "indicator.csv")
    assert indicator[1] == "t,topk_mean_lambda,cumulative_integral,slope"
    assert len(indicator) == 42
    assert float(indicator[2].split(",")[2]) == 0.0

    trajectories = read_lines(run / "trajectories.csv")
    assert trajectories[1] == ("particle_id,t,x,y,j11,j12,j21,j22,"
                               "lambda_max,lambda_min,delta,det_j")
    assert len(trajectories) == 2 + 60 * 40
    first = trajectories[2].split(",")
    assert first[0] == "0"
    assert [float(v) for v in first[4:8]] == [1.0, 0.0, 0.0, 1.0]
    assert float(first[11]) == 1.0

    for idx in range(5):
        snap = read_lines(run / f"snapshots_t{idx}.csv")
        assert snap[1] == "particle_id,t,x,y,lambda_max,delta,top_k"
        flags = [int(line.split(",")[-1]) for line in snap[2:]]
        assert sum(flags) == 10

    payload = json.loads((run / "report.json").read_text())
    for key in ("config_hash", "t_star", "no_split", "peak_slope",
                "peak_lambda", "k", "hotspots", "config_echo"):
        assert key in payload
    assert payload["k"] == 10
    assert len(payload["hotspots"]) == 10


def test_snapshot_times_map_to_nearest_nodes(tmp_path):
    cfg = write_config(tmp_path, n_particles=40,
                       snapshot_times=[0.0, 0.5, 1.0])
    assert main(["--config", cfg, "generate"]) == 0
    assert main(["--config", cfg, "analyze"]) == 0
    nodes = np.linspace(0.001, 0.98, 40)
    for idx, requested in enumerate((0.0, 0.5, 1.0)):
        line = read_lines(tmp_path / "run" / f"snapshots_t{idx}.csv")[2]
        written = float(line.split(",")[1])
        expect = nodes[np.argmin(np.abs(nodes - requested))]
        assert written == pytest.approx(expect, abs=1e-12)
    assert not (tmp_path / "run" / "snapshots_t3.csv").exists()


def test_single_atom_target_reports_no_split(tmp_path):
    cfg = write_config(tmp_path, max_atoms=1, n_particles=50)
    assert main(["--config", cfg, "generate"]) == 0
    assert main(["--config", cfg, "analyze"]) == 0
    payload = json.loads((tmp_path / "run" / "report.json").read_text())
    assert payload["no_split"] is True
    assert payload["t_star"] is None
    assert payload["hotspots"] is None
    assert main(["--config", cfg, "report"]) == 0
    assert "no split detected" in (tmp_path / "run" / "report.md").read_text()


def test_report_echoes_the_analyze_t_star(tmp_path):
    cfg = write_config(tmp_path, n_particles=60)
    for cmd in ("generate", "analyze", "report"):
        assert main(["--config", cfg, cmd]) == 0
    payload = json.loads((tmp_path / "run" / "report.json").read_text())
    text = (tmp_path / "run" / "report.md").read_text()
    assert repr(payload["t_star"]) in text
    again = file_digest(tmp_path / "run" / "report.md")
    assert main(["--config", cfg, "report"]) == 0
    assert file_digest(tmp_path / "run" / "report.md") == again


def test_full_pipeline_is_byte_identical_across_runs(tmp_path):
    cfg = write_config(tmp_path, dataset="two_moons", n_particles=60,
                       dataset_params={"n_samples": 150, "noise": 0.05},
                       max_atoms=64)

    def run_all():
        for cmd in ("generate", "analyze", "report"):
            assert main(["--config", cfg, cmd]) == 0
        run = tmp_path / "run"
        return {name: file_digest(run / name)
                for name in sorted(os.listdir(run))}

    assert run_all() == run_all()


def test_thread_count_does_not_change_results(tmp_path):
    digests = {}
    for threads in (1, 3):
        out = tmp_path / f"run{threads}"
        cfg = write_config(tmp_path, n_particles=50,
                           out_dir=str(out), threads=threads)
        assert main(["--config", cfg, "generate"]) == 0
        assert main(["--config", cfg, "analyze"]) == 0
        digests[threads] = file_digest(out / "trajectories.csv")
    assert digests[1] == digests[3]


def test_learned_schedule_flows_through_analyze(tmp_path):
    cfg = write_config(tmp_path, schedule="learned", n_particles=50,
                       train={"n_steps": 80, "batch_size": 32})
    assert main(["--config", cfg, "train"]) == 0
    assert main(["--config", cfg, "analyze"]) == 0
    payload = json.loads((tmp_path / "run" / "report.json").read_text())
    assert payload["config_echo"]["schedule"] == "learned"
    assert payload["t_star"] is None or 0.001 <= payload["t_star"] <= 0.98


def test_learned_schedule_requires_checkpoint(tmp_path):
    cfg = write_config(tmp_path, schedule="learned")
    assert main(["--config", cfg, "generate"]) == 0
    assert main(["--config", cfg, "analyze"]) == 4


def test_all_outputs_carry_the_config_hash(tmp_path):
    cfg_path = write_config(tmp_path, n_particles=40,
                            train={"n_steps": 8, "batch_size": 8})
    for cmd in ("generate", "train", "analyze"):
        assert main(["--config", cfg_path, cmd]) == 0
    cfg = resolve_config(config_path=cfg_path)
    tag = config_hash(cfg)
    run = tmp_path / "run"
    for name in os.listdir(run):
        if name.endswith(".csv"):
            assert read_lines(run / name)[0] == f"# config_hash={tag}", name
    for name in ("checkpoint.json", "report.json"):
        assert json.loads((run / name).read_text())["config_hash"] == tag


def test_two_atom_analysis_matches_direct_calls(tmp_path):
    cfg = resolve_config(overrides={
        "dataset": "two_atoms", "n_particles": 40,
        "grid": {"t_start": 0.001, "t_end": 0.98, "n_nodes": 30},
        "out_dir": str(tmp_path / "run")})
    run_generate(cfg)
    payload = run_analyze(cfg)
    from splitflow.datasets import read_cloud_csv, sample_prior
    prior = read_cloud_csv(tmp_path / "run" / "prior.csv")
    direct = sample_prior(40, [cfg["seed_run"], 0]).points
    assert np.array_equal(prior, direct)
    assert payload["t_star"] is not None
