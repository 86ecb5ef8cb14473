"""Shared fixtures: real run directories produced by the splitflow CLI.

The plotting layer is a consumer of file contracts, so the fixtures
drive the actual command line tool in a subprocess rather than calling
into splitflow's internals.
"""

import json
import subprocess
import sys

import pytest


def run_splitflow(out_dir, config, commands=("generate", "analyze")):
    config_path = out_dir / "config.json"
    config_path.write_text(json.dumps(config))
    for command in commands:
        proc = subprocess.run(
            [sys.executable, "-m", "splitflow.cli",
             "--config", str(config_path), "--out", str(out_dir), command],
            capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(
                f"splitflow {command} failed ({proc.returncode}):\n"
                f"{proc.stderr}")
    return out_dir


@pytest.fixture(scope="session")
def two_atom_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("two_atom_run")
    return run_splitflow(out, {
        "dataset": "two_atoms",
        "n_particles": 80,
        "grid": {"n_nodes": 40},
        "k": 10,
        "seed_data": 5,
        "seed_run": 5,
    })


@pytest.fixture(scope="session")
def no_split_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("no_split_run")
    return run_splitflow(out, {
        "dataset": "two_atoms",
        "max_atoms": 1,
        "n_particles": 50,
        "grid": {"n_nodes": 30},
        "k": 5,
        "seed_data": 3,
        "seed_run": 3,
    })
