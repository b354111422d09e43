"""Shared fixtures: toy problems and the cached benchmark pipeline."""

import hashlib
import json
import os
import pathlib

import numpy as np
import pytest

from gnatrom.model import (BurgersModel, Grid1D, ParameterPoint,
                           TimeDiscretization)
from gnatrom.pipeline import run_offline, validate_config
from gnatrom.solvers import SolverConfig, solve_fom


def toy_model(num_unknowns=16, length=4.0):
    return BurgersModel(Grid1D(num_nodes=num_unknowns + 1,
                               domain_length=length))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_fom_run():
    """A short full-order run used by several snapshot/solver tests."""
    model = toy_model(num_unknowns=24, length=6.0)
    mu = ParameterPoint(2.0, 0.05)
    time = TimeDiscretization(dt=0.05, num_steps=8)
    traj = solve_fom(mu, model, time)
    return model, mu, time, traj


BENCHMARK_CONFIG = {
    "grid": {"num_nodes": 4001, "domain_length": 100.0},
    "time": {"dt": 0.05, "num_steps": 1000},
    "training_inputs": [[3.0, 0.02], [6.0, 0.05], [9.0, 0.075]],
    "rom": {"n_w": 50, "n_R": 160, "n_J": 70, "procedure": 2},
    "greedy": {"target_nodes": 160, "working_columns": 70, "seed_nodes": [0]},
}

ONLINE_MU = ParameterPoint(4.5, 0.038)


def _source_digest():
    src = pathlib.Path(__file__).resolve().parents[1] / "src" / "gnatrom"
    digest = hashlib.sha256()
    for path in sorted(src.glob("*.py")):
        digest.update(path.read_bytes())
    return digest.hexdigest()[:16]


@pytest.fixture(scope="session")
def benchmark_run(tmp_path_factory):
    """Offline pipeline at the full benchmark size, plus the tier-I
    reference at the online input.  Expensive; built once per session and
    reusable across sessions through GNATROM_TEST_CACHE=<dir>."""
    cfg = validate_config(BENCHMARK_CONFIG)
    key = hashlib.sha256(
        (json.dumps(cfg, sort_keys=True) + _source_digest()).encode()
    ).hexdigest()[:16]
    cache_root = os.environ.get("GNATROM_TEST_CACHE")
    if cache_root:
        outdir = pathlib.Path(cache_root) / f"benchmark-{key}"
    else:
        outdir = tmp_path_factory.mktemp("benchmark")
    manifest_path = outdir / "manifest.json"
    reference_path = outdir / "reference_fom.npy"
    if not (manifest_path.exists() and reference_path.exists()):
        outdir.mkdir(parents=True, exist_ok=True)
        run_offline(cfg, str(outdir))
        model, time, solver, _ = _benchmark_problem(cfg)
        reference = solve_fom(ONLINE_MU, model, time, solver)
        np.save(reference_path, reference.states)
    return {"dir": outdir, "config": cfg,
            "reference_states": np.load(reference_path)}


def _benchmark_problem(cfg):
    from gnatrom.pipeline import _build_problem
    return _build_problem(cfg)
