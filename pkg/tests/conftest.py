"""Shared fixtures: instances and cached preset runs (one execution each)."""

from __future__ import annotations

import numpy as np
import pytest

from tracksplit.config import build_instance, preset_config
from tracksplit.outer import run_single_loop


@pytest.fixture(scope="session")
def bq1():
    return build_instance(preset_config("bq1_single_loop"))


@pytest.fixture(scope="session")
def poisson():
    return build_instance(preset_config("poisson_single_loop"))


def _run(name, **overrides):
    cfg = preset_config(name)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    inst = build_instance(cfg)
    return run_single_loop(inst, cfg), inst, cfg


@pytest.fixture(scope="session")
def bq1_run_200():
    """BQ1 single-loop run pinned to exactly 200 iterations."""
    trace, inst, cfg = _run("bq1_single_loop", budget=200, tolerance=0.0)
    assert trace.n_iterations == 200
    return trace


@pytest.fixture(scope="session")
def bq1_run():
    return _run("bq1_single_loop")[0]


@pytest.fixture(scope="session")
def bq1_certified_run():
    return _run("bq1_certified")[0]


@pytest.fixture(scope="session")
def bq1_baseline_run():
    return _run("bq1_baseline")[0]


@pytest.fixture(scope="session")
def bq1_coldstart_run():
    """BQ1 run with nonzero initial tracking distances (x0 away from 0)."""
    trace, _, _ = _run("bq1_single_loop", x0=[1.0], budget=200, tolerance=0.0)
    return trace


@pytest.fixture(scope="session")
def poisson_run():
    return _run("poisson_single_loop")[0]


@pytest.fixture(scope="session")
def poisson_baseline_run():
    return _run("poisson_baseline")[0]


@pytest.fixture(scope="session")
def pdps_saddle_run():
    return _run("pdps_saddle_1d")[0]


@pytest.fixture(scope="session")
def pdps_mismatch_run():
    return _run("pdps_mismatch_small")[0]


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
