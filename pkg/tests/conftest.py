"""Shared fixtures.

The expensive fixture here runs the four coefficient-ablation presets
plus one no-covariance twin of the full run, once per session. Several
acceptance tests read from the same artifacts, so the ~3 minutes of
training happen exactly once.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from vicreg.cli import PRESET_FAMILIES, ExperimentPreset, run_preset
from vicreg.config import ExperimentConfig, default_experiment_config


def pytest_collection_modifyitems(items):
    # Run the acceptance module last so the quick unit tests report first
    # and the long training fixture is only paid for at the end.
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


@pytest.fixture(scope="session")
def ablation_artifacts(tmp_path_factory):
    """Train the coefficient presets and a nu=0 twin; return artifacts.

    Returns a dict with one entry per run name holding the verdict, the
    metrics rows, and the output directory, plus "family_seconds" for
    the wall time of the four coefficient presets alone.
    """
    root = tmp_path_factory.mktemp("ablations")
    runs = {}
    started = time.perf_counter()
    for preset in PRESET_FAMILIES["coefficients"]:
        out_dir = root / preset.name
        verdict, rows = run_preset(preset, out_dir)
        runs[preset.name] = {
            "verdict": verdict,
            "rows": rows,
            "dir": out_dir,
            "config": preset.config,
        }
    family_seconds = time.perf_counter() - started

    base = default_experiment_config()
    coeffs = replace(base.train.coeffs, lambda_=25.0, mu=25.0, nu=0.0)
    no_cov_cfg = ExperimentConfig(
        base.data, replace(base.train, coeffs=coeffs, base_lr=0.005)
    )
    preset = ExperimentPreset("no_cov", no_cov_cfg, None)
    out_dir = root / "no_cov"
    verdict, rows = run_preset(preset, out_dir)
    runs["no_cov"] = {
        "verdict": verdict,
        "rows": rows,
        "dir": out_dir,
        "config": no_cov_cfg,
    }

    runs["family_seconds"] = family_seconds
    return runs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
