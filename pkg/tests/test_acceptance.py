"""
End-to-end runs on the default synthetic benchmark. These train real models and
take minutes; deselect them with ``-m "not slow"``.
"""

from facespace.api.ablation import run_ablation
from facespace.api.eval import evaluate, interpolation_sweep
from facespace.api.synthdata import generate_world
from facespace.api.training import run
from facespace.utils.config import load_config

import pandas as pd
import pytest

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    config = load_config(
        overrides=["train.steps=6000", "train.progress=false", "train.log_every=0"]
    )
    out = tmp_path_factory.mktemp("semantics")
    final = run(config, out)
    return config, final, out


def test_full_model_separates_identity(trained):
    """w_id predicts identity; w_m stays near chance."""
    config, final, _ = trained
    samples = generate_world(config.world)
    report = evaluate(final.state, samples)
    chance = 1 / config.world.num_identities
    assert report.identity_probe.test_accuracy >= 0.90
    assert report.leakage_probe.test_accuracy <= chance + 0.10
    assert report.identity_probe.test_accuracy >= report.leakage_probe.test_accuracy
    assert report.zeroed.zero_motion_accuracy >= 0.9


def test_training_reduces_reconstruction(trained):
    """After 200 steps the reconstruction is far below the first step's."""
    _, _, out = trained
    metrics = pd.read_csv(out / "metrics.csv")
    assert metrics["L_recon"].iloc[199] < 0.1 * metrics["L_recon"].iloc[0]


def test_trained_interpolation_is_smooth(trained):
    """Consecutive outputs of a 16-step sweep are evenly spaced."""
    config, final, _ = trained
    samples = generate_world(config.world)
    sweep = interpolation_sweep(final.state, samples[0], samples[70], 16)
    assert sweep.smoothness() < 3.0


def test_ablation_ordering(tmp_path):
    """Each clause of the ablation comparison holds for most seeds."""
    config = load_config(
        overrides=["train.steps=3000", "train.progress=false", "train.log_every=0"]
    )
    results, summary = run_ablation(config, tmp_path)
    assert len(results) == 12
    assert (tmp_path / "ablation.csv").exists()
    assert all(summary.passed.values()), summary
