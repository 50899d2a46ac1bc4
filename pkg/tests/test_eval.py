from facespace.api.eval import (
    evaluate,
    interpolation_sweep,
    linear_probe,
    nearest_centroid_accuracy,
    principal_components,
    project_2d,
    silhouette,
    write_eval,
    write_projection,
    write_sweep,
    zeroed_descriptor_eval,
)
from facespace.api.model import encode, generate
from facespace.api.synthdata import generate_world
from facespace.autodiff import no_grad
from facespace.errors import ContractError
from facespace.objects import ModelDims, ModelState, WorldSpec

import numpy as np
import pandas as pd
import pytest
from sklearn.metrics import silhouette_score

WORLD = WorldSpec(num_identities=4, frames_per_identity=8, dim_zid=2, dim_zm=2, m=8)


def small_state(use_basis: bool = True) -> ModelState:
    dims = ModelDims(p=2, q=2, n=8, m=8, num_identities=4, hidden=8)
    return ModelState.create(dims, np.random.default_rng(0), use_basis)


def test_probe_on_one_hot_descriptors():
    """Descriptors that encode the label exactly are probed perfectly."""
    labels = np.repeat(np.arange(4), 10)
    report = linear_probe(np.eye(4)[labels], labels)
    assert report.train_accuracy == 1.0
    assert report.test_accuracy == 1.0
    assert report.chance == 0.25


def test_probe_on_constant_descriptors():
    """Constant descriptors carry no identity."""
    labels = np.repeat(np.arange(4), 10)
    report = linear_probe(np.ones((40, 3)), labels)
    assert report.test_accuracy <= 0.25 + 1e-12


def test_probe_on_noise_is_near_chance():
    """Pure noise probes at chance for every seed."""
    labels = np.repeat(np.arange(16), 40)
    for seed in range(5):
        noise = np.random.default_rng(seed).normal(size=(640, 8))
        report = linear_probe(noise, labels, split_seed=seed)
        assert abs(report.test_accuracy - 1 / 16) <= 0.08


def test_probe_contracts():
    """Probes need matching rows, two classes and four samples per class."""
    labels = np.repeat(np.arange(4), 10)
    with pytest.raises(ContractError):
        linear_probe(np.zeros((39, 2)), labels)
    with pytest.raises(ContractError):
        linear_probe(np.zeros((10, 2)), np.zeros(10, dtype=int))
    with pytest.raises(ContractError):
        linear_probe(np.zeros((6, 2)), np.array([0, 0, 0, 1, 1, 1]))


def test_silhouette_of_separated_clusters():
    """Two tight, distant clusters score close to 1."""
    rng = np.random.default_rng(1)
    values = np.concatenate(
        [rng.normal(0, 0.01, (20, 3)), rng.normal(0, 0.01, (20, 3)) + 10.0]
    )
    labels = np.repeat([0, 1], 20)
    report = silhouette(values, labels)
    assert report.silhouette > 0.9
    assert report.counts.tolist() == [20, 20]
    assert np.all(report.nearest_centroid_distance > 17)
    assert len(report.rows()) == 3
    assert report.rows()[0]["identity"] == "all"


def test_silhouette_matches_sklearn_score():
    """The mean silhouette equals scikit-learn's silhouette_score."""
    rng = np.random.default_rng(5)
    values = rng.normal(size=(30, 4))
    labels = np.repeat(np.arange(3), 10)
    values[labels == 1] += 2.0
    expected = silhouette_score(values, labels, metric="euclidean")
    assert silhouette(values, labels).silhouette == pytest.approx(expected, abs=1e-12)


def test_silhouette_of_singletons_is_zero():
    """Samples alone in their identity score 0."""
    report = silhouette(np.arange(12.0).reshape(4, 3), [0, 1, 2, 3])
    assert report.silhouette == 0.0
    with pytest.raises(ContractError):
        silhouette(np.zeros((3, 2)), [1, 1, 1])


def test_silhouette_of_shuffled_labels_is_near_zero():
    """Random labels on unstructured data give no clustering."""
    for seed in range(5):
        rng = np.random.default_rng(seed)
        values = rng.normal(size=(200, 4))
        labels = rng.permutation(np.repeat(np.arange(4), 50))
        assert abs(silhouette(values, labels).silhouette) < 0.1


def test_silhouette_of_duplicated_identity():
    """One identity listed under two labels cannot be separated."""
    points = np.random.default_rng(4).normal(size=(10, 3))
    values = np.concatenate([points, points])
    assert silhouette(values, np.repeat([0, 1], 10)).silhouette <= 0


def test_principal_component_signs():
    """Components point so that their largest entry is positive."""
    direction = np.array([0.0, 0.6, -0.8])
    values = np.outer(np.linspace(-2, 2, 5), direction)
    pcs = principal_components(values)
    assert np.allclose(pcs.components[0], -direction, atol=1e-12)
    assert np.array_equal(pcs.components[1], np.zeros(3))
    assert pcs.variances[1] == 0.0
    coords = project_2d(values)
    assert coords.shape == (5, 2)
    assert np.allclose(np.abs(coords[:, 0]), np.abs(np.linspace(-2, 2, 5)))
    assert np.array_equal(coords[:, 1], np.zeros(5))


def test_projection_of_identical_points_is_the_origin():
    """Points without spread all land on (0, 0)."""
    values = np.tile([1.5, -2.0, 0.25, 8.0], (6, 1))
    assert np.array_equal(project_2d(values), np.zeros((6, 2)))


def test_projection_ignores_translation():
    """Adding a constant vector leaves the projection unchanged, including a
    low-variance second axis."""
    rng = np.random.default_rng(3)
    values = rng.normal(size=(20, 4)) * [1.0, 1e-3, 1e-5, 1e-6]
    shifted = project_2d(values + 1e3)
    assert np.allclose(project_2d(values), shifted, rtol=0.0, atol=1e-9)
    assert np.ptp(shifted[:, 1]) > 1e-3


def test_projection_matches_truncated_svd():
    """Two principal components reconstruct as well as the rank-2 SVD."""
    rng = np.random.default_rng(4)
    values = rng.normal(size=(50, 16))
    centered = values - values.mean(axis=0)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)

    pcs = principal_components(values)
    coords = pcs.transform(values)
    error = np.sum((centered - coords @ pcs.components) ** 2)
    assert error == pytest.approx(np.sum(s[2:] ** 2), rel=1e-6)
    assert np.allclose(np.abs(coords), np.abs(u[:, :2] * s[:2]), atol=1e-9)


def test_projection_needs_three_rows():
    """PCA of fewer than three descriptors is refused."""
    with pytest.raises(ContractError):
        project_2d(np.zeros((2, 4)))


def test_nearest_centroid_accuracy():
    """Separated classes are recognized; interleaved ones are not."""
    labels = np.repeat([0, 1], 5)
    apart = np.concatenate([np.zeros((5, 2)), np.full((5, 2), 5.0)])
    apart += np.random.default_rng(2).normal(0, 0.1, apart.shape)
    assert nearest_centroid_accuracy(apart, labels) == 1.0
    mixed = np.tile([[0.0], [1.0]], (5, 1))
    assert nearest_centroid_accuracy(mixed, labels) < 1.0


def test_interpolation_starts_at_the_source():
    """The first output is the self-reenactment of the start sample, bitwise."""
    state = small_state()
    samples = generate_world(WORLD)
    sweep = interpolation_sweep(state, samples[0], samples[9], 5)
    with no_grad():
        state.begin_pass()
        obs = samples[0].observation
        expected = generate(state, encode(state, obs, obs)).data
    assert np.array_equal(sweep.outputs[0], expected)
    assert sweep.ts.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert sweep.outputs.shape == (5, 8)
    assert sweep.smoothness() >= 1.0


def test_interpolation_path_is_linear():
    """Motion descriptors move on a straight line between the endpoints."""
    state = small_state()
    samples = generate_world(WORLD)
    sweep = interpolation_sweep(state, samples[1], samples[20], 4)
    start, end = sweep.path[0], sweep.path[-1]
    for t, point in zip(sweep.ts, sweep.path):
        assert np.allclose(point, (1 - t) * start + t * end, atol=1e-12)
    with pytest.raises(ContractError):
        interpolation_sweep(state, samples[0], samples[1], 1)


def test_zeroed_descriptor_eval():
    """Both zeroed branches give accuracies within [0, 1]."""
    report = zeroed_descriptor_eval(small_state(), generate_world(WORLD))
    assert 0.0 <= report.zero_motion_accuracy <= 1.0
    assert 0.0 <= report.zero_identity_accuracy <= 1.0
    assert report.chance == 0.25
    assert [r["branch"] for r in report.rows()] == ["zero-motion", "zero-identity"]


def test_evaluate_writes_reports(tmp_path):
    """Evaluation writes the probe, cluster and zeroed tables."""
    samples = generate_world(WORLD)
    report = evaluate(small_state(), samples)
    assert report.recon_mse > 0
    out = write_eval(report, tmp_path)
    probe = pd.read_csv(out / "probe.csv")
    assert probe["target"].tolist() == ["identity-from-w_id", "identity-from-w_m"]
    assert len(pd.read_csv(out / "cluster.csv")) == 5
    assert len(pd.read_csv(out / "zeroed.csv")) == 2


def test_projection_and_sweep_files(tmp_path):
    """Projection and sweep tables land in eval/."""
    state = small_state(use_basis=False)
    samples = generate_world(WORLD)
    coords = np.random.default_rng(3).normal(size=(6, 2))
    path = write_projection(coords, [0, 0, 1, 1, 2, 2], tmp_path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["x", "y", "identity_label"]
    assert np.allclose(frame[["x", "y"]].to_numpy(), coords)

    sweep = interpolation_sweep(state, samples[0], samples[5], 3)
    out = write_sweep(sweep, tmp_path)
    outputs = pd.read_csv(out / "interpolation.csv")
    assert list(outputs.columns) == ["t"] + [f"o{j}" for j in range(8)]
    assert pd.read_csv(out / "interpolation_path.csv").shape == (3, 9)
