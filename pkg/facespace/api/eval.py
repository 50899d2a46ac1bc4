"""
Disentanglement and semantics metrics at vector scale: linear probes for identity
leakage, silhouette of identity descriptors, zeroed-descriptor decoding, motion
interpolation and a 2D principal-component projection.
"""

from __future__ import annotations

# Typing
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union
from os import PathLike

# Internal
from facespace.autodiff import Tensor, add, no_grad
from facespace.constants import EVAL_DIR, MIN_PROBE_SAMPLES
from facespace.errors import ContractError, DimensionError, PathError
from facespace.objects import ModelState, SubspaceDescriptors, SyntheticSample
from facespace.utils.formats import write_table
from .model import encode, generate
from .subspace import interpolate_motion, zero_descriptor
from .synthdata import dataset_arrays
from .types import BasisRow, ClusterRow, ProbeRow, ProjectionRow, ZeroedRow

# External
from pathlib import Path
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import silhouette_samples
from sklearn.model_selection import train_test_split
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler
import logging
import numpy as np

logger = logging.getLogger(__name__)

Descriptors = Union[np.ndarray, Tensor, Sequence[Tensor]]

MAX_RESPLITS = 100
# Relative eigenvalue floor below which a principal direction counts as empty.
VARIANCE_FLOOR = 1e-10


def _as_matrix(descriptors: Descriptors) -> np.ndarray:
    if isinstance(descriptors, Tensor):
        values = descriptors.data
    elif isinstance(descriptors, np.ndarray):
        values = descriptors
    else:
        values = np.stack([d.data if isinstance(d, Tensor) else d for d in descriptors])
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError("descriptors", values.shape)
    return values


@dataclass(frozen=True)
class ProbeReport:
    """
    Accuracy of a linear classifier predicting identity from frozen descriptors.

    :ivar target: What was probed, e.g. ``"identity-from-w_m"``.
    :ivar train_accuracy: Accuracy on the 80% training split.
    :ivar test_accuracy: Accuracy on the 20% held-out split.
    :ivar chance: ``1/C``.
    :ivar split_seed: Seed of the split actually used (after resplits).
    """

    target: str
    train_accuracy: float
    test_accuracy: float
    chance: float
    split_seed: int

    def as_row(self) -> ProbeRow:
        return {
            "target": self.target,
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "chance": self.chance,
            "split_seed": self.split_seed,
        }


def linear_probe(
    descriptors: Descriptors,
    labels: Sequence[int],
    split_seed: int = 0,
    target: str = "identity",
    max_iter: int = 10000,
    tol: float = 1e-6,
) -> ProbeReport:
    """Fit a multinomial logistic regression on 80% of the descriptors and score
    it on the rest.

    Args:
        `descriptors` (numpy.ndarray | Sequence[Tensor]): One descriptor per sample.
        `labels` (Sequence[int]): Identity label of every sample.
        `split_seed` (int): Seed of the train/test split. When a class is
            missing from the training split, the next seed is tried.
        `target` (str): Name recorded in the report.
        `max_iter` (int): Solver iteration cap.
        `tol` (float): Solver convergence tolerance.

    Returns:
        ProbeReport: Train and test accuracy.
    """
    x = _as_matrix(descriptors)
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] != y.shape[0]:
        raise DimensionError("linear_probe", x.shape, y.shape)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise ContractError("linear probe needs at least 2 identities")
    if counts.min() < MIN_PROBE_SAMPLES:
        raise ContractError(
            f"linear probe needs at least {MIN_PROBE_SAMPLES} samples per identity"
        )

    seed = split_seed
    for _ in range(MAX_RESPLITS):
        x_train, x_test, y_train, y_test = train_test_split(
            x, y, test_size=0.2, random_state=seed, stratify=y
        )
        if np.unique(y_train).size == classes.size:
            break
        logger.warning("split %d misses a class in training, resplitting", seed)
        seed += 1
    else:
        raise ContractError(f"no split with every class after {MAX_RESPLITS} tries")

    probe = make_pipeline(
        StandardScaler(), LogisticRegression(max_iter=max_iter, tol=tol)
    )
    probe.fit(x_train, y_train)
    report = ProbeReport(
        target=target,
        train_accuracy=float(probe.score(x_train, y_train)),
        test_accuracy=float(probe.score(x_test, y_test)),
        chance=1.0 / classes.size,
        split_seed=seed,
    )
    logger.debug("probe %s: test accuracy %.3f", target, report.test_accuracy)
    return report


@dataclass(frozen=True)
class ClusterReport:
    """
    Silhouette of descriptors grouped by identity, plus per-identity spread.

    :ivar silhouette: Mean silhouette over all samples, in ``[-1, 1]``.
    :ivar labels: The identities, sorted.
    :ivar counts: Samples per identity.
    :ivar per_identity: Mean silhouette of each identity's samples.
    :ivar intra_distance: Mean distance of each identity's samples to its
        centroid.
    :ivar nearest_centroid_distance: Distance from each centroid to the nearest
        other centroid.
    """

    silhouette: float
    labels: np.ndarray
    counts: np.ndarray
    per_identity: np.ndarray
    intra_distance: np.ndarray
    nearest_centroid_distance: np.ndarray

    def rows(self) -> List[ClusterRow]:
        rows: List[ClusterRow] = [
            {
                "identity": "all",
                "count": int(self.counts.sum()),
                "silhouette": self.silhouette,
                "intra_distance": float(
                    np.average(self.intra_distance, weights=self.counts)
                ),
                "nearest_centroid_distance": float(
                    np.mean(self.nearest_centroid_distance)
                ),
            }
        ]
        for i, label in enumerate(self.labels):
            rows.append(
                {
                    "identity": str(int(label)),
                    "count": int(self.counts[i]),
                    "silhouette": float(self.per_identity[i]),
                    "intra_distance": float(self.intra_distance[i]),
                    "nearest_centroid_distance": float(
                        self.nearest_centroid_distance[i]
                    ),
                }
            )
        return rows


def silhouette(descriptors: Descriptors, labels: Sequence[int]) -> ClusterReport:
    """Euclidean silhouette of ``descriptors`` grouped by ``labels``. Samples that
    are alone in their group score 0."""
    x = _as_matrix(descriptors)
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] != y.shape[0]:
        raise DimensionError("silhouette", x.shape, y.shape)
    classes, inverse, counts = np.unique(y, return_inverse=True, return_counts=True)
    if classes.size < 2:
        raise ContractError("silhouette needs at least 2 identities")

    if classes.size == y.size:
        scores = np.zeros(y.size)
    else:
        scores = silhouette_samples(x, y, metric="euclidean")

    centroids = np.stack([x[inverse == k].mean(axis=0) for k in range(classes.size)])
    intra = np.array(
        [
            np.linalg.norm(x[inverse == k] - centroids[k], axis=1).mean()
            for k in range(classes.size)
        ]
    )
    gaps = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    np.fill_diagonal(gaps, np.inf)
    per_identity = np.array([scores[inverse == k].mean() for k in range(classes.size)])

    return ClusterReport(
        silhouette=float(scores.mean()),
        labels=classes,
        counts=counts,
        per_identity=per_identity,
        intra_distance=intra,
        nearest_centroid_distance=gaps.min(axis=1),
    )


@dataclass(frozen=True)
class InterpolationSweep:
    """
    Outputs decoded along a straight motion path with the identity held fixed.

    :ivar ts: Interpolation positions ``i/(steps-1)``.
    :ivar outputs: ``steps×M`` decoded observations.
    :ivar path: ``steps×N`` interpolated motion descriptors.
    """

    ts: np.ndarray
    outputs: np.ndarray
    path: np.ndarray

    def smoothness(self) -> float:
        """Largest over mean distance between consecutive outputs."""
        gaps = np.linalg.norm(np.diff(self.outputs, axis=0), axis=1)
        mean = gaps.mean()
        return float(gaps.max() / mean) if mean > 0 else 1.0


def _observation(sample: Union[SyntheticSample, np.ndarray]) -> np.ndarray:
    if isinstance(sample, SyntheticSample):
        return sample.observation
    return np.asarray(sample, dtype=np.float64)


def interpolation_sweep(
    state: ModelState,
    sample_a: Union[SyntheticSample, np.ndarray],
    sample_b: Union[SyntheticSample, np.ndarray],
    steps: int,
) -> InterpolationSweep:
    """Keep ``w_id`` of ``sample_a`` and move ``w_m`` linearly from ``sample_a`` to
    ``sample_b``, decoding each of ``steps`` positions.

    Args:
        `state` (ModelState): The model.
        `sample_a` (SyntheticSample | numpy.ndarray): Start, also the identity.
        `sample_b` (SyntheticSample | numpy.ndarray): End of the motion path.
        `steps` (int): Number of positions, at least 2.

    Returns:
        InterpolationSweep: Positions, outputs and descriptor path. The first
        output equals ``generate`` on ``sample_a``'s own descriptors bitwise.
    """
    if steps < 2:
        raise ContractError(f"interpolation needs at least 2 steps, got {steps}")
    obs_a, obs_b = _observation(sample_a), _observation(sample_b)
    ts = np.array([i / (steps - 1) for i in range(steps)])
    outputs, path = [], []
    with no_grad():
        state.begin_pass()
        da = encode(state, obs_a, obs_a)
        db = encode(state, obs_b, obs_b)
        for t in ts:
            w_m = interpolate_motion(da.w_m, db.w_m, float(t))
            face = add(da.w_id, w_m)
            point = SubspaceDescriptors(da.a_id, da.b_m, da.w_id, w_m, face)
            outputs.append(generate(state, point).data)
            path.append(w_m.data)
    return InterpolationSweep(ts, np.stack(outputs), np.stack(path))


@dataclass(frozen=True)
class PrincipalComponents:
    """Top principal directions of a descriptor set."""

    mean: np.ndarray
    components: np.ndarray
    variances: np.ndarray

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) @ self.components.T


def principal_components(values: np.ndarray, k: int = 2) -> PrincipalComponents:
    """
    The ``k`` leading eigenvectors of the centered covariance, each signed so its
    largest-magnitude entry is positive. Directions with (numerically) zero
    variance are returned as zero vectors.
    """
    x = _as_matrix(values)
    if x.shape[0] < 3:
        raise ContractError(
            f"projection needs at least 3 descriptors, got {x.shape[0]}"
        )
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    floor = VARIANCE_FLOOR * max(float(eigvals.max()), np.finfo(float).tiny)

    components = np.zeros((k, x.shape[1]))
    variances = np.zeros(k)
    for row, index in enumerate(order):
        if eigvals[index] <= floor:
            continue
        vector = eigvecs[:, index]
        if vector[np.argmax(np.abs(vector))] < 0:
            vector = -vector
        components[row] = vector
        variances[row] = eigvals[index]
    return PrincipalComponents(mean, components, variances)


def project_2d(descriptors: Descriptors) -> np.ndarray:
    """``K×2`` coordinates of the descriptors on their top two principal
    components."""
    x = _as_matrix(descriptors)
    return principal_components(x, 2).transform(x)


@dataclass(frozen=True)
class ZeroedReport:
    """
    Nearest-centroid identity accuracy of decoded outputs with the motion
    descriptor zeroed (should be high) and with the identity descriptor zeroed
    (should stay near chance).
    """

    zero_motion_accuracy: float
    zero_identity_accuracy: float
    chance: float

    def rows(self) -> List[ZeroedRow]:
        return [
            {
                "branch": "zero-motion",
                "identity_accuracy": self.zero_motion_accuracy,
                "chance": self.chance,
            },
            {
                "branch": "zero-identity",
                "identity_accuracy": self.zero_identity_accuracy,
                "chance": self.chance,
            },
        ]


def nearest_centroid_accuracy(values: np.ndarray, labels: np.ndarray) -> float:
    """Leave-one-out accuracy of assigning each sample to the closest class
    centroid, its own class centroid computed without it."""
    classes, inverse, counts = np.unique(
        labels, return_inverse=True, return_counts=True
    )
    sums = np.stack([values[inverse == k].sum(axis=0) for k in range(classes.size)])
    correct = 0
    for i, own in enumerate(inverse):
        centroids = sums / counts[:, None]
        if counts[own] > 1:
            centroids = centroids.copy()
            centroids[own] = (sums[own] - values[i]) / (counts[own] - 1)
        distances = np.linalg.norm(centroids - values[i], axis=1)
        correct += int(np.argmin(distances) == own)
    return correct / labels.size


def zeroed_descriptor_eval(
    state: ModelState, samples: Sequence[SyntheticSample]
) -> ZeroedReport:
    """Decode every sample with ``b_m = 0`` and with ``a_id = 0`` and measure how
    well each branch's outputs still group by identity."""
    observations, labels, _, _ = dataset_arrays(samples)
    if np.unique(labels).size < 2:
        raise ContractError("zeroed-descriptor evaluation needs at least 2 identities")
    with no_grad():
        state.begin_pass()
        d = encode(state, observations, observations)
        zero_motion = generate(state, zero_descriptor(d, "motion")).data
        zero_identity = generate(state, zero_descriptor(d, "identity")).data
    return ZeroedReport(
        zero_motion_accuracy=nearest_centroid_accuracy(zero_motion, labels),
        zero_identity_accuracy=nearest_centroid_accuracy(zero_identity, labels),
        chance=1.0 / np.unique(labels).size,
    )


def descriptors(
    state: ModelState, samples: Sequence[SyntheticSample]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Self-reenactment descriptors ``(w_id, w_m, labels)`` of every sample."""
    observations, labels, _, _ = dataset_arrays(samples)
    with no_grad():
        state.begin_pass()
        d = encode(state, observations, observations)
    return d.w_id.numpy(), d.w_m.numpy(), labels


def reconstruction_error(
    state: ModelState, samples: Sequence[SyntheticSample]
) -> float:
    """Mean squared self-reenactment error over every observation entry."""
    observations, _, _, _ = dataset_arrays(samples)
    with no_grad():
        state.begin_pass()
        out = generate(state, encode(state, observations, observations)).data
    return float(np.mean((out - observations) ** 2))


@dataclass(frozen=True)
class BasisReport:
    rows: int
    cols: int
    orthonormality_error: float
    subspace_overlap: float

    def as_row(self) -> BasisRow:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "orthonormality_error": self.orthonormality_error,
            "subspace_overlap": self.subspace_overlap,
        }


def basis_report(matrix: np.ndarray, p: int) -> BasisReport:
    """Largest deviation of ``D·Dᵀ`` from the identity and largest inner product
    between the first ``p`` rows and the rest."""
    d = np.asarray(matrix, dtype=np.float64)
    if d.ndim != 2 or not 0 < p < d.shape[0]:
        raise ContractError(f"cannot split a basis of shape {d.shape} after {p} rows")
    gram = d @ d.T
    return BasisReport(
        rows=d.shape[0],
        cols=d.shape[1],
        orthonormality_error=float(np.max(np.abs(gram - np.eye(d.shape[0])))),
        subspace_overlap=float(np.max(np.abs(gram[:p, p:]))),
    )


@dataclass(frozen=True)
class EvalReport:
    """Everything ``facespace eval`` reports for one checkpoint."""

    identity_probe: ProbeReport
    leakage_probe: ProbeReport
    cluster: ClusterReport
    zeroed: ZeroedReport
    recon_mse: float
    basis: Optional[BasisReport] = None


def evaluate(
    state: ModelState,
    samples: Sequence[SyntheticSample],
    split_seed: int = 0,
    max_iter: int = 10000,
    tol: float = 1e-6,
    basis: Optional[np.ndarray] = None,
) -> EvalReport:
    """Probe both descriptors, cluster ``w_id`` and run the zeroed decoding.

    Args:
        `state` (ModelState): The model.
        `samples` (Sequence[SyntheticSample]): Evaluation samples.
        `split_seed` (int): Probe split seed.
        `max_iter` (int): Probe iteration cap.
        `tol` (float): Probe tolerance.
        `basis` (numpy.ndarray): An exported basis of this model to check for
            orthonormality.

    Returns:
        EvalReport: The combined report.
    """
    checked = None
    if basis is not None:
        if state.basis is None:
            raise ContractError("basis given for a model without subspaces")
        expected = (state.basis.p + state.basis.q, state.basis.n)
        if basis.shape != expected:
            raise DimensionError("basis export", basis.shape, expected)
        checked = basis_report(basis, state.basis.p)
        logger.info(
            "basis orthonormality error %.3g, subspace overlap %.3g",
            checked.orthonormality_error,
            checked.subspace_overlap,
        )
    w_id, w_m, labels = descriptors(state, samples)
    report = EvalReport(
        identity_probe=linear_probe(
            w_id, labels, split_seed, "identity-from-w_id", max_iter, tol
        ),
        leakage_probe=linear_probe(
            w_m, labels, split_seed, "identity-from-w_m", max_iter, tol
        ),
        cluster=silhouette(w_id, labels),
        zeroed=zeroed_descriptor_eval(state, samples),
        recon_mse=reconstruction_error(state, samples),
        basis=checked,
    )
    logger.info(
        "identity probe %.3f, leakage probe %.3f, silhouette %.3f, "
        "zero-motion accuracy %.3f, recon mse %.4g",
        report.identity_probe.test_accuracy,
        report.leakage_probe.test_accuracy,
        report.cluster.silhouette,
        report.zeroed.zero_motion_accuracy,
        report.recon_mse,
    )
    return report


def write_eval(report: EvalReport, directory: Union[str, PathLike]) -> Path:
    """Write ``probe.csv``, ``cluster.csv``, ``zeroed.csv`` and, when a basis was
    checked, ``basis.csv`` under ``directory/eval``."""
    out = _eval_dir(directory)
    write_table(
        out / "probe.csv",
        [report.identity_probe.as_row(), report.leakage_probe.as_row()],
    )
    write_table(out / "cluster.csv", report.cluster.rows())
    write_table(out / "zeroed.csv", report.zeroed.rows())
    if report.basis is not None:
        write_table(out / "basis.csv", [report.basis.as_row()])
    return out


def write_projection(
    coords: np.ndarray, labels: Sequence[int], directory: Union[str, PathLike]
) -> Path:
    """Write ``projection.csv`` with ``x,y,identity_label`` rows."""
    rows: List[ProjectionRow] = [
        {"x": float(x), "y": float(y), "identity_label": int(label)}
        for (x, y), label in zip(coords, labels)
    ]
    path = _eval_dir(directory) / "projection.csv"
    write_table(path, rows)
    return path


def write_sweep(sweep: InterpolationSweep, directory: Union[str, PathLike]) -> Path:
    """Write the decoded sweep to ``interpolation.csv`` and the motion path to
    ``interpolation_path.csv``; both start with a ``t`` column."""
    out = _eval_dir(directory)
    write_table(out / "interpolation.csv", _matrix_rows(sweep.ts, sweep.outputs, "o"))
    write_table(
        out / "interpolation_path.csv", _matrix_rows(sweep.ts, sweep.path, "w_m")
    )
    return out


def _matrix_rows(
    ts: np.ndarray, values: np.ndarray, prefix: str
) -> List[Dict[str, float]]:
    rows = []
    for t, row in zip(ts, values):
        entry = {"t": float(t)}
        entry.update({f"{prefix}{j}": float(v) for j, v in enumerate(row)})
        rows.append(entry)
    return rows


def _eval_dir(directory: Union[str, PathLike]) -> Path:
    out = Path(directory) / EVAL_DIR
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise PathError(str(out), e.strerror or str(e)) from e
    return out
