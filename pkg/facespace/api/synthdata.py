"""
Synthetic benchmark with known ground truth: every observation is a fixed mix
of a per-identity code and a per-frame motion code, so identity similarity and
disentanglement can be checked against the true factors.
"""

from __future__ import annotations

# Typing
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

# Internal
from facespace.constants import DEGENERACY_TOLERANCE
from facespace.errors import ContractError, NumericError
from facespace.objects import SyntheticSample, WorldSpec
from facespace.utils.linalg import column_residuals

# External
from functools import lru_cache
import logging
import numpy as np

logger = logging.getLogger(__name__)

MAX_MIXING_RETRIES = 10
BATCH_MODES = ("self-reenact", "cross-pair")


@dataclass(frozen=True)
class Mixer:
    """
    The fixed map from ground-truth factors to observations.

    :ivar a: ``M×dim_zid`` identity mixing matrix (full column rank).
    :vartype a: numpy.ndarray

    :ivar b: ``M×dim_zm`` motion mixing matrix (full column rank).
    :vartype b: numpy.ndarray

    :ivar hidden: ``M×M`` weights of the tanh layer, nonlinear mixing only.
    :vartype hidden: Optional[numpy.ndarray]

    :ivar readout: ``M×M`` readout after the tanh layer, nonlinear mixing only.
    :vartype readout: Optional[numpy.ndarray]
    """

    a: np.ndarray
    b: np.ndarray
    hidden: Optional[np.ndarray] = None
    readout: Optional[np.ndarray] = None

    def mix(self, z_id: np.ndarray, z_m: np.ndarray) -> np.ndarray:
        """Noise-free observations for factor rows ``z_id`` and ``z_m``."""
        linear = z_id @ self.a.T + z_m @ self.b.T
        if self.hidden is None or self.readout is None:
            return linear
        return np.tanh(linear @ self.hidden.T) @ self.readout.T


def _full_column_rank(matrix: np.ndarray) -> bool:
    return bool(np.min(column_residuals(matrix)) >= DEGENERACY_TOLERANCE)


def make_mixer(spec: WorldSpec) -> Mixer:
    """Draw the mixing matrices of ``spec``, retrying with the next sub-seed when
    a draw is rank deficient."""
    scale = 1.0 / np.sqrt(spec.dim_zid + spec.dim_zm)
    for attempt in range(MAX_MIXING_RETRIES + 1):
        rng = np.random.default_rng([spec.seed, 1, attempt])
        a = rng.normal(0.0, scale, size=(spec.m, spec.dim_zid))
        b = rng.normal(0.0, scale, size=(spec.m, spec.dim_zm))
        if _full_column_rank(a) and _full_column_rank(b):
            break
        logger.warning("mixing draw %d is rank deficient, resampling", attempt)
    else:
        raise NumericError(
            f"no full-rank mixing matrices after {MAX_MIXING_RETRIES} retries"
        )

    if spec.mixing == "linear":
        return Mixer(a, b)
    width = spec.m
    hidden = rng.normal(0.0, 1.0 / np.sqrt(width), size=(width, width))
    readout = rng.normal(0.0, 1.0 / np.sqrt(width), size=(width, width))
    return Mixer(a, b, hidden, readout)


def generate_world(spec: WorldSpec) -> List[SyntheticSample]:
    """Generate the benchmark described by ``spec``.

    Args:
        `spec` (WorldSpec): Sizes, mixing kind, noise level and seed.

    Returns:
        List[SyntheticSample]: Identity-major, frame-minor list of samples.
    """
    mixer = make_mixer(spec)
    c, frames = spec.num_identities, spec.frames_per_identity
    factors = np.random.default_rng([spec.seed, 2])
    z_ids = factors.normal(size=(c, spec.dim_zid))
    z_ms = factors.normal(size=(c * frames, spec.dim_zm))
    labels = np.repeat(np.arange(c), frames)

    observations = mixer.mix(z_ids[labels], z_ms)
    if spec.noise_sigma > 0:
        noise = np.random.default_rng([spec.seed, 3])
        observations = observations + noise.normal(
            0.0, spec.noise_sigma, size=observations.shape
        )

    samples = [
        SyntheticSample(
            observation=observations[i].copy(),
            identity_label=int(labels[i]),
            z_id=z_ids[labels[i]].copy(),
            z_m=z_ms[i].copy(),
        )
        for i in range(c * frames)
    ]
    logger.info(
        "generated %d samples (%d identities, %s mixing)", len(samples), c, spec.mixing
    )
    return samples


@dataclass(frozen=True)
class PairedBatch:
    """
    A training or evaluation batch. ``pairs`` follows the fixed scheme
    ``(t, T+t)`` with ``T = B/2``.

    :ivar source_indices: Dataset index of every source sample.
    :vartype source_indices: numpy.ndarray

    :ivar driving_indices: Dataset index of every driving sample.
    :vartype driving_indices: numpy.ndarray

    :ivar sources: ``B×M`` source observations.
    :vartype sources: numpy.ndarray

    :ivar drivings: ``B×M`` driving observations.
    :vartype drivings: numpy.ndarray

    :ivar source_labels: Identity label of every source.
    :vartype source_labels: numpy.ndarray

    :ivar driving_labels: Identity label of every driving sample.
    :vartype driving_labels: numpy.ndarray

    :ivar source_z_id: ``B×dim_zid`` ground-truth identity codes of the sources.
    :vartype source_z_id: numpy.ndarray

    :ivar pairs: Index pairs used by the identity similarity loss.
    :vartype pairs: List[Tuple[int, int]]
    """

    source_indices: np.ndarray
    driving_indices: np.ndarray
    sources: np.ndarray
    drivings: np.ndarray
    source_labels: np.ndarray
    driving_labels: np.ndarray
    source_z_id: np.ndarray
    pairs: List[Tuple[int, int]]

    def __len__(self) -> int:
        return int(self.source_indices.shape[0])


@lru_cache(maxsize=4096)
def _frame_permutation(seed: int, identity: int, epoch: int, count: int) -> np.ndarray:
    return np.random.default_rng([seed, 11, identity, epoch]).permutation(count)


class BatchStream:
    """
    Deterministic, random-access stream of batches.

    Samples are drawn round-robin over identities in a fixed (seeded) identity
    order, each identity cycling through a fresh permutation of its frames, so
    any run of whole batches contains every identity within one of the mean
    count. Each batch is then shuffled internally. Batch ``k`` depends only on
    ``(seed, k)``, which makes resuming exact.
    """

    def __init__(
        self,
        dataset: Sequence[SyntheticSample],
        batch_size: int,
        mode: str = "self-reenact",
        seed: int = 0,
    ):
        """
        :param dataset: The samples to draw from.
        :type dataset: Sequence[SyntheticSample]
        :param batch_size: Even batch size ``B`` not larger than the dataset.
        :type batch_size: int
        :param mode: ``"self-reenact"`` (source = driving) or ``"cross-pair"``
            (driving from a different identity).
        :type mode: str
        :param seed: Stream seed.
        :type seed: int
        """
        if batch_size <= 0 or batch_size % 2:
            raise ContractError(
                f"batch size must be positive and even, got {batch_size}"
            )
        if batch_size > len(dataset):
            raise ContractError(
                f"batch size {batch_size} exceeds dataset size {len(dataset)}"
            )
        if mode not in BATCH_MODES:
            raise ContractError(f"unknown batch mode {mode!r}, expected {BATCH_MODES}")

        self.batch_size = batch_size
        self.mode = mode
        self.seed = int(seed)
        self._observations = np.stack([s.observation for s in dataset])
        self._labels = np.array([s.identity_label for s in dataset], dtype=np.int64)
        self._z_id = np.stack([s.z_id for s in dataset])

        present = np.unique(self._labels)
        if mode == "cross-pair" and present.size < 2:
            raise ContractError("cross-pair batches need at least 2 identities")
        self._frames: Dict[int, np.ndarray] = {
            int(c): np.flatnonzero(self._labels == c) for c in present
        }
        order = np.random.default_rng([self.seed, 10]).permutation(present.size)
        self._order = present[order]

    def _dataset_index(self, position: int) -> int:
        count = self._order.size
        identity = int(self._order[position % count])
        occurrence = position // count
        frames = self._frames[identity]
        epoch, k = divmod(occurrence, frames.size)
        perm = _frame_permutation(self.seed, identity, epoch, frames.size)
        return int(frames[perm[k]])

    def batch(self, k: int) -> PairedBatch:
        """Return batch number ``k`` (zero-based)."""
        if k < 0:
            raise ContractError(f"batch index must be non-negative, got {k}")
        size = self.batch_size
        start = k * size
        indices = np.array(
            [self._dataset_index(start + i) for i in range(size)], dtype=np.int64
        )
        rng = np.random.default_rng([self.seed, 12, k])
        indices = indices[rng.permutation(size)]

        if self.mode == "self-reenact":
            drivers = indices
        else:
            identities = self._order
            drivers = np.empty_like(indices)
            for i, index in enumerate(indices):
                position = int(np.flatnonzero(identities == self._labels[index])[0])
                offset = int(rng.integers(1, identities.size))
                other = int(identities[(position + offset) % identities.size])
                frames = self._frames[other]
                drivers[i] = frames[int(rng.integers(frames.size))]

        return PairedBatch(
            source_indices=indices,
            driving_indices=drivers,
            sources=self._observations[indices],
            drivings=self._observations[drivers],
            source_labels=self._labels[indices],
            driving_labels=self._labels[drivers],
            source_z_id=self._z_id[indices],
            pairs=[(t, size // 2 + t) for t in range(size // 2)],
        )

    def iterate(self, start: int = 0) -> Iterator[PairedBatch]:
        k = start
        while True:
            yield self.batch(k)
            k += 1


def make_batches(
    dataset: Sequence[SyntheticSample],
    batch_size: int,
    mode: str = "self-reenact",
    seed: int = 0,
    start: int = 0,
) -> Iterator[PairedBatch]:
    """Endless stream of :class:`PairedBatch` beginning at batch ``start``.

    Args:
        `dataset` (Sequence[SyntheticSample]): The samples.
        `batch_size` (int): Even batch size ``B``.
        `mode` (str): ``"self-reenact"`` or ``"cross-pair"``.
        `seed` (int): Stream seed; equal seeds give bitwise-equal streams.
        `start` (int): Index of the first batch to yield.

    Returns:
        Iterator[PairedBatch]: The batches, in order.
    """
    return BatchStream(dataset, batch_size, mode, seed).iterate(start)


def dataset_arrays(
    dataset: Sequence[SyntheticSample],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Stack a dataset into ``(observations, labels, z_id, z_m)`` arrays."""
    if not dataset:
        raise ContractError("empty dataset")
    return (
        np.stack([s.observation for s in dataset]),
        np.array([s.identity_label for s in dataset], dtype=np.int64),
        np.stack([s.z_id for s in dataset]),
        np.stack([s.z_m for s in dataset]),
    )
