"""
The optimization loop: one generator update on the weighted objective followed
by one update of the identity discriminator, repeated over a deterministic batch
stream, with checkpoints that resume bit for bit.
"""

from __future__ import annotations

# Typing
from dataclasses import dataclass, field
from typing import (
    TYPE_CHECKING,
    Callable,
    Dict,
    List,
    Optional,
    Sequence,
    TypeVar,
    Union,
)
from os import PathLike

if TYPE_CHECKING:
    from facespace.utils.config import RunConfig

# Internal
from facespace.autodiff import Tensor, detach, scale
from facespace.constants import (
    BASIS_FILE,
    CHECKPOINT_FILE,
    METRICS_FILE,
    RESOLVED_CONFIG,
)
from facespace.errors import (
    CheckpointError,
    ConfigError,
    NonFiniteLossError,
    NumericError,
    PathError,
)
from facespace.objects import ModelState, SubspaceDescriptors, SyntheticSample
from facespace.utils.checkpoint import read_records, write_records
from facespace.utils.formats import save_basis
from facespace.utils.optim import OPTIMIZERS, Optimizer, make_optimizer
from .losses import (
    LossParts,
    LossWeights,
    domain_loss,
    identity_loss,
    latent_regression_loss,
    reconstruction_loss,
    similarity_loss,
    total_generator_loss,
)
from .model import (
    classify_identity,
    discriminate,
    encode,
    generate,
    orthonormal_basis,
)
from .synthdata import BatchStream, PairedBatch, generate_world
from .types import StepRow

# External
from pathlib import Path
from tqdm import tqdm
import logging
import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

ABLATION_LEVELS = ("base", "subspaces", "decoupling", "semantics")
METRIC_COLUMNS = ("step", "L_recon", "L_s", "L_d", "L_r", "L_id", "total")

T = TypeVar("T")


def ablation_level(name: str) -> int:
    """Rank of an ablation level; ``"+decoupling"`` and ``"decoupling"`` are the
    same level."""
    key = name.strip().lstrip("+").lower()
    if key not in ABLATION_LEVELS:
        raise ConfigError("train.ablation", f"expected one of {ABLATION_LEVELS}")
    return ABLATION_LEVELS.index(key)


SUBSPACES = ablation_level("subspaces")
DECOUPLING = ablation_level("decoupling")
SEMANTICS = ablation_level("semantics")


@dataclass(frozen=True)
class TrainConfig:
    """
    Settings of a training run.

    ``steps``, ``log_every``, ``checkpoint_every`` and ``progress`` only affect
    how long a run lasts and what it reports; every other field changes the
    trajectory.
    """

    steps: int = 2000
    batch_size: int = 32
    lr_gen: float = 1e-3
    lr_disc: float = 1e-3
    optimizer: str = "adam"
    ablation: str = "semantics"
    seed: int = 0
    log_every: int = 100
    checkpoint_every: int = 0
    progress: bool = True
    weights: LossWeights = field(default_factory=LossWeights.synthetic)

    def __post_init__(self):
        if self.steps <= 0:
            raise ConfigError("train.steps", "must be positive")
        if self.batch_size <= 0 or self.batch_size % 2:
            raise ConfigError("train.batch_size", "must be positive and even")
        if not self.lr_gen >= 0:
            raise ConfigError("train.lr_gen", "must be non-negative")
        if not self.lr_disc >= 0:
            raise ConfigError("train.lr_disc", "must be non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError("train.optimizer", f"expected one of {OPTIMIZERS}")
        level = ablation_level(self.ablation)
        object.__setattr__(self, "ablation", ABLATION_LEVELS[level])
        if not 0 <= self.seed < 2**64:
            raise ConfigError("train.seed", "must fit in 64 unsigned bits")
        if self.log_every < 0 or self.checkpoint_every < 0:
            raise ConfigError("train.log_every", "intervals must be non-negative")

    @property
    def level(self) -> int:
        return ablation_level(self.ablation)


@dataclass(frozen=True)
class StepMetrics:
    """
    Loss values of one training step. ``disc`` is the discriminator's own
    domain loss from its update (0 below the decoupling level).
    """

    step: int
    recon: float
    s: float
    d: float
    r: float
    id: float
    total: float
    disc: float = 0.0

    def as_row(self) -> StepRow:
        return {
            "step": self.step,
            "L_recon": self.recon,
            "L_s": self.s,
            "L_d": self.d,
            "L_r": self.r,
            "L_id": self.id,
            "total": self.total,
        }


def _guard(component: str, step: int, fn: Callable[[], T]) -> T:
    try:
        return fn()
    except NumericError as e:
        raise NonFiniteLossError(component, step, str(e)) from e


@dataclass
class Objective:
    """The generator-side forward pass of one batch."""

    descriptors: SubspaceDescriptors
    generated: Tensor
    parts: LossParts
    total: Tensor


def generator_objective(
    state: ModelState,
    batch: PairedBatch,
    weights: LossWeights,
    level: int,
    step: int = 0,
) -> Objective:
    """Build the weighted generator objective of ``batch`` at ablation ``level``.

    Orthonormalizes the basis, encodes and generates, then adds the similarity
    and domain terms from the decoupling level on and the latent-regression and
    identity terms at the semantics level. Batch losses are means over samples.

    Args:
        `state` (ModelState): The model.
        `batch` (PairedBatch): Source/driving observations with labels and
            reference identity codes.
        `weights` (LossWeights): Loss weights.
        `level` (int): Index into :data:`ABLATION_LEVELS`.
        `step` (int): Step number used in diagnostics.

    Returns:
        Objective: Descriptors, generated batch, loss parts and their total.
    """
    size = len(batch)
    state.begin_pass()
    d = _guard("encode", step, lambda: encode(state, batch.sources, batch.drivings))
    out = _guard("generate", step, lambda: generate(state, d))

    parts = LossParts()
    parts.recon = _guard(
        "L_recon", step, lambda: reconstruction_loss(out, batch.drivings)
    )
    if level >= DECOUPLING:
        # The ground-truth identity codes stand in for a face recognizer.
        reference = Tensor(batch.source_z_id, op="reference")
        parts.s = _guard(
            "L_s", step, lambda: similarity_loss(d.w_id, reference, batch.pairs)
        )
        parts.d = _guard(
            "L_d",
            step,
            lambda: domain_loss(discriminate(state, d.w_m), batch.driving_labels),
        )
    if level >= SEMANTICS:
        hat = _guard("re-encode", step, lambda: encode(state, out, out))
        parts.r = _guard(
            "L_r",
            step,
            lambda: scale(
                latent_regression_loss(hat.w_id, d.w_id, hat.w_m, d.w_m),
                1.0 / size,
            ),
        )
        parts.id = _guard(
            "L_id",
            step,
            lambda: identity_loss(
                classify_identity(state, d.w_id), batch.source_labels
            ),
        )

    total = _guard("total", step, lambda: total_generator_loss(parts, weights))
    return Objective(d, out, parts, total)


def train_step(
    state: ModelState,
    batch: PairedBatch,
    cfg: TrainConfig,
    gen_opt: Optimizer,
    disc_opt: Optimizer,
    step: int = 0,
) -> StepMetrics:
    """Run one generator update and, from the decoupling level on, one
    discriminator update on the detached motion descriptors.

    Args:
        `state` (ModelState): The model, updated in place.
        `batch` (PairedBatch): The batch.
        `cfg` (TrainConfig): Loss weights and ablation level.
        `gen_opt` (Optimizer): Optimizer over every parameter except ``disc``.
        `disc_opt` (Optimizer): Optimizer over ``disc`` only.
        `step` (int): Step number used in diagnostics.

    Returns:
        StepMetrics: The loss components of this step.
    """
    state.zero_grad()
    objective = generator_objective(state, batch, cfg.weights, cfg.level, step)
    parts, total = objective.parts, objective.total
    _guard("total", step, total.backward)
    gen_opt.step()

    disc_value = 0.0
    if cfg.level >= DECOUPLING:
        disc_opt.zero_grad()
        w_m = detach(objective.descriptors.w_m)
        disc_loss = _guard(
            "L_d(disc)",
            step,
            lambda: domain_loss(discriminate(state, w_m), batch.driving_labels),
        )
        _guard("L_d(disc)", step, disc_loss.backward)
        disc_opt.step()
        disc_value = disc_loss.item()

    if state.basis is not None:
        state.basis.invalidate()

    return StepMetrics(
        step=step,
        recon=parts.value("recon"),
        s=parts.value("s"),
        d=parts.value("d"),
        r=parts.value("r"),
        id=parts.value("id"),
        total=total.item(),
        disc=disc_value,
    )


@dataclass
class Checkpoint:
    """
    Everything needed to continue a run exactly: parameters, optimizer moments,
    the step counter, the batch stream position and the config digest.

    :ivar state: The model.
    :vartype state: ModelState

    :ivar step: Number of completed steps.
    :vartype step: int

    :ivar seed: Seed of the batch stream.
    :vartype seed: int

    :ivar digest: SHA-256 digest of the trajectory-relevant config.
    :vartype digest: bytes

    :ivar optimizer: Optimizer state, names prefixed with ``gen/`` or ``disc/``.
    :vartype optimizer: Dict[str, numpy.ndarray]
    """

    state: ModelState
    step: int
    seed: int
    digest: bytes
    optimizer: Dict[str, np.ndarray] = field(default_factory=dict)

    def records(self) -> Dict[str, np.ndarray]:
        records = self.state.parameter_arrays()
        for name, value in self.optimizer.items():
            records[f"optim/{name}"] = value
        records["train/step"] = np.array(float(self.step))
        records["rng/stream"] = np.array(
            [float(self.seed >> 32), float(self.seed & 0xFFFFFFFF), float(self.step)]
        )
        return records

    @classmethod
    def from_records(cls, digest: bytes, records: Dict[str, np.ndarray]) -> Checkpoint:
        try:
            step = int(np.asarray(records["train/step"]).item())
            seed_hi, seed_lo, position = (int(x) for x in records["rng/stream"])
        except (KeyError, ValueError, TypeError) as e:
            raise CheckpointError(f"missing or malformed training record: {e}") from e
        if position != step:
            raise CheckpointError(
                f"batch stream position {position} disagrees with step {step}"
            )
        params = {
            k: v
            for k, v in records.items()
            if not k.startswith(("optim/", "train/", "rng/"))
        }
        optimizer = {
            k[len("optim/") :]: v for k, v in records.items() if k.startswith("optim/")
        }
        state = ModelState.from_arrays(params)
        return cls(state, step, (seed_hi << 32) | seed_lo, digest, optimizer)


def save_checkpoint(path: Union[str, PathLike], checkpoint: Checkpoint) -> None:
    write_records(path, checkpoint.digest, checkpoint.records())
    logger.info("saved checkpoint at step %d to %s", checkpoint.step, path)


def load_checkpoint(
    path: Union[str, PathLike], expected_digest: Optional[bytes] = None
) -> Checkpoint:
    """Read a checkpoint; with ``expected_digest`` the file must belong to that
    configuration."""
    digest, records = read_records(path)
    if expected_digest is not None and digest != expected_digest:
        raise CheckpointError(f"{path} was written by a different configuration")
    return Checkpoint.from_records(digest, records)


class Trainer:
    """
    Owns the optimizers and the batch stream of one run and advances the model
    one step at a time. Batch ``k`` of the stream is used by step ``k + 1``.
    """

    def __init__(
        self,
        state: ModelState,
        dataset: Sequence[SyntheticSample],
        cfg: TrainConfig,
        step: int = 0,
    ):
        if (cfg.level >= SUBSPACES) != state.uses_basis:
            raise ConfigError(
                "train.ablation", f"level {cfg.ablation!r} does not match the model"
            )
        self.state = state
        self.cfg = cfg
        self.step = step
        self.stream = BatchStream(dataset, cfg.batch_size, "self-reenact", cfg.seed)
        self.gen_opt = make_optimizer(
            cfg.optimizer, state.generator_parameters(), cfg.lr_gen
        )
        self.disc_opt = make_optimizer(
            cfg.optimizer, state.discriminator_parameters(), cfg.lr_disc
        )

    @classmethod
    def from_checkpoint(
        cls,
        checkpoint: Checkpoint,
        dataset: Sequence[SyntheticSample],
        cfg: TrainConfig,
    ) -> Trainer:
        if checkpoint.seed != cfg.seed:
            raise CheckpointError(
                f"checkpoint stream seed {checkpoint.seed} != train.seed {cfg.seed}"
            )
        trainer = cls(checkpoint.state, dataset, cfg, checkpoint.step)
        gen = {
            k[len("gen/") :]: v
            for k, v in checkpoint.optimizer.items()
            if k.startswith("gen/")
        }
        disc = {
            k[len("disc/") :]: v
            for k, v in checkpoint.optimizer.items()
            if k.startswith("disc/")
        }
        if len(gen) + len(disc) != len(checkpoint.optimizer):
            raise CheckpointError("optimizer records must start with gen/ or disc/")
        trainer.gen_opt.load_state_arrays(gen)
        trainer.disc_opt.load_state_arrays(disc)
        return trainer

    def checkpoint(self, digest: bytes) -> Checkpoint:
        optimizer = {f"gen/{k}": v for k, v in self.gen_opt.state_arrays().items()}
        optimizer.update(
            {f"disc/{k}": v for k, v in self.disc_opt.state_arrays().items()}
        )
        return Checkpoint(self.state, self.step, self.cfg.seed, digest, optimizer)

    def advance(self) -> StepMetrics:
        batch = self.stream.batch(self.step)
        metrics = train_step(
            self.state, batch, self.cfg, self.gen_opt, self.disc_opt, self.step + 1
        )
        self.step += 1
        return metrics

    def train(
        self,
        until: int,
        on_step: Optional[Callable[[StepMetrics], None]] = None,
    ) -> List[StepMetrics]:
        """Advance until ``until`` steps are complete, calling ``on_step`` after
        every step."""
        history: List[StepMetrics] = []
        bar = tqdm(
            total=until,
            initial=self.step,
            desc=f"train[{self.cfg.ablation}]",
            disable=not self.cfg.progress,
        )
        with bar:
            while self.step < until:
                metrics = self.advance()
                history.append(metrics)
                if self.cfg.log_every and metrics.step % self.cfg.log_every == 0:
                    logger.info(
                        "step %d: L_recon=%.4g L_s=%.4g L_d=%.4g L_r=%.4g "
                        "L_id=%.4g total=%.4g disc=%.4g",
                        metrics.step,
                        metrics.recon,
                        metrics.s,
                        metrics.d,
                        metrics.r,
                        metrics.id,
                        metrics.total,
                        metrics.disc,
                    )
                if on_step is not None:
                    on_step(metrics)
                bar.update(1)
        return history


class MetricsLog:
    """Append-only ``metrics.csv`` writer, flushed after every row."""

    def __init__(self, path: Union[str, PathLike], keep_until: Optional[int] = None):
        """
        :param path: The CSV file.
        :param keep_until: When resuming, keep the rows of steps up to this one
            and drop the rest; None starts a fresh file.
        """
        self.path = Path(path)
        kept = pd.DataFrame(columns=list(METRIC_COLUMNS))
        try:
            if keep_until is not None and self.path.exists():
                # Kept rows stay text so they are rewritten byte for byte.
                table = pd.read_csv(self.path, dtype=str, keep_default_na=False)
                kept = table[table["step"].astype(int) <= keep_until]
            self._file = open(self.path, "w", newline="")
        except OSError as e:
            raise PathError(str(path), e.strerror or str(e)) from e
        except (KeyError, ValueError) as e:
            raise PathError(str(path), f"unreadable metrics log: {e}") from e
        kept.to_csv(self._file, columns=list(METRIC_COLUMNS), index=False)
        self._file.flush()

    def write(self, metrics: StepMetrics) -> None:
        row = pd.DataFrame([metrics.as_row()], columns=list(METRIC_COLUMNS))
        row.to_csv(self._file, header=False, index=False, float_format="%.17g")
        self._file.flush()

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> MetricsLog:
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as e:
        raise PathError(str(path), e.strerror or str(e)) from e


def run(
    config: RunConfig,
    output_dir: Optional[Union[str, PathLike]] = None,
    resume: bool = False,
    dataset: Optional[Sequence[SyntheticSample]] = None,
) -> Checkpoint:
    """Train according to ``config`` and write the run directory: the resolved
    config, ``metrics.csv``, ``model.ckpt`` and, for models with subspaces, the
    orthonormal basis as ``basis.txt``.

    Args:
        `config` (RunConfig): The validated configuration.
        `output_dir` (str | PathLike): Overrides ``output.directory``.
        `resume` (bool): Continue from the directory's checkpoint up to
            ``train.steps`` total steps.
        `dataset` (Sequence[SyntheticSample]): Training samples; generated from
            ``config.world`` when omitted.

    Returns:
        Checkpoint: The final state.
    """
    out = Path(output_dir if output_dir is not None else config.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise PathError(str(out), e.strerror or str(e)) from e
    _write_text(out / RESOLVED_CONFIG, config.dumps())

    if dataset is None:
        dataset = generate_world(config.world)
    cfg = config.train
    digest = config.digest()
    ckpt_path = out / CHECKPOINT_FILE

    if resume:
        checkpoint = load_checkpoint(ckpt_path, expected_digest=digest)
        trainer = Trainer.from_checkpoint(checkpoint, dataset, cfg)
        logger.info("resuming %s from step %d", ckpt_path, trainer.step)
    else:
        rng = np.random.default_rng([cfg.seed, 20])
        dims = config.model.dims(config.world)
        state = ModelState.create(dims, rng, use_basis=cfg.level >= SUBSPACES)
        trainer = Trainer(state, dataset, cfg)

    if trainer.step > cfg.steps:
        raise CheckpointError(
            f"checkpoint is at step {trainer.step}, beyond train.steps={cfg.steps}"
        )

    keep = trainer.step if resume else None
    with MetricsLog(out / METRICS_FILE, keep_until=keep) as log:

        def on_step(metrics: StepMetrics) -> None:
            log.write(metrics)
            every = cfg.checkpoint_every
            if every and metrics.step % every == 0 and metrics.step < cfg.steps:
                save_checkpoint(ckpt_path, trainer.checkpoint(digest))

        trainer.train(cfg.steps, on_step)

    final = trainer.checkpoint(digest)
    save_checkpoint(ckpt_path, final)
    if final.state.uses_basis:
        save_basis(out / BASIS_FILE, orthonormal_basis(final.state))
    return final
