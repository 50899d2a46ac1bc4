from __future__ import annotations

# Typing
from typing import List, Optional, Sequence, Tuple, Union
from os import PathLike

# Internal
from facespace.api.ablation import AblationResult, AblationSummary, run_ablation
from facespace.api.eval import (
    EvalReport,
    InterpolationSweep,
    descriptors,
    evaluate,
    interpolation_sweep,
    project_2d,
    write_eval,
    write_projection,
    write_sweep,
)
from facespace.api.model import cross_reenact
from facespace.api.synthdata import generate_world
from facespace.api.training import Checkpoint, load_checkpoint, run
from facespace.api.verification import CheckResult, run_gradcheck_suite
from facespace.autodiff import no_grad
from facespace.constants import BASIS_FILE, CHECKPOINT_FILE
from facespace.errors import ContractError
from facespace.objects import ModelState, SyntheticSample
from facespace.utils.config import RunConfig, load_config
from facespace.utils.formats import load_basis, load_dataset, save_dataset

# External
from pathlib import Path
import logging
import numpy as np

logger = logging.getLogger(__name__)


class FaceSpace:
    """
    Entry point for working with one run directory: generate the synthetic
    world, train, and evaluate or inspect the trained model. The model and the
    dataset are loaded lazily and released by :meth:`close`.

    Example Usage:
        >>> with FaceSpace(config_path="run.ini") as fs:
        ...     fs.train()
        ...     report = fs.evaluate()
    """

    def __init__(
        self,
        config: Optional[RunConfig] = None,
        config_path: Optional[Union[str, PathLike]] = None,
        overrides: Sequence[str] = (),
        output_dir: Optional[Union[str, PathLike]] = None,
    ):
        """
        :param config: A resolved configuration. When omitted it is read from
            ``config_path`` (or the defaults) with ``overrides`` applied.
        :type config: RunConfig
        :param config_path: INI configuration file.
        :type config_path: str | PathLike
        :param overrides: ``section.key=value`` items applied after the file.
        :type overrides: Sequence[str]
        :param output_dir: Run directory; defaults to ``output.directory``.
        :type output_dir: str | PathLike
        """
        if config is None:
            config = load_config(config_path, overrides)
        elif config_path is not None or overrides:
            raise ContractError("pass either a config or a config path, not both")
        self.config = config
        self.output_dir = Path(
            output_dir if output_dir is not None else config.output.directory
        )
        self._dataset: Optional[List[SyntheticSample]] = None
        self._state: Optional[ModelState] = None

    def __enter__(self) -> FaceSpace:
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def close(self):
        """Drop the loaded model and dataset."""
        self._state = None
        self._dataset = None

    @property
    def checkpoint_path(self) -> Path:
        return self.output_dir / CHECKPOINT_FILE

    @property
    def dataset(self) -> List[SyntheticSample]:
        """The samples of ``config.world``, generated on first use unless a file
        was loaded with :meth:`use_dataset`."""
        if self._dataset is None:
            self._dataset = generate_world(self.config.world)
        return self._dataset

    def sample(self, index: int) -> SyntheticSample:
        samples = self.dataset
        if not 0 <= index < len(samples):
            raise ContractError(f"sample index {index} outside [0, {len(samples)})")
        return samples[index]

    def use_dataset(self, path: Union[str, PathLike]) -> List[SyntheticSample]:
        """Evaluate on samples read from a dataset export instead."""
        self._dataset = load_dataset(path)
        return self._dataset

    @property
    def state(self) -> ModelState:
        """The trained model, read from the run's checkpoint on first use."""
        if self._state is None:
            self.load()
        assert self._state is not None
        return self._state

    def load(self, path: Optional[Union[str, PathLike]] = None) -> Checkpoint:
        """
        Read a checkpoint and make its model current.

        :param path: Checkpoint file; defaults to ``model.ckpt`` in the run
            directory.
        :type path: str | PathLike
        :return: The checkpoint.
        :rtype: Checkpoint
        """
        checkpoint = load_checkpoint(path if path is not None else self.checkpoint_path)
        self._state = checkpoint.state
        logger.info("loaded model at step %d", checkpoint.step)
        return checkpoint

    def generate_data(self, path: Union[str, PathLike]) -> List[SyntheticSample]:
        """Generate the world and write it as a dataset export."""
        samples = generate_world(self.config.world)
        save_dataset(path, samples)
        self._dataset = samples
        return samples

    def train(self, resume: bool = False) -> Checkpoint:
        """
        Train on the configured world, writing ``config.resolved``,
        ``metrics.csv``, ``model.ckpt`` and ``basis.txt`` into the run directory.

        :param resume: Continue from the run directory's checkpoint.
        :type resume: bool
        :return: The final checkpoint.
        :rtype: Checkpoint
        """
        final = run(self.config, self.output_dir, resume=resume, dataset=self.dataset)
        self._state = final.state
        return final

    def evaluate(self) -> EvalReport:
        """Probe, cluster and zero-decode the dataset, writing ``eval/*.csv``.
        A ``basis.txt`` export in the run directory is checked as well."""
        ev = self.config.eval
        basis_path = self.output_dir / BASIS_FILE
        basis = None
        if self.state.uses_basis and basis_path.exists():
            basis = load_basis(basis_path)
        report = evaluate(
            self.state,
            self.dataset,
            ev.split_seed,
            ev.probe_max_iter,
            ev.probe_tol,
            basis,
        )
        write_eval(report, self.output_dir)
        return report

    def interpolate(
        self, index_a: int, index_b: int, steps: Optional[int] = None
    ) -> InterpolationSweep:
        """
        Sweep the motion descriptor from sample ``index_a`` to ``index_b`` with
        ``index_a``'s identity, writing ``eval/interpolation*.csv``.

        :param index_a: Dataset index of the start (and identity) sample.
        :type index_a: int
        :param index_b: Dataset index of the end sample.
        :type index_b: int
        :param steps: Number of positions; defaults to
            ``eval.interpolation_steps``.
        :type steps: int
        :return: The sweep.
        :rtype: InterpolationSweep
        """
        if steps is None:
            steps = self.config.eval.interpolation_steps
        sweep = interpolation_sweep(
            self.state, self.sample(index_a), self.sample(index_b), steps
        )
        write_sweep(sweep, self.output_dir)
        return sweep

    def project(self) -> Tuple[np.ndarray, np.ndarray]:
        """Project the identity descriptors on two principal components and
        write ``eval/projection.csv``."""
        w_id, _, labels = descriptors(self.state, self.dataset)
        coords = project_2d(w_id)
        write_projection(coords, labels, self.output_dir)
        return coords, labels

    def cross_reenact(self, source_index: int, driving_index: int) -> np.ndarray:
        """Decode the source sample's identity with the driving sample's motion."""
        with no_grad():
            out = cross_reenact(
                self.state,
                self.sample(source_index).observation,
                self.sample(driving_index).observation,
            )
        return out.numpy()

    def gradcheck(self) -> List[CheckResult]:
        return run_gradcheck_suite(self.config.train.seed)

    def ablation(self) -> Tuple[List[AblationResult], AblationSummary]:
        return run_ablation(self.config, self.output_dir)
