"""
Train the four ablation levels with several seeds each and compare them on
identity leakage into ``w_m``, identity accuracy from ``w_id``, reconstruction
error and ``w_id`` clustering.
"""

from __future__ import annotations

# Typing
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple, Union
from os import PathLike

if TYPE_CHECKING:
    from facespace.utils.config import RunConfig

# Internal
from facespace.constants import ABLATION_FILE
from facespace.objects import ModelState, SyntheticSample
from facespace.utils.formats import write_table
from .eval import descriptors, linear_probe, reconstruction_error, silhouette
from .synthdata import generate_world
from .training import ABLATION_LEVELS, run
from .types import AblationRow

# External
from pathlib import Path
from tqdm import tqdm
import logging

logger = logging.getLogger(__name__)

# Reconstruction of the subspace model may exceed the base model by this ratio.
RECON_RATIO = 1.05
SILHOUETTE_SLACK = 0.02


@dataclass(frozen=True)
class AblationResult:
    level: str
    seed: int
    leakage_accuracy: float
    identity_accuracy: float
    recon_mse: float
    silhouette: float

    def as_row(self) -> AblationRow:
        return {
            "level": self.level,
            "seed": self.seed,
            "leakage_accuracy": self.leakage_accuracy,
            "identity_accuracy": self.identity_accuracy,
            "recon_mse": self.recon_mse,
            "silhouette": self.silhouette,
        }


@dataclass(frozen=True)
class AblationSummary:
    """
    Per-clause seed counts. A clause holds when a strict majority of seeds
    satisfies it.

    :ivar leakage_order: Seeds where decoupling leaks less identity into
        ``w_m`` than subspaces alone.
    :ivar recon_ratio: Seeds where the subspace model reconstructs within
        ``RECON_RATIO`` of the base model.
    :ivar silhouette_order: Seeds where semantics clusters ``w_id`` at least as
        well as decoupling, up to ``SILHOUETTE_SLACK``.
    """

    seeds: int
    leakage_order: int
    recon_ratio: int
    silhouette_order: int

    def _majority(self, count: int) -> bool:
        return 2 * count > self.seeds

    @property
    def passed(self) -> Dict[str, bool]:
        return {
            "leakage_order": self._majority(self.leakage_order),
            "recon_ratio": self._majority(self.recon_ratio),
            "silhouette_order": self._majority(self.silhouette_order),
        }


def evaluate_run(
    level: str,
    seed: int,
    state: ModelState,
    samples: Sequence[SyntheticSample],
    split_seed: int = 0,
    max_iter: int = 10000,
    tol: float = 1e-6,
) -> AblationResult:
    """Measure one trained model on ``samples``."""
    w_id, w_m, labels = descriptors(state, samples)
    identity = linear_probe(
        w_id, labels, split_seed, "identity-from-w_id", max_iter, tol
    )
    leakage = linear_probe(w_m, labels, split_seed, "identity-from-w_m", max_iter, tol)
    return AblationResult(
        level=level,
        seed=seed,
        leakage_accuracy=leakage.test_accuracy,
        identity_accuracy=identity.test_accuracy,
        recon_mse=reconstruction_error(state, samples),
        silhouette=silhouette(w_id, labels).silhouette,
    )


def summarize(results: Sequence[AblationResult]) -> AblationSummary:
    """Count, per seed, which ordering clauses hold. Seeds missing a level are
    skipped."""
    by_key: Dict[Tuple[str, int], AblationResult] = {
        (r.level, r.seed): r for r in results
    }
    seeds = sorted({r.seed for r in results})
    complete = [
        s for s in seeds if all((level, s) in by_key for level in ABLATION_LEVELS)
    ]
    leakage = recon = sil = 0
    for s in complete:
        base, subs, dec, sem = (by_key[(level, s)] for level in ABLATION_LEVELS)
        leakage += dec.leakage_accuracy < subs.leakage_accuracy
        recon += subs.recon_mse <= RECON_RATIO * base.recon_mse
        sil += sem.silhouette >= dec.silhouette - SILHOUETTE_SLACK
    return AblationSummary(len(complete), leakage, recon, sil)


def run_ablation(
    config: RunConfig,
    output_dir: Optional[Union[str, PathLike]] = None,
    levels: Sequence[str] = ABLATION_LEVELS,
    seeds: Optional[Sequence[int]] = None,
) -> Tuple[List[AblationResult], AblationSummary]:
    """Train every level with every seed and write ``ablation.csv``.

    Args:
        `config` (RunConfig): Base configuration; ``train.ablation`` and
            ``train.seed`` are replaced per run.
        `output_dir` (str | PathLike): Overrides ``output.directory``. Each run
            writes into ``<level>-seed<seed>`` below it.
        `levels` (Sequence[str]): Levels to train.
        `seeds` (Sequence[int]): Seeds; defaults to ``eval.ablation_seeds``.

    Returns:
        Tuple[List[AblationResult], AblationSummary]: One result per run and
        the clause summary.
    """
    out = Path(output_dir if output_dir is not None else config.output.directory)
    seeds = tuple(config.eval.ablation_seeds if seeds is None else seeds)
    dataset = generate_world(config.world)

    results: List[AblationResult] = []
    jobs = [(level, seed) for seed in seeds for level in levels]
    for level, seed in tqdm(jobs, desc="ablation", disable=not config.train.progress):
        run_config = config.with_train(ablation=level, seed=seed, progress=False)
        run_dir = out / f"{level}-seed{seed}"
        logger.info("training %s with seed %d into %s", level, seed, run_dir)
        final = run(run_config, run_dir, dataset=dataset)
        result = evaluate_run(
            level,
            seed,
            final.state,
            dataset,
            config.eval.split_seed,
            config.eval.probe_max_iter,
            config.eval.probe_tol,
        )
        logger.info(
            "%s seed %d: leakage %.3f, identity %.3f, recon %.4g, silhouette %.3f",
            level,
            seed,
            result.leakage_accuracy,
            result.identity_accuracy,
            result.recon_mse,
            result.silhouette,
        )
        results.append(result)

    write_table(out / ABLATION_FILE, [r.as_row() for r in results])
    summary = summarize(results)
    for clause, ok in summary.passed.items():
        logger.info(
            "%s: %d/%d seeds (%s)",
            clause,
            getattr(summary, clause),
            summary.seeds,
            "holds" if ok else "fails",
        )
    return results, summary
