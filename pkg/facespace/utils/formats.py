"""
Text formats: the basis matrix export, the dataset export and CSV report tables.
"""

from __future__ import annotations

# Typing
from typing import Iterator, List, Mapping, Sequence, Union
from os import PathLike

# Internal
from facespace.errors import ContractError, PathError
from facespace.objects import SyntheticSample

# External
from contextlib import contextmanager
import logging
import re
import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

Pathish = Union[str, PathLike]

DATASET_TAG = "facespace-dataset"
_HEADER = re.compile(
    rf"#\s*{DATASET_TAG}\s+dim_zid=(\d+)\s+dim_zm=(\d+)\s+m=(\d+)\s*$"
)


@contextmanager
def _io(path: Pathish) -> Iterator[None]:
    try:
        yield
    except OSError as e:
        raise PathError(str(path), e.strerror or str(e)) from e


def save_basis(path: Pathish, matrix: np.ndarray) -> None:
    """Write a matrix as ``rows cols`` followed by one whitespace-separated row per
    line, every value with 17 significant digits."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ContractError(f"basis export needs a matrix, got shape {matrix.shape}")
    rows, cols = matrix.shape
    with _io(path):
        np.savetxt(path, matrix, fmt="%.17g", header=f"{rows} {cols}", comments="")


def load_basis(path: Pathish) -> np.ndarray:
    with _io(path):
        with open(path) as f:
            header = f.readline().split()
            values = np.loadtxt(f, dtype=np.float64, ndmin=2)
    try:
        rows, cols = (int(x) for x in header)
    except ValueError as e:
        raise ContractError(f"{path}: bad basis header {header}") from e
    if values.shape != (rows, cols):
        raise ContractError(
            f"{path}: header says {rows}x{cols}, "
            f"found {values.shape[0]}x{values.shape[1]}"
        )
    return values


def save_dataset(path: Pathish, dataset: Sequence[SyntheticSample]) -> None:
    """
    Write one comma-separated record per sample: identity label, then ``z_id``,
    ``z_m`` and observation entries with 17 significant digits. The header line
    carries the three widths.
    """
    if not dataset:
        raise ContractError("cannot export an empty dataset")
    first = dataset[0]
    dim_zid, dim_zm, m = first.z_id.size, first.z_m.size, first.observation.size
    table = np.stack(
        [
            np.concatenate(
                ([float(s.identity_label)], s.z_id, s.z_m, s.observation)
            )
            for s in dataset
        ]
    )
    fmt = ["%d"] + ["%.17g"] * (dim_zid + dim_zm + m)
    header = f"# {DATASET_TAG} dim_zid={dim_zid} dim_zm={dim_zm} m={m}"
    with _io(path):
        np.savetxt(path, table, fmt=fmt, delimiter=",", header=header, comments="")
    logger.info("wrote %d samples to %s", len(dataset), path)


def load_dataset(path: Pathish) -> List[SyntheticSample]:
    with _io(path):
        with open(path) as f:
            header = f.readline().strip()
            match = _HEADER.match(header)
            if match is None:
                raise ContractError(f"{path}: not a {DATASET_TAG} file")
            table = np.loadtxt(f, dtype=np.float64, delimiter=",", ndmin=2)
    dim_zid, dim_zm, m = (int(g) for g in match.groups())
    width = 1 + dim_zid + dim_zm + m
    if table.shape[1] != width:
        raise ContractError(
            f"{path}: records have {table.shape[1]} fields, expected {width}"
        )
    samples = []
    for record in table:
        samples.append(
            SyntheticSample(
                observation=record[1 + dim_zid + dim_zm :].copy(),
                identity_label=int(record[0]),
                z_id=record[1 : 1 + dim_zid].copy(),
                z_m=record[1 + dim_zid : 1 + dim_zid + dim_zm].copy(),
            )
        )
    logger.info("loaded %d samples from %s", len(samples), path)
    return samples


def write_table(path: Pathish, rows: Sequence[Mapping[str, object]]) -> pd.DataFrame:
    """Write report rows as CSV (header from the first row's keys)."""
    frame = pd.DataFrame(list(rows))
    with _io(path):
        frame.to_csv(path, index=False, float_format="%.17g")
    logger.info("wrote %s (%d rows)", path, len(frame))
    return frame
