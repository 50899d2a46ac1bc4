"""
Exception hierarchy for facespace. Every error raised on purpose by the library
derives from :class:`FaceSpaceError`, so callers (and the CLI) can map failures
to exit codes without inspecting messages.
"""

from __future__ import annotations

# Typing
from typing import Optional, Tuple


class FaceSpaceError(Exception):
    """Base class for all facespace errors."""


class ContractError(FaceSpaceError):
    """A pre-condition of an operation was violated by the caller."""


class DimensionError(ContractError):
    """Two operands (or an operand and a configured width) disagree in shape."""

    def __init__(
        self,
        op: str,
        left: Tuple[int, ...],
        right: Optional[Tuple[int, ...]] = None,
    ):
        self.op = op
        self.left = tuple(left)
        self.right = None if right is None else tuple(right)
        if right is None:
            message = f"{op}: unexpected shape {self.left}"
        else:
            message = f"{op}: incompatible shapes {self.left} and {self.right}"
        super().__init__(message)


class RangeError(ContractError, ValueError):
    """A scalar argument lies outside its permitted interval."""


class TargetIndexError(ContractError, IndexError):
    """A class index is outside ``[0, C)``."""


class ConfigError(ContractError):
    """A configuration key is unknown or holds an invalid value.

    :ivar key: The offending ``section.key``.
    :vartype key: str
    """

    def __init__(self, key: str, reason: str):
        self.key = key
        super().__init__(f"{key}: {reason}")


class NumericError(FaceSpaceError):
    """A computation produced a non-finite value."""


class DegenerateBasisError(NumericError):
    """Gram-Schmidt met a row that is (numerically) in the span of the previous rows.

    :ivar row: Zero-based index of the degenerate row.
    :vartype row: int
    """

    def __init__(self, row: int, residual: float):
        self.row = row
        self.residual = residual
        super().__init__(
            f"row {row} is linearly dependent on the previous rows "
            f"(residual norm {residual:.3e})"
        )


class NonFiniteLossError(NumericError):
    """A training loss component became non-finite.

    :ivar component: Name of the first non-finite component (e.g. ``"L_recon"``).
    :vartype component: str
    """

    def __init__(self, component: str, step: int, detail: str = ""):
        self.component = component
        self.step = step
        message = f"step {step}: loss component {component} is not finite"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class CheckpointError(FaceSpaceError):
    """A checkpoint file is malformed or belongs to another configuration."""


class PathError(FaceSpaceError):
    """A file could not be read or written.

    :ivar path: The path that failed.
    :vartype path: str
    """

    def __init__(self, path: str, reason: str):
        self.path = str(path)
        super().__init__(f"{path}: {reason}")
