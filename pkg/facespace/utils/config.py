"""
Run configuration: an INI file with the sections ``[world]``, ``[model]``,
``[train]``, ``[weights]``, ``[eval]`` and ``[output]``. Every key has a default,
unknown sections and keys are rejected, and ``section.key=value`` overrides are
applied on top of the file.
"""

from __future__ import annotations

# Typing
from dataclasses import dataclass, field, fields, make_dataclass, replace
from functools import partial
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union
from os import PathLike

# Internal
from facespace.api.losses import LossWeights
from facespace.api.training import TrainConfig
from facespace.constants import (
    FACE_DIMS,
    HIDDEN_WIDTH,
    MIN_PROBE_SAMPLES,
    SYNTHETIC_DIMS,
)
from facespace.errors import ConfigError, ContractError, PathError
from facespace.objects import ModelDims, WorldSpec

# External
from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import ConfigKeyError, OmegaConfBaseException
import hashlib
import logging

logger = logging.getLogger(__name__)

PROFILES: Dict[str, Dict[str, int]] = {
    "synthetic": SYNTHETIC_DIMS,
    "face": FACE_DIMS,
}

# Keys that change how long a run lasts or where it writes, not what it computes.
RUN_LENGTH_KEYS = frozenset(
    {"train.steps", "train.log_every", "train.checkpoint_every", "train.progress"}
)


@dataclass(frozen=True)
class ModelConfig:
    """
    Basis and network sizes. ``profile`` supplies the defaults of ``p``, ``q``
    and ``n``; keys given explicitly win.
    """

    profile: str = "synthetic"
    p: int = SYNTHETIC_DIMS["p"]
    q: int = SYNTHETIC_DIMS["q"]
    n: int = SYNTHETIC_DIMS["n"]
    hidden: int = HIDDEN_WIDTH

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError("model.profile", f"expected one of {tuple(PROFILES)}")
        for key in ("p", "q", "n", "hidden"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"model.{key}", "must be positive")
        if self.p + self.q > self.n:
            raise ConfigError("model.n", f"must be at least p + q = {self.p + self.q}")

    def dims(self, world: WorldSpec) -> ModelDims:
        return ModelDims(
            p=self.p,
            q=self.q,
            n=self.n,
            m=world.m,
            num_identities=world.num_identities,
            hidden=self.hidden,
        )


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation settings shared by ``eval``, ``interpolate`` and ``ablation``."""

    split_seed: int = 0
    interpolation_steps: int = 16
    probe_max_iter: int = 10000
    probe_tol: float = 1e-6
    ablation_seeds: Tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        if self.interpolation_steps < 2:
            raise ConfigError("eval.interpolation_steps", "must be at least 2")
        if self.probe_max_iter <= 0:
            raise ConfigError("eval.probe_max_iter", "must be positive")
        if not self.probe_tol > 0:
            raise ConfigError("eval.probe_tol", "must be positive")
        if not self.ablation_seeds:
            raise ConfigError("eval.ablation_seeds", "needs at least one seed")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs/default"


@dataclass(frozen=True)
class RunConfig:
    """
    The fully resolved configuration of a command.

    Example:
    ```
    [world]
    num_identities = 16
    mixing = linear

    [train]
    steps = 4000
    ablation = semantics
    ```
    """

    world: WorldSpec = field(default_factory=WorldSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        # Constraints spanning sections.
        if self.world.frames_per_identity < MIN_PROBE_SAMPLES:
            raise ConfigError(
                "world.frames_per_identity",
                f"evaluation needs at least {MIN_PROBE_SAMPLES} frames per identity",
            )
        if self.train.batch_size > self.world.size:
            raise ConfigError(
                "train.batch_size",
                f"exceeds the dataset size {self.world.size}",
            )

    @property
    def weights(self) -> LossWeights:
        return self.train.weights

    def sections(self) -> List[Tuple[str, Any]]:
        return [
            ("world", self.world),
            ("model", self.model),
            ("train", self.train),
            ("weights", self.train.weights),
            ("eval", self.eval),
            ("output", self.output),
        ]

    def dumps(self, include_run_length: bool = True) -> str:
        """Render every key in a fixed order. The output parses back to an equal
        config."""
        lines: List[str] = []
        for name, section in self.sections():
            if not include_run_length and name == "output":
                continue
            lines.append(f"[{name}]")
            for f in _fields(section):
                key = f"{name}.{f.name}"
                if not include_run_length and key in RUN_LENGTH_KEYS:
                    continue
                lines.append(f"{f.name} = {_format(getattr(section, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> bytes:
        """SHA-256 of every key that influences the trained parameters."""
        return hashlib.sha256(self.dumps(include_run_length=False).encode()).digest()

    def with_train(self, **changes: Any) -> RunConfig:
        return replace(self, train=replace(self.train, **changes))


def _fields(section: Any) -> List[Any]:
    return [f for f in fields(section) if f.name != "weights"]


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _node_type(value: Any) -> Any:
    if isinstance(value, tuple):
        return List[int]
    return type(value)


def _schema(defaults: RunConfig) -> DictConfig:
    """Typed structured config with one section per INI section; field types and
    defaults come from ``defaults``."""
    sections = []
    for name, section in defaults.sections():
        spec = []
        for f in _fields(section):
            value = getattr(section, f.name)
            default = (
                field(default_factory=partial(list, value))
                if isinstance(value, tuple)
                else field(default=value)
            )
            spec.append((f.name, _node_type(value), default))
        section_type = make_dataclass(f"{name.title()}Section", spec)
        sections.append((name, section_type, field(default_factory=section_type)))
    return OmegaConf.structured(make_dataclass("RunSchema", sections))


def _read_ini(path: Union[str, PathLike]) -> List[str]:
    """Tokenize an INI file into ``section.key=value`` items."""
    try:
        with open(path) as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise PathError(str(path), e.strerror or str(e)) from e

    items, section = [], None
    for number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text[0] in "#;":
            continue
        if text.startswith("[") and text.endswith("]"):
            section = text[1:-1].strip()
            continue
        key, sep, value = text.partition("=")
        if not sep or section is None or not key.strip():
            raise ConfigError(str(path), f"unreadable config at line {number}")
        items.append(f"{section}.{key.strip()}={value.strip()}")
    return items


def _dotlist(items: Iterable[str], list_keys: Iterable[str]) -> List[str]:
    dotlist = []
    for item in items:
        text = item[2:] if item.startswith("--") else item
        dotted, sep, value = text.partition("=")
        section, dot, key = dotted.partition(".")
        if not sep or not dot or not section or not key:
            raise ConfigError(text, "overrides take the form section.key=value")
        if dotted in list_keys and not value.strip().startswith("["):
            value = f"[{value}]"
        dotlist.append(f"{dotted}={value}")
    return dotlist


def load_config(
    path: Optional[Union[str, PathLike]] = None, overrides: Iterable[str] = ()
) -> RunConfig:
    """Read, override and validate a configuration.

    Args:
        `path` (str | PathLike): INI file; None uses defaults only.
        `overrides` (Iterable[str]): ``section.key=value`` items, with or without
            a leading ``--``, applied in order after the file.

    Returns:
        RunConfig: The validated configuration.
    """
    defaults = RunConfig()
    list_keys = {
        f"{name}.{f.name}"
        for name, section in defaults.sections()
        for f in _fields(section)
        if isinstance(getattr(section, f.name), tuple)
    }
    items = _read_ini(path) if path is not None else []
    dotlist = _dotlist([*items, *overrides], list_keys)
    try:
        user = OmegaConf.from_dotlist(dotlist)
        profile = str(OmegaConf.select(user, "model.profile", default="synthetic"))
        if profile not in PROFILES:
            raise ConfigError("model.profile", f"expected one of {tuple(PROFILES)}")
        merged = OmegaConf.merge(_schema(defaults), {"model": PROFILES[profile]}, user)
    except OmegaConfBaseException as e:
        key = getattr(e, "full_key", None) or "config"
        reason = "unknown key" if isinstance(e, ConfigKeyError) else str(e)
        raise ConfigError(key, reason) from e
    values: Dict[str, Dict[str, Any]] = OmegaConf.to_container(merged)

    def section(name: str) -> Dict[str, Any]:
        return {
            key: tuple(value) if isinstance(value, list) else value
            for key, value in values[name].items()
        }

    try:
        config = RunConfig(
            world=WorldSpec(**section("world")),
            model=ModelConfig(**section("model")),
            train=TrainConfig(
                **section("train"), weights=LossWeights(**section("weights"))
            ),
            eval=EvalConfig(**section("eval")),
            output=OutputConfig(**section("output")),
        )
    except ConfigError:
        raise
    except ContractError as e:
        raise ConfigError("config", str(e)) from e

    logger.debug("resolved config:\n%s", config.dumps())
    return config
