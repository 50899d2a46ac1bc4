# Export necessary classes to be exposed to the user
from .base import FaceSpace
from .errors import (
    FaceSpaceError,
    ContractError,
    DimensionError,
    RangeError,
    TargetIndexError,
    ConfigError,
    NumericError,
    DegenerateBasisError,
    NonFiniteLossError,
    CheckpointError,
    PathError,
)
from .objects import (
    OrthonormalBasis,
    SubspaceDescriptors,
    Mlp,
    MlpSpec,
    ModelDims,
    ModelState,
    WorldSpec,
    SyntheticSample,
)
from .utils.config import RunConfig, load_config

__version__ = "0.1.0"
