from .basis import OrthonormalBasis
from .descriptors import SubspaceDescriptors
from .mlp import Mlp, MlpSpec
from .state import ModelDims, ModelState
from .world import WorldSpec, SyntheticSample
