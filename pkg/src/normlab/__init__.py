"""normlab: numerical laboratory for norm disparity between modalities in Pre-Norm stacks.

Submodules: ``kinematics`` (rotation of a state under a residual update),
``decay`` (cross-modal similarity decay), ``attention_snr`` (score gaps),
``norm_align`` (alignment LayerNorm with gradient compensation),
``prenorm_stack`` (toy transformer stack), ``fusion_train`` (toy training
task), ``numerics`` (RNG, SVD, finite differences, MATF32 I/O) and ``cli``.
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (
    ConfigError,
    InputDataError,
    NormLabError,
    NumericError,
)
from .numerics import RNG_ALGORITHM, RngState

__all__ = [
    "BACKEND",
    "ConfigError",
    "InputDataError",
    "NormLabError",
    "NumericError",
    "RNG_ALGORITHM",
    "RngState",
    "__version__",
]
