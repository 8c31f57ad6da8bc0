"""Category-level object pose estimation with score-based diffusion over 9D poses."""

from .errors import PoseDiffError
from .geometry import SymmetrySpec

__version__ = "0.1.0"

__all__ = ["PoseDiffError", "SymmetrySpec", "__version__"]
