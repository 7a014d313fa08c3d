"""Scale-set hierarchical segmentation."""

from .builders import BuilderConfig, build
from .energy import EnergyModel
from .hierarchy import Hierarchy, energy_curve, lambda_max, optimal_cut
from .plf import PlConcave
from .raster import LabelMap, RasterImage

__all__ = [
    "BuilderConfig", "EnergyModel", "Hierarchy", "LabelMap", "PlConcave", "RasterImage",
    "build", "energy_curve", "lambda_max", "optimal_cut",
]

__version__ = "0.1.0"
