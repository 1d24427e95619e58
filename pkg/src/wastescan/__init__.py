"""wastescan: territory scanning for illegal-waste candidates in RS imagery.

Pipeline: a geo-referenced raster is partitioned into square tiles, each tile
is scored by a pluggable classifier backend, tiles above a confidence
threshold get saliency overlays, and everything lands as GIS-ready files that
the triage review service serves to operators.
"""

from .kernels import IMPLEMENTATION as kernel_implementation

__version__ = "0.1.0"
__all__ = ["kernel_implementation", "__version__"]
