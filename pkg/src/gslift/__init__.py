"""gslift: training-free instance segmentation for 3D Gaussian splatting fields.

The package lifts 2D instance masks onto the Gaussians that dominate each
pixel, merges the per-view fragments into persistent objects, optionally
refines them, and extracts each object as a standalone splat file.
"""

from gslift.errors import GsliftError, InputError

__all__ = ["GsliftError", "InputError", "__version__"]

__version__ = "0.1.0"
