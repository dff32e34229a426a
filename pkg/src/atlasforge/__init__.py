"""Ensemble-driven annotation campaign engine for volumetric segmentation.

Turns per-class soft predictions from several model architectures into
per-voxel attention maps, ranks volumes so human reviser time goes where the
models disagree most, tracks the revise/fine-tune/repeat loop as an
event-sourced campaign, and measures resulting segmentation quality.
"""

from . import errors
from .volgrid import VoxelGrid, extract_slice, read_volume, write_volume

__version__ = "0.1.0"

__all__ = [
    "errors",
    "VoxelGrid",
    "read_volume",
    "write_volume",
    "extract_slice",
    "__version__",
]
