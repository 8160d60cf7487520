"""Graph-based radiomic descriptors of intra-lesional texture heterogeneity.

Pipeline: volume -> 13 voxel-wise GLCM texture maps -> per-map Gaussian
mixture clustering -> cluster graph with EMD edge weights -> 15 global graph
metrics per map, concatenated into a 195-value descriptor.
"""

from .config import RunConfig, derive_seed
from .descriptors import (
    GRRAIL_NAMES,
    INTENSITY_NAMES,
    RADIOMICS_NAMES,
    Descriptor,
    describe,
    grrail,
    intensity_graph,
    radiomics_aggregate,
)
from .glcm import FEATURE_NAMES, extract_feature_maps
from .graph_metrics import METRIC_NAMES
from .volume_io import RoiMask, VoxelGrid, load_mask, load_volume

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "derive_seed",
    "Descriptor",
    "describe",
    "grrail",
    "intensity_graph",
    "radiomics_aggregate",
    "extract_feature_maps",
    "FEATURE_NAMES",
    "METRIC_NAMES",
    "GRRAIL_NAMES",
    "RADIOMICS_NAMES",
    "INTENSITY_NAMES",
    "VoxelGrid",
    "RoiMask",
    "load_volume",
    "load_mask",
]
