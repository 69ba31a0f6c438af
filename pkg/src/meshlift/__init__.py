"""Mesh-compensated integer wavelet lifting for 3-D+t volumes."""

__version__ = "0.1.0"

from .volume import (PhantomSpec, Volume3D, Volume4D, extract_frame, generate_phantom,
                     load_volume, store_volume)
from .mesh import (GridSpec, Mesh, MotionField, candidate_allowed, count_free_parameters,
                   create_mesh, dense_field, negate)
from .warp import WarpResult, compensate, inverse_compensate, warp
from .motion import EstimationConfig, RefinementTrace, coloring, estimate, local_error
from .lifting import SubbandPair, mctf_forward, mctf_inverse, predict_step, update_step
from .dwt53 import SpatialDecomposition, dwt53_forward, dwt53_inverse
from .metrics import MetricsReport, entropy_bytes, mean_energy, psnr

__all__ = [
    "PhantomSpec", "Volume3D", "Volume4D", "extract_frame", "generate_phantom", "load_volume",
    "store_volume", "GridSpec", "Mesh", "MotionField", "candidate_allowed",
    "count_free_parameters", "create_mesh", "dense_field", "negate", "WarpResult", "compensate",
    "inverse_compensate", "warp", "EstimationConfig", "RefinementTrace", "coloring", "estimate",
    "local_error", "SubbandPair", "mctf_forward", "mctf_inverse", "predict_step", "update_step",
    "SpatialDecomposition", "dwt53_forward", "dwt53_inverse", "MetricsReport", "entropy_bytes",
    "mean_energy", "psnr",
]
