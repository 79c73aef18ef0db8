"""Differentiable 3D geometry kernels for TPS-warped face alignment.

Submodules
----------
projection : camera projection and its analytic gradients
tps        : 3D thin-plate-spline warping, fitting, parameter gradients
sampler    : bilinear grid sampling with coordinate gradients
mesh       : face mesh storage, normals, camera center, visibility
refit      : ray backprojection and exact 2D->3D model refitting
estimator  : desk-scale end-to-end trainable alignment pipeline
metrics    : NME / CED / pose-binned evaluation
gradcheck  : finite-difference audits of every analytic gradient
cli        : command-line surface (``facewarp ...``)
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateDepth,
    FacewarpError,
    MeshFormatError,
    NoLandmarks,
    SchemeMismatch,
    SingularA,
    SingularSystem,
    TrainingDiverged,
)
from .projection import CameraParams, project
from .tps import TpsWarp3D, fit, identity_warp, kernel_u

__all__ = [
    "CameraParams",
    "DegenerateDepth",
    "FacewarpError",
    "MeshFormatError",
    "NoLandmarks",
    "SchemeMismatch",
    "SingularA",
    "SingularSystem",
    "TpsWarp3D",
    "TrainingDiverged",
    "fit",
    "identity_warp",
    "kernel_u",
    "project",
    "__version__",
]
