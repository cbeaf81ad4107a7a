"""Image-space gridding: exact nonrigid warp operators built from NUFFT machinery,
nonrigid SENSE models and wavelet-regularized reconstruction."""
from .grid import (
    ComplexGrid,
    GriddingPlan,
    KernelSpec,
    NonCartesianSet,
    crop_center,
    fft_unitary,
    kernel_eval,
    make_plan,
    set_threads,
    zero_pad,
)
from .igrid import DisplacementField, ImageGridder, igrid_adjoint, igrid_forward, warp_oracle
from .kgrid import KSpaceGridder, kgrid_forward, kgrid_inverse
from .motion import (
    MotionEstimate,
    RespiratoryBins,
    apply_phase_shift,
    estimate_motion,
    estimate_translation,
    kmeans_bin,
)
from .sense import CoilSet, NonrigidSenseOp, StackedSenseModel, stacked_adjoint, stacked_forward
from .solver import SolveReport, SolverConfig, fista_solve

__version__ = "0.1.0"
