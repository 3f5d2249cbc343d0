"""Sparse stereo correspondence by optimal transport.

Ray, depth-regularised ray and epipolar costs between image points of a
calibrated stereo pair; exact OT, partial OT and two-level (object, point)
matching; evaluation and a synthetic sphere benchmark.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BehindCamera,
    BehindCameraWarning,
    CalibrationError,
    DegenerateEpipole,
    DegenerateRig,
    EmptyCloud,
    GeometryError,
    InfeasibleMarginals,
    InfeasibleMass,
    ParallelRays,
    ParseError,
    RejectionBudgetExceeded,
    ShapeMismatch,
    StereoOTError,
    TransportError,
    ValidationError,
)
from .geometry import (  # noqa: E402
    DepthRegParams,
    DistanceKind,
    DistanceSpec,
    FundamentalMatrix,
    ImagePoint,
    Ray3,
    Side,
    StereoRig,
    back_rays,
    closest_points,
    cost_values,
    epipolar_distance,
    epipole,
    fundamental_matrix,
    pairwise_cost,
    project,
    ray_distance,
    reduce_general_rig,
    regularized_ray_distance,
    triangulate,
)
from .transport import (  # noqa: E402
    CostMatrix,
    MarginalWeights,
    Matching,
    MatchSource,
    TransportPlan,
    binarize,
    naive_match,
    solve_ot,
    solve_pot,
)
from .hierarchy import (  # noqa: E402
    HierarchyMode,
    LabeledCloud,
    hierarchical_match,
    match_objects,
    object_costs,
)
from .evaluation import (  # noqa: E402
    GroundTruthCorrespondence,
    MetricsReport,
    evaluate,
    objectwise_mismatch,
    pointwise_mismatch,
    reconstruct,
    w2_squared,
)
from .simulation import SweepConfig, run_sweep, sample_scene  # noqa: E402
