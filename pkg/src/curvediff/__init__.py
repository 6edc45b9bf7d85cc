"""Brownian motion and Sobolev-type metric geometry on discrete closed curves."""

__version__ = "0.1.0"

from .curves import (  # noqa: F401
    DiscreteCurve,
    MetricTensor,
    TangentVector,
    arc_derivative,
    from_points,
    load_curve,
    make_circle,
    make_square,
    metric_eval,
    metric_norm,
    metric_tensor,
    save_curve,
)
from .calculus import (  # noqa: F401
    GeodesicState,
    GrowthReport,
    diffusion_factor,
    drift,
    geodesic_shoot,
    log_edge_rate,
    metric_tensor_derivative,
    probe_volume_growth,
    unit_speed_velocity,
)
from .brownian import (  # noqa: F401
    EnsembleStats,
    FlatGeometry,
    SimulationConfig,
    SobolevGeometry,
    StepNoise,
    TrajectoryRecord,
    em_step,
    ensemble,
    simulate,
)
from .triangle import (  # noqa: F401
    TriangleBMReport,
    TrianglePoint,
    conformal_factor,
    estimate_blowup_exponent,
    radial_length,
    restricted_metric_oracle,
    simulate_triangle_bm,
    triangle_bm_report,
)
from .errors import (  # noqa: F401
    BadShape,
    CurveError,
    DomainViolation,
    EdgeCollapse,
    RegularityViolation,
    SingularMetric,
    StepTooLarge,
)
