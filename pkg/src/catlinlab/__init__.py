"""catlinlab: boundary normal forms, polydisk pseudodistances, Catlin-type
metrics, and Gromov hyperbolicity audits for smoothly bounded finite-type
pseudoconvex domains in C^2 with polynomial defining functions."""

from .charts import (
    BoundaryChart,
    PseudoDistValue,
    apply_chart,
    build_chart,
    d_prime,
    d_prime_bisect,
    g_function,
    get_chart,
    in_polydisk,
    invert_chart,
    point_type,
    poly_sup_norm,
    pseudodistance_D,
    tau,
)
from .domain import (
    DomainSpec,
    TangentSplit,
    domain_from_file,
    make_domain,
    outward_normal,
    project_boundary,
    registry_names,
    sample_boundary,
    sample_collar,
    signed_distance,
    tangent_split,
    validate_domain,
)
from .estimate import DistanceEstimate, distance_estimate
from .metric import (
    FieldFrame,
    build_frame,
    c_l,
    catlin_metric,
    curve_length,
    metric_batch,
)
from .oracles import ball_distance, ball_metric
from .symbolic import (
    Expr,
    ParseError,
    PolyInW,
    parse_expr,
    taylor_in_chart,
    wirtinger,
)
from .config import ExperimentConfig, RunManifest, load_domain, run_suites

__version__ = "0.1.0"
