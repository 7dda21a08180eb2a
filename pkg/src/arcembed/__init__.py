"""Exact PL interval-map algebra, visor analysis, tent factorization, and
certified finite-depth plane-embedding stages for arc-like continua."""

__version__ = "0.1.0"

from .geom import (  # noqa: F401
    InvalidLoop,
    Location,
    Point,
    Polyline,
    Segment,
    min_clearance_sq,
    point_vs_closed_curve,
    polyline,
    polyline_simple,
    pt,
    seg_intersection,
)
from .plmap import (  # noqa: F401
    Branch,
    BranchKind,
    OutOfDomain,
    PLMap,
    SawtoothInfo,
    branch_at,
    canonical_equal,
    compose,
    evaluate,
    identity_map,
    interior_extrema,
    is_homeomorphism,
    is_open_interval_map,
    is_sawtooth,
    level_crossings,
    tent,
)
from .visors import (  # noqa: F401
    FamilyMember,
    MarkedSet,
    MinimalInterval,
    NonRemovableVisor,
    NotAVisor,
    NotRemovable,
    OrderHypothesisViolated,
    RemovabilityReport,
    RemovalTriple,
    VisorComponent,
    VisorFamily,
    all_visors_removable,
    assign_targets,
    choose_visor_family,
    classify_visor,
    marked,
    max_target,
    minimal_removal_interval,
    removal_search,
    visor_components,
)
