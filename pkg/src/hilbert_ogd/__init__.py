"""Online functional gradient descent in Hilbert spaces."""

from .classifier import (
    ClassifierConstraints,
    Sample,
    SquaredLoss,
    hindsight_optimum,
    run_selection,
)
from .drsp import (
    AffineSlice,
    BallOracle,
    DrspInstance,
    SliceOracle,
    UncertaintySet,
    binary_search_optimize,
    decide_feasibility,
    quarter_disk_grid,
)
from .engine import (
    OgdConfig,
    RegretLedger,
    bound_value,
    run_offline_average,
    run_online,
    run_online_calibrated,
    run_online_subgradient,
)
from .hilbert import (
    GridFunction,
    KernelSpec,
    QuadratureGrid,
    RkhsElement,
    axpy,
    compact,
    evaluate,
    inner,
    norm,
)
from .projections import Ball, Hyperplane, Intersection, NonnegativeCone, dykstra, project
from .risk import DiscreteProbabilitySpace, MeanVariance, RiskConstraints, run_risk_minimization

__version__ = "0.1.0"
