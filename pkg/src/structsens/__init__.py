"""Structural sensitivity of predator-prey models to the functional response.

Simulate Rosenzweig-MacArthur and Leslie-Gower-May models with Holling,
Ivlev or trigonometric responses (or piecewise combinations), fit
responses to each other or to data, and compare Hopf points, limit-cycle
saddle-nodes and bistability windows across responses, with or without
Ornstein-Uhlenbeck noise.
"""

__version__ = "0.1.0"

from .responses import (  # noqa: E402
    Family,
    FunctionalResponse,
    PiecewiseResponse,
    find_intersections,
    make_piecewise,
    piecewise_from_code,
)
from .models import (  # noqa: E402
    ModelSpec,
    State,
    calibrate_lgm,
    coexistence_equilibrium,
    jacobian,
    vector_field,
)
from .fitting import FitRegion, SampledCurve, fit_response, nelder_mead  # noqa: E402
from .sim import (  # noqa: E402
    SimConfig,
    integrate_deterministic,
    integrate_stochastic,
    run_extrema,
)
from .bifurcation import (  # noqa: E402
    ICProtocol,
    detect_bistability,
    hopf_locate,
    scan_diagram,
    sensitivity_report,
    stochastic_diagram,
)

__all__ = [
    "Family",
    "FunctionalResponse",
    "PiecewiseResponse",
    "find_intersections",
    "make_piecewise",
    "piecewise_from_code",
    "ModelSpec",
    "State",
    "calibrate_lgm",
    "coexistence_equilibrium",
    "jacobian",
    "vector_field",
    "FitRegion",
    "SampledCurve",
    "fit_response",
    "nelder_mead",
    "SimConfig",
    "integrate_deterministic",
    "integrate_stochastic",
    "run_extrema",
    "ICProtocol",
    "detect_bistability",
    "hopf_locate",
    "scan_diagram",
    "sensitivity_report",
    "stochastic_diagram",
]
