"""arsurf: numerics for two-dimensional almost-Riemannian structures.

Point classification, Hamiltonian geodesic flow, cut/conjugate/front loci,
curvature and regularized Gauss-Bonnet integrals, and the labelled-graph
Lipschitz invariant.
"""

from .models import (
    ArsurfError,
    Chart,
    Covector2,
    DomainError,
    FrameModel,
    MetricEval,
    ModelError,
    Point2,
    builtin,
    euclidean,
    eval_frame,
    f2_normal,
    f3_normal,
    from_json,
    grushin,
    lie_bracket,
    metric_eval,
    round_sphere_chart,
    sphere2,
    tangency_basic,
    tangency_cubic,
)

__version__ = "0.1.0"

__all__ = [
    "ArsurfError", "Chart", "Covector2", "DomainError", "FrameModel",
    "MetricEval", "ModelError", "Point2", "builtin", "euclidean",
    "eval_frame", "f2_normal", "f3_normal", "from_json", "grushin",
    "lie_bracket", "metric_eval", "round_sphere_chart", "sphere2",
    "tangency_basic", "tangency_cubic", "__version__",
]
