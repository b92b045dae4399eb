"""Pseudo billiards: exact return maps, switched flow models and their diagnostics.

``BACKEND`` names the orbit kernel in use: ``"cython"`` when the compiled
extension imports, ``"python"`` otherwise (or when ``PSB_PURE_PYTHON=1``).
"""
from .analysis import (chaos_certificate, coupling_distance, detect_periodic_attractor,
                       empirical_measure, histogram_l1, lyapunov_spectrum,
                       transitivity_components, verify_strong_markov)
from .dynamics import (BoundaryState, ServerState, discrete_orbit, orbit, piece_jacobian,
                       return_step, server_orbit)
from .geometry import ConvexPolytope, cut_polytope, first_facet_hit
from .kernel import BACKEND
from .model import (PacketScheme, SwitchedArrivalSpec, SwitchPolicy, build_polygon_model,
                    build_server_model, build_standard_model, check_cut_validity,
                    inherited_field)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BoundaryState", "ConvexPolytope", "PacketScheme", "ServerState",
    "SwitchPolicy", "SwitchedArrivalSpec", "build_polygon_model", "build_server_model",
    "build_standard_model", "chaos_certificate", "check_cut_validity", "coupling_distance",
    "cut_polytope", "detect_periodic_attractor", "discrete_orbit", "empirical_measure",
    "first_facet_hit", "histogram_l1", "inherited_field", "lyapunov_spectrum", "orbit",
    "piece_jacobian", "return_step", "server_orbit", "transitivity_components",
    "verify_strong_markov",
]
