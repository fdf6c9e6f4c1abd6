"""Randers-Kropina geodesics via a Lorentzian lift and epsilon-continuation."""
from .bvp import ShootingProblem, continue_eps, multi_start, shoot
from .control import ControlSignal, build_frame, integrate_control, reach
from .errors import RKGeoError
from .finsler import eval_F, eval_F_eps, finsler_values
from .geodesics import fermat_lift, integrate_geodesic, project
from .manifold import ChartManifold, build_manifold, catalog, from_config, from_zermelo
from .paths import GeodesicPath
from .spacetime import SpacetimeState

__version__ = "0.1.0"

__all__ = ["ShootingProblem", "continue_eps", "multi_start", "shoot", "ControlSignal", "build_frame",
           "integrate_control", "reach", "RKGeoError", "eval_F", "eval_F_eps", "finsler_values",
           "fermat_lift", "integrate_geodesic", "project", "ChartManifold", "build_manifold", "catalog",
           "from_config", "from_zermelo", "GeodesicPath", "SpacetimeState", "__version__"]
