"""Anisotropic total variation with signed measure data on grids and exact geometry."""
from .errors import (AnisoTVError, ConfigError, LevelOutOfRange, NotConverged, TooLarge,
                     UnboundedDetected, UnknownScenario)
from .grid import DiscreteMeasure, GridDomain, GridFunction, phi, phi_hat, tv_phi
from .integrand import Integrand, by_name, isotropic, mirrored, quadrant, weighted_l1
from .solve import SolveConfig, minimize_phi, minimize_phi_hat, oracle_minimize

__version__ = "0.1.0"
