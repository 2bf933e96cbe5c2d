"""Quasi-stationary distributions of one-dimensional diffusions killed at 0."""

from .boundary import check_hypothesis_h, classification_report, classify_boundary
from .drift import DriftSpec, build_coefficients, parse_drift, smoothness_probe
from .montecarlo import InitialLaw, SimConfig, simulate_killed, yaglom_distance
from .quadrature import IntegralVerdict, Status, TailPolicy, classify_improper
from .spectrum import build_generator, build_qsd, ground_state_fd, solve_spectrum

__version__ = "0.1.0"
