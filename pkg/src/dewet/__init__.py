"""Phase-field surface-diffusion solver for solid-state dewetting.

Uniform-grid finite-difference discretization of a degenerate
Cahn-Hilliard-type model, with convex-splitting and Rosenbrock-Wanner
time integrators, adaptive step control, and desk-scale experiment
presets for convergence, scaling, and wetting-angle studies.
"""

from dewet.grid import Grid, ScalarField
from dewet.model import ModelParams, WettingParams, AnisotropyParams
from dewet.integrators import State, RosenbrockTableau, StepController, ROS2, ROS34PW2

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "ScalarField",
    "ModelParams",
    "WettingParams",
    "AnisotropyParams",
    "State",
    "RosenbrockTableau",
    "StepController",
    "ROS2",
    "ROS34PW2",
]
