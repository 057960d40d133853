"""Coordinating guiding vector fields for multi-robot path and surface navigation."""

from ._jit import backend_name
from .field import FieldConfig, combined_field, path_field, surface_field, wedge
from .geometry import DesiredSet, GainSet, catalog, expression_set
from .scenario import build, load_scenario
from .sim import RobotSpec, Scenario, integrate
from .topology import CommGraph, build_cycle, incidence, laplacian

__all__ = [
    "CommGraph",
    "DesiredSet",
    "FieldConfig",
    "GainSet",
    "RobotSpec",
    "Scenario",
    "backend_name",
    "build",
    "build_cycle",
    "catalog",
    "combined_field",
    "expression_set",
    "incidence",
    "integrate",
    "laplacian",
    "load_scenario",
    "path_field",
    "surface_field",
    "wedge",
]
