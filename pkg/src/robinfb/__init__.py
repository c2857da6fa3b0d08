"""Discrete minimizers and diagnostics for a two-phase free-boundary problem with a Robin interface."""

from .core import Disk, Grid, Label, ProblemSpec, Rect, State, GeometryError, rasterize, validate
from .energy import EnergyBreakdown, total_energy

__version__ = "0.1.0"

__all__ = [
    "Disk",
    "Rect",
    "Grid",
    "Label",
    "ProblemSpec",
    "State",
    "GeometryError",
    "rasterize",
    "validate",
    "EnergyBreakdown",
    "total_energy",
]
