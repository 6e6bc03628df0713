"""Regularized dynamical sine-Gordon on the 2-torus: trees, models, imaginary chaos and solvers."""

__version__ = "0.1.0"

from .grid import FieldSnapshot, GridSpec, ModelParams, SpaceTimeField  # noqa: E402
from .noise import MollifierSpec, SeedLineage  # noqa: E402

__all__ = ["FieldSnapshot", "GridSpec", "ModelParams", "SpaceTimeField", "MollifierSpec", "SeedLineage",
           "__version__"]
