"""torsionlab: a 2D two-phase torsion shape-calculus laboratory.

Solve the composite-beam torsion problem with a piecewise-constant
conductivity, evaluate the torsional rigidity and its first and second
shape derivatives, compute the two-phase Neumann-to-Dirichlet spectrum,
run volume-constrained shape optimization, and probe symmetry via the
moving-plane sweep, the annulus flux mismatch and the two-conductivity
locking experiment.
"""
from . import (analytic, cli, fem, fields, geometry, meshgen, ntd,
               plane_sweep, shape_calc, twosigma)
from .fields import BoundaryField, FemField
from .geometry import StarBoundary, TwoPhaseConfig
from .meshgen import Mesh, generate_mesh

__version__ = "0.1.0"

__all__ = [
    "analytic", "cli", "fem", "fields", "geometry", "meshgen", "ntd",
    "plane_sweep", "shape_calc", "twosigma",
    "BoundaryField", "FemField", "StarBoundary", "TwoPhaseConfig",
    "Mesh", "generate_mesh", "__version__",
]
