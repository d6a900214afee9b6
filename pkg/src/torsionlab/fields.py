"""Scalar fields on meshes and on the outer boundary."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["FemField", "BoundaryField"]


@dataclass
class FemField:
    """Nodal scalar field on a mesh (P1 or P2 nodes)."""

    mesh: object
    values: np.ndarray
    sigma_c: float | None = None
    kind: str = "generic"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != self.mesh.n_nodes:
            raise ValueError("field length does not match mesh node count")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite field values")

    @property
    def boundary_trace(self) -> np.ndarray:
        return self.values[self.mesh.boundary_nodes]


@dataclass
class BoundaryField:
    """Scalar function on the outer-boundary nodes of a mesh.

    ``weights`` are the boundary-mass row sums, so ``weights @ values`` is the
    discrete integral over the boundary.  ``theta`` gives each node's polar
    angle about the outer center, which is what boundary deformation needs.
    """

    indices: np.ndarray
    values: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    zero_average: bool = False

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if not (len(self.indices) == len(self.values) == len(self.theta)
                == len(self.weights)):
            raise ValueError("inconsistent boundary field arrays")
        if self.zero_average:
            scale = self.weights.sum() * (np.abs(self.values).max() or 1.0)
            if abs(self.weights @ self.values) > 1e-9 * scale:
                raise ValueError("field flagged zero-average is not zero-average")

    def weighted_mean(self) -> float:
        return float(self.weights @ self.values / self.weights.sum())

    def with_values(self, values, zero_average: bool = False) -> "BoundaryField":
        return BoundaryField(self.indices, values, self.theta, self.weights,
                             zero_average=zero_average)
