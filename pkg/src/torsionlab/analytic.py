"""Closed-form radial solutions and the annulus flux mismatch.

The oracle layer: concentric-ball torsion values follow from the total-flux
identity sigma(r) U'(r) = -r/N (integrate -div(sigma grad u) = 1 over a
ball of radius r); the annulus solves U'' + (N-1)/r U' = -1 with zero
Dirichlet data at both radii.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["RadialTwoPhase", "AnnulusCandidate", "radial_torsion_value",
           "radial_flux", "annulus_flux_mismatch"]


@dataclass(frozen=True)
class RadialTwoPhase:
    """Concentric configuration: core radius rho, outer radius R."""

    rho: float
    R: float
    sigma_c: float
    N: int = 2

    def __post_init__(self):
        if not (0 < self.rho < self.R):
            raise ValueError("need 0 < rho < R")
        if self.sigma_c <= 0:
            raise ValueError("sigma_c must be positive")
        if self.N < 2:
            raise ValueError("dimension must be >= 2")


@dataclass(frozen=True)
class AnnulusCandidate:
    R1: float
    R2: float
    N: int = 2

    def __post_init__(self):
        if not (0 < self.R1 < self.R2):
            raise ValueError("need 0 < R1 < R2")


def radial_torsion_value(cfg: RadialTwoPhase, r) -> float | np.ndarray:
    """Torsion function of the concentric configuration at radius r.

    Shell: (R^2 - r^2)/(2N); core continuation via the flux identity.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > cfg.R + 1e-15):
        raise ValueError("radius outside [0, R]")
    N, R, rho, sc = cfg.N, cfg.R, cfg.rho, cfg.sigma_c
    shell = (R * R - r * r) / (2 * N)
    core = (R * R - rho * rho) / (2 * N) + (rho * rho - r * r) / (2 * N * sc)
    out = np.where(r >= rho, shell, core)
    return float(out) if out.ndim == 0 else out


def radial_flux(cfg: RadialTwoPhase) -> float:
    """Outer-boundary normal derivative c = -R/N (independent of sigma_c, rho)."""
    return -cfg.R / cfg.N


def annulus_flux_mismatch(cand: AnnulusCandidate) -> tuple[float, float, float]:
    """(inner |dn u|, outer |dn u|, their absolute difference) for the annulus.

    N = 2: U(r) = -r^2/4 + A log r + B with A = (R2^2 - R1^2)/(4 log(R2/R1)).
    N >= 3: U(r) = -r^2/(2N) + A r^(2-N) + B with the analogous A.
    The mismatch is strictly positive for every R1 < R2, which is what rules
    out annular solutions.
    """
    R1, R2, N = cand.R1, cand.R2, cand.N
    if N == 2:
        A = (R2 * R2 - R1 * R1) / (4 * math.log(R2 / R1))

        def Uprime(r):
            return -r / 2 + A / r
    else:
        A = (R2 * R2 - R1 * R1) / (2 * N * (R1 ** (2 - N) - R2 ** (2 - N)))

        def Uprime(r):
            return -r / N + (2 - N) * A * r ** (1 - N)

    inner = abs(-Uprime(R1))   # outward normal at R1 points toward the origin
    outer = abs(Uprime(R2))
    return inner, outer, abs(inner - outer)
