"""Star-shaped boundaries, two-phase configurations, reflections and deformations.

All boundaries are star-shaped graphs r(theta) = r0 + sum_k (a_k cos k.theta
+ b_k sin k.theta) around a center point.  Everything here is pure and
immutable; meshing and PDE solves live elsewhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryError",
    "StarBoundary",
    "TwoPhaseConfig",
    "HalfplaneSweepFrame",
    "CapRegion",
    "area",
    "perimeter",
    "reflect_point",
    "reflected_cap",
    "signed_gap",
    "deform_boundary",
    "boundary_to_text",
    "boundary_from_text",
]

_DENSE = 4096


class GeometryError(ValueError):
    """Invalid geometry: non-positive radius, gap violation, bad deformation."""


@dataclass(frozen=True)
class StarBoundary:
    """Closed star-shaped curve r(theta) = r0 + Fourier corrections."""

    center: tuple[float, float] = (0.0, 0.0)
    r0: float = 1.0
    cos_coeffs: tuple[float, ...] = ()
    sin_coeffs: tuple[float, ...] = ()

    def __post_init__(self):
        vals = (self.r0, *self.center, *self.cos_coeffs, *self.sin_coeffs)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError("non-finite boundary data")
        if self.r0 <= 0:
            raise GeometryError(f"r0 must be positive, got {self.r0}")
        th = np.linspace(0.0, 2 * np.pi, _DENSE, endpoint=False)
        if np.min(self.radius(th)) <= 0:
            raise GeometryError("radius function is not strictly positive")

    @property
    def order(self) -> int:
        return max(len(self.cos_coeffs), len(self.sin_coeffs))

    def radius(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = np.full_like(theta, self.r0)
        for k, a in enumerate(self.cos_coeffs, start=1):
            r = r + a * np.cos(k * theta)
        for k, b in enumerate(self.sin_coeffs, start=1):
            r = r + b * np.sin(k * theta)
        return r

    def radius_deriv(self, theta):
        theta = np.asarray(theta, dtype=float)
        dr = np.zeros_like(theta)
        for k, a in enumerate(self.cos_coeffs, start=1):
            dr = dr - a * k * np.sin(k * theta)
        for k, b in enumerate(self.sin_coeffs, start=1):
            dr = dr + b * k * np.cos(k * theta)
        return dr

    def radius_second(self, theta):
        theta = np.asarray(theta, dtype=float)
        d2 = np.zeros_like(theta)
        for k, a in enumerate(self.cos_coeffs, start=1):
            d2 = d2 - a * k * k * np.cos(k * theta)
        for k, b in enumerate(self.sin_coeffs, start=1):
            d2 = d2 - b * k * k * np.sin(k * theta)
        return d2

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.radius(theta)
        return np.stack(
            [self.center[0] + r * np.cos(theta), self.center[1] + r * np.sin(theta)],
            axis=-1,
        )

    def normal(self, theta):
        """Outward unit normal at the point of polar angle theta."""
        theta = np.asarray(theta, dtype=float)
        r = self.radius(theta)
        dr = self.radius_deriv(theta)
        nx = dr * np.sin(theta) + r * np.cos(theta)
        ny = -dr * np.cos(theta) + r * np.sin(theta)
        nrm = np.sqrt(nx * nx + ny * ny)
        return np.stack([nx / nrm, ny / nrm], axis=-1)

    def curvature(self, theta):
        """Signed curvature (positive for a convex curve traversed CCW)."""
        r = self.radius(theta)
        dr = self.radius_deriv(theta)
        d2r = self.radius_second(theta)
        return (r * r + 2 * dr * dr - r * d2r) / (r * r + dr * dr) ** 1.5

    def angle_of(self, pts):
        """Polar angle (mod 2pi) of points about this boundary's center."""
        pts = np.asarray(pts, dtype=float)
        return np.mod(
            np.arctan2(pts[..., 1] - self.center[1], pts[..., 0] - self.center[0]),
            2 * np.pi,
        )

    def contains(self, pts, shrink: float = 0.0):
        """True for points strictly inside (radius < r(theta) - shrink)."""
        pts = np.asarray(pts, dtype=float)
        dx = pts[..., 0] - self.center[0]
        dy = pts[..., 1] - self.center[1]
        rad = np.hypot(dx, dy)
        th = np.arctan2(dy, dx)
        return rad < self.radius(th) - shrink

    def polyline(self, n: int = 512, equal_arclength: bool = False):
        """Closed polyline approximation (n points, last != first)."""
        if equal_arclength:
            th = self.equal_arclength_angles(n)
        else:
            th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return self.point(th)

    def equal_arclength_angles(self, n: int, dense: int = 65536):
        """Angles giving n boundary points equally spaced in arclength."""
        th = np.linspace(0.0, 2 * np.pi, dense + 1)
        r = self.radius(th)
        dr = self.radius_deriv(th)
        ds = np.sqrt(r * r + dr * dr)
        s = np.concatenate([[0.0], np.cumsum((ds[1:] + ds[:-1]) * 0.5 * (th[1] - th[0]))])
        targets = np.linspace(0.0, s[-1], n, endpoint=False)
        return np.interp(targets, s, th)


def area(obj) -> float:
    """Enclosed area.  Exact for finite Fourier series: 1/2 int r^2 dtheta.

    Accepts a StarBoundary or a TwoPhaseConfig (whose area is that of the
    outer boundary).
    """
    if isinstance(obj, TwoPhaseConfig):
        obj = obj.outer
    a = np.asarray(obj.cos_coeffs, dtype=float)
    b = np.asarray(obj.sin_coeffs, dtype=float)
    return math.pi * (obj.r0 ** 2 + 0.5 * (np.sum(a * a) + np.sum(b * b)))


def perimeter(b: StarBoundary, dense: int = 65536) -> float:
    th = np.linspace(0.0, 2 * np.pi, dense + 1)
    r = b.radius(th)
    dr = b.radius_deriv(th)
    ds = np.sqrt(r * r + dr * dr)
    return float(np.trapezoid(ds, th))


@dataclass(frozen=True)
class TwoPhaseConfig:
    """The pair (D, Omega): outer boundary, core boundaries, core conductivity."""

    outer: StarBoundary
    cores: tuple[StarBoundary, ...]
    sigma_c: float
    gap_min_factor: float = 0.05

    def __post_init__(self):
        if isinstance(self.cores, list):
            object.__setattr__(self, "cores", tuple(self.cores))
        if not self.cores:
            raise GeometryError("at least one core is required")
        if not (self.sigma_c > 0 and abs(self.sigma_c - 1.0) >= 1e-9):
            raise GeometryError(
                f"sigma_c must be positive and != 1, got {self.sigma_c}"
            )
        gap_min = self.gap_min_factor * self.outer.r0
        for i, core in enumerate(self.cores):
            pts = core.polyline(_DENSE)
            if not np.all(self.outer.contains(pts)):
                raise GeometryError(f"core {i} is not strictly inside the outer boundary")
            if _polyline_gap(pts, self.outer.polyline(_DENSE)) < gap_min:
                raise GeometryError(
                    f"core {i} violates the minimum gap {gap_min:g} to the outer boundary"
                )
        for i in range(len(self.cores)):
            for j in range(i + 1, len(self.cores)):
                pi = self.cores[i].polyline(_DENSE)
                pj = self.cores[j].polyline(_DENSE)
                if self.cores[i].contains(pj).any() or self.cores[j].contains(pi).any():
                    raise GeometryError(f"cores {i} and {j} overlap")
                if _polyline_gap(pi, pj) <= 0:
                    raise GeometryError(f"cores {i} and {j} touch")

    def in_core(self, pts):
        """Boolean mask: point lies inside some core."""
        pts = np.asarray(pts, dtype=float)
        mask = np.zeros(pts.shape[:-1], dtype=bool)
        for core in self.cores:
            mask |= core.contains(pts)
        return mask


def _polyline_gap(pa, pb) -> float:
    from scipy.spatial import cKDTree

    return float(cKDTree(pb).query(pa)[0].min())


@dataclass(frozen=True)
class HalfplaneSweepFrame:
    """Oriented hyperplane {x . e = lambda} used by the moving-plane sweep."""

    direction: tuple[float, float]
    lam: float

    def __post_init__(self):
        e = np.asarray(self.direction, dtype=float)
        if abs(np.hypot(e[0], e[1]) - 1.0) > 1e-12:
            raise GeometryError("sweep direction must be a unit vector")


def reflect_point(x, frame: HalfplaneSweepFrame):
    """Reflect x across the hyperplane {x . e = lambda}; an isometric involution."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(frame.direction, dtype=float)
    return x - 2.0 * (np.tensordot(x, e, axes=([-1], [0])) - frame.lam)[..., None] * e


@dataclass(frozen=True)
class CapRegion:
    """Polygonal approximation of the reflected cap Omega_lambda."""

    frame: HalfplaneSweepFrame
    polygon: object = field(repr=False)  # shapely Polygon (empty when no cap)

    @property
    def is_empty(self) -> bool:
        return self.polygon.is_empty

    def signed_distance(self, pts):
        """Positive outside the region, negative inside."""
        from shapely.geometry import Point

        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty(len(pts))
        for i, p in enumerate(pts):
            q = Point(p)
            d = q.distance(self.polygon.exterior) if not self.is_empty else math.inf
            out[i] = -d if (not self.is_empty and self.polygon.contains(q)) else d
        return out


def reflected_cap(outer: StarBoundary, frame: HalfplaneSweepFrame,
                  resolution: int = 2048) -> CapRegion:
    """Reflection of {x in Omega : x.e > lambda} across the plane {x.e = lambda}."""
    from shapely.geometry import Polygon

    pts = outer.polyline(resolution)
    omega = Polygon(pts)
    e = np.asarray(frame.direction, dtype=float)
    proj = pts @ e
    span = proj.max() - proj.min()
    if frame.lam >= proj.max():
        return CapRegion(frame=frame, polygon=Polygon())
    # halfplane {x.e > lam} as a large box aligned with e
    perp = np.array([-e[1], e[0]])
    c = frame.lam * e
    big = 10.0 * (span + abs(frame.lam)) + 10.0 * outer.r0
    box = Polygon([
        c + big * perp,
        c - big * perp,
        c - big * perp + big * e,
        c + big * perp + big * e,
    ])
    cap = omega.intersection(box)
    if cap.is_empty:
        return CapRegion(frame=frame, polygon=Polygon())
    # reflect across the plane
    def _reflect_poly(poly):
        ext = reflect_point(np.asarray(poly.exterior.coords), frame)
        return Polygon(ext)

    if cap.geom_type == "Polygon":
        refl = _reflect_poly(cap)
    else:  # MultiPolygon: keep all pieces, merged
        from shapely.ops import unary_union

        refl = unary_union([_reflect_poly(g) for g in cap.geoms])
    return CapRegion(frame=frame, polygon=refl)


def signed_gap(cap: CapRegion, cores) -> tuple[float, tuple[float, float] | None]:
    """Minimum distance between the closed cap and the closed core set.

    Negative when they overlap (penetration depth).  Returns the gap and a
    witness point near the closest approach (None for an empty cap).
    """
    from shapely.geometry import Polygon
    from shapely.ops import nearest_points, unary_union

    if isinstance(cores, StarBoundary):
        cores = (cores,)
    if cap.is_empty:
        return math.inf, None
    core_poly = unary_union([Polygon(c.polyline(2048)) for c in cores])
    if cap.polygon.intersects(core_poly):
        inter = cap.polygon.intersection(core_poly)
        if inter.is_empty or inter.area == 0.0:
            p, _ = nearest_points(cap.polygon, core_poly)
            return 0.0, (p.x, p.y)
        # penetration depth: deepest overlap point w.r.t. either boundary
        from shapely.geometry import Point

        geoms = [inter] if inter.geom_type == "Polygon" else list(inter.geoms)
        depth = 0.0
        witness = None
        for g in geoms:
            pts = np.asarray(g.exterior.coords)
            cand = np.vstack([pts, pts.mean(axis=0)])
            for p in cand:
                d = min(Point(p).distance(core_poly.boundary),
                        Point(p).distance(cap.polygon.boundary))
                if d > depth:
                    depth = d
                    witness = (float(p[0]), float(p[1]))
        return -depth, witness
    p, q = nearest_points(cap.polygon, core_poly)
    return float(p.distance(q)), (float(p.x), float(p.y))


def _hn_callable(hn):
    """Turn nodal (theta, value) data or a callable into a periodic function."""
    if callable(hn):
        return hn
    theta = np.asarray(hn.theta, dtype=float)
    vals = np.asarray(hn.values, dtype=float)
    order = np.argsort(theta)
    th = theta[order]
    va = vals[order]
    th_ext = np.concatenate([th - 2 * np.pi, th, th + 2 * np.pi])
    va_ext = np.concatenate([va, va, va])

    def f(t):
        return np.interp(np.mod(t, 2 * np.pi), th_ext, va_ext)

    return f


def deform_boundary(b: StarBoundary, hn, t: float,
                    volume_renormalize: bool = False,
                    fit_order: int | None = None,
                    samples: int | None = None) -> StarBoundary:
    """Move each boundary point by t * hn * n and refit the Fourier graph.

    ``hn`` is either a callable of theta or a boundary field carrying
    ``theta`` and ``values``.  With ``volume_renormalize`` the result is
    rescaled radially so its area matches the input area exactly.
    """
    f = _hn_callable(hn)
    if fit_order is None:
        fit_order = max(b.order, 16)
    if samples is None:
        samples = max(8 * (2 * fit_order + 1), 1024)
    th = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    pts = b.point(th) + t * f(th)[:, None] * b.normal(th)
    dx = pts[:, 0] - b.center[0]
    dy = pts[:, 1] - b.center[1]
    rad = np.hypot(dx, dy)
    ang = np.arctan2(dy, dx)
    if np.min(rad) <= 0:
        raise GeometryError("deformation collapsed the boundary through its center")
    # monotone angle check guards against self-intersection of the graph
    order = np.argsort(ang)
    if np.any(np.diff(ang[order]) <= 0):
        raise GeometryError("deformed boundary is no longer a star-shaped graph")
    # least-squares Fourier fit of rad(ang)
    cols = [np.ones_like(ang)]
    for k in range(1, fit_order + 1):
        cols.append(np.cos(k * ang))
        cols.append(np.sin(k * ang))
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, rad, rcond=None)
    r0 = float(coef[0])
    cos_c = tuple(float(c) for c in coef[1::2])
    sin_c = tuple(float(c) for c in coef[2::2])
    try:
        out = StarBoundary(center=b.center, r0=r0, cos_coeffs=cos_c, sin_coeffs=sin_c)
    except GeometryError as exc:
        raise GeometryError(f"invalid deformation: {exc}") from exc
    if volume_renormalize:
        s = math.sqrt(area(b) / area(out))
        out = StarBoundary(
            center=b.center,
            r0=s * out.r0,
            cos_coeffs=tuple(s * c for c in out.cos_coeffs),
            sin_coeffs=tuple(s * c for c in out.sin_coeffs),
        )
    return out


# --- serialization -----------------------------------------------------------

def boundary_to_text(b: StarBoundary) -> str:
    """Flat text block with keys center, r0, cos, sin (exact round trip)."""
    lines = [
        "center=" + ",".join(repr(v) for v in b.center),
        "r0=" + repr(b.r0),
        "cos=" + ",".join(repr(v) for v in b.cos_coeffs),
        "sin=" + ",".join(repr(v) for v in b.sin_coeffs),
    ]
    return "\n".join(lines) + "\n"


def boundary_from_text(text: str) -> StarBoundary:
    data = {}
    for line in text.strip().splitlines():
        if not line.strip():
            continue
        key, _, val = line.partition("=")
        data[key.strip()] = val.strip()
    missing = {"center", "r0"} - set(data)
    if missing:
        raise GeometryError(f"missing keys in boundary block: {sorted(missing)}")

    def floats(s):
        return tuple(float(v) for v in s.split(",") if v.strip())

    return StarBoundary(
        center=tuple(floats(data["center"])),
        r0=float(data["r0"]),
        cos_coeffs=floats(data.get("cos", "")),
        sin_coeffs=floats(data.get("sin", "")),
    )
