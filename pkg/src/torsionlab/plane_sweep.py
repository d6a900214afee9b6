"""Moving-plane sweep: terminal-case detection and the tentacle verdict.

The sweep is purely geometric; decreasing lambda from the first-contact
value, it watches for the reflected cap touching the core closure
(CoreTouch), the cap touching the outer boundary away from the plane
(BoundaryTouch), or the plane cutting the outer boundary orthogonally
(OrthogonalCut).  The reflected-difference field is a separate PDE
diagnostic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import FemField
from .geometry import (CapRegion, HalfplaneSweepFrame, StarBoundary,
                       TwoPhaseConfig, reflect_point, reflected_cap, signed_gap)

__all__ = ["SweepError", "SweepReport", "TentacleVerdict", "first_contact",
           "sweep", "tentacle_scan", "reflected_difference",
           "dumbbell_fixture", "WAIST_NORMAL"]

#: Unit normal of the dumbbell fixture's waist cross-section (its long axis).
WAIST_NORMAL = (1.0, 0.0)


def dumbbell_fixture(sigma_c: float = 2.0):
    """Two-bulb outer boundary with the core inside the left bulb.

    Sweeping along the waist normal (1, 0) makes the reflected right bulb
    exit the domain through the neck (OrthogonalCut/BoundaryTouch) while the
    core, tucked in the far bulb, is still distant — the canonical
    tentacle-positive fixture.  A centered core would intercept the sweep
    first and mask the exit event.
    """
    return TwoPhaseConfig(
        outer=StarBoundary(cos_coeffs=(0.0, 0.45)),
        cores=(StarBoundary(center=(-0.8, 0.0), r0=0.15),),
        sigma_c=sigma_c,
    )

CASE_CORE = "CoreTouch"
CASE_BOUNDARY = "BoundaryTouch"
CASE_ORTHO = "OrthogonalCut"


class SweepError(RuntimeError):
    pass


@dataclass
class SweepReport:
    direction: tuple[float, float]
    first_contact_lambda: float
    terminal_lambda: float
    terminal_case: str
    witness_point: tuple[float, float] | None
    margins: dict
    tie: bool = False


@dataclass
class TentacleVerdict:
    has_tentacle: bool
    reports: list[SweepReport]
    offending_directions: list[tuple[float, float]]


def first_contact(outer: StarBoundary, e) -> float:
    """lambda_0 = max over the boundary of x . e (support function value)."""
    e = np.asarray(e, dtype=float)
    th = np.linspace(0.0, 2 * np.pi, 4096, endpoint=False)
    proj = outer.point(th) @ e
    i = int(np.argmax(proj))

    def f(t):
        return -(outer.point(np.array([t]))[0] @ e)

    lo = th[(i - 1) % len(th)]
    hi = th[(i + 1) % len(th)]
    if hi < lo:
        hi += 2 * np.pi
    # golden-section refinement
    gr = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    while b - a > 1e-13:
        if f(c) < f(d):
            b, d = d, c
            c = b - gr * (b - a)
        else:
            a, c = c, d
            d = a + gr * (b - a)
    return float(-f((a + b) / 2))


class _SweepContext:
    """Per-sweep geometry cache: boundary/core samples reused at every lambda."""

    def __init__(self, config: TwoPhaseConfig, e, resolution: int):
        self.config = config
        self.e = np.asarray(e, dtype=float)
        self.outer = config.outer
        self.th = np.linspace(0.0, 2 * np.pi, resolution, endpoint=False)
        self.pts = self.outer.point(self.th)
        self.proj = self.pts @ self.e
        self.lam0 = float(self.proj.max())
        self.top = self.pts[int(np.argmax(self.proj))]
        self.core_pts = np.vstack([c.polyline(512) for c in config.cores])
        self.core_proj = self.core_pts @ self.e
        self.perp = np.array([-self.e[1], self.e[0]])
        self.halfspan = float(np.abs(self.pts @ self.perp).max()) + self.outer.r0


def _fast_margins(ctx: _SweepContext, lam: float):
    """(core gap, interior-touch margin, orthogonality margin), numpy only.

    Distances to disjoint sets are sampled (slight overestimates); sign
    changes (penetration, boundary exit) are exact up to boundary sampling,
    which is what the bisection in `sweep` relies on.
    """
    outer, e = ctx.outer, ctx.e
    cx, cy = outer.center

    # --- core gap: cap touches the reflected core iff the reflected cap
    # touches the core, so reflect the core instead (one fixed polyline).
    refl_core = ctx.core_pts - np.outer(2.0 * (ctx.core_proj - lam), e)
    rc_proj = 2.0 * lam - ctx.core_proj
    rr = np.hypot(refl_core[:, 0] - cx, refl_core[:, 1] - cy)
    inside = (rr < outer.radius(outer.angle_of(refl_core))) & (rc_proj > lam)
    if inside.any():
        i = np.nonzero(inside)[0]
        depth = np.minimum(rc_proj[i] - lam,
                           outer.radius(outer.angle_of(refl_core[i])) - rr[i])
        gap = -float(depth.max())
    elif ctx.config.in_core(reflect_point(ctx.top[None, :],
                            HalfplaneSweepFrame(tuple(e), lam))[0]):
        gap = -1e-12      # cap swallowed by the reflected core
    else:
        selb = ctx.proj >= lam
        capb = ctx.pts[selb]
        t = np.linspace(-ctx.halfspan, ctx.halfspan, 256)
        chord = lam * e[None, :] + t[:, None] * ctx.perp[None, :]
        crr = np.hypot(chord[:, 0] - cx, chord[:, 1] - cy)
        chord = chord[crr < outer.radius(outer.angle_of(chord))]
        capb = np.vstack([capb[::2], chord]) if len(chord) else capb[::2]
        rc = refl_core[::2]
        d2 = ((rc[:, None, 0] - capb[None, :, 0]) ** 2
              + (rc[:, None, 1] - capb[None, :, 1]) ** 2)
        gap = float(np.sqrt(d2.min()))

    # --- interior-touch margin (reflected arc vs outer boundary), excluding
    # a band near the plane where contact holds by construction
    band = 0.05 * outer.r0 + 0.1 * max(ctx.lam0 - lam, 0.0)
    sel = ctx.proj > lam + band
    touch = math.inf
    if sel.any():
        refl = ctx.pts[sel] - np.outer(2.0 * (ctx.proj[sel] - lam), e)
        rrr = np.hypot(refl[:, 0] - cx, refl[:, 1] - cy)
        touch = float((outer.radius(outer.angle_of(refl)) - rrr).min())

    # --- orthogonality margin at the plane crossings (linear interpolation
    # of the sign change is accurate far beyond the angular tolerance)
    vals = ctx.proj - lam
    nxt = np.roll(vals, -1)
    cross = np.nonzero((vals == 0.0) | (vals * nxt < 0.0))[0]
    ortho = math.inf
    if len(cross):
        dth = ctx.th[1] - ctx.th[0]
        frac = np.where(vals[cross] == 0.0, 0.0,
                        vals[cross] / (vals[cross] - nxt[cross]))
        tcross = ctx.th[cross] + frac * dth
        n = outer.normal(tcross)
        ortho = float(np.arcsin(np.minimum(1.0, np.abs(n @ e))).min())
    return gap, touch, ortho


def _plane_crossings(outer: StarBoundary, e, lam, n: int = 4096):
    """Boundary angles where x . e = lam (sign changes, bisected)."""
    th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    vals = outer.point(th) @ e - lam
    roots = []
    for i in range(n):
        j = (i + 1) % n
        a, b = vals[i], vals[j]
        if a == 0.0:
            roots.append(th[i])
        elif a * b < 0:
            lo, hi = th[i], th[i] + (2 * np.pi / n)
            flo = a
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                fm = outer.point(np.array([mid]))[0] @ e - lam
                if flo * fm <= 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            roots.append(0.5 * (lo + hi))
    return np.asarray(roots)


def _margins(config: TwoPhaseConfig, e, lam, resolution: int):
    """(core gap, interior-touch margin, orthogonality margin, witnesses)."""
    outer = config.outer
    frame = HalfplaneSweepFrame(direction=tuple(e), lam=lam)
    cap = reflected_cap(outer, frame, resolution=resolution)
    gap, gap_witness = signed_gap(cap, config.cores)

    # interior-touch margin: distance from the reflected boundary arc (away
    # from the plane) to the outer boundary.  Points near the plane are
    # excluded: there the arc meets the boundary by construction.
    th = np.linspace(0.0, 2 * np.pi, resolution, endpoint=False)
    pts = outer.point(th)
    proj = pts @ e
    lam0_local = proj.max()
    band = 0.05 * outer.r0 + 0.1 * max(lam0_local - lam, 0.0)
    sel = proj > lam + band
    touch = math.inf
    touch_witness = None
    if sel.any():
        refl = reflect_point(pts[sel], frame)
        rr = np.hypot(refl[:, 0] - outer.center[0], refl[:, 1] - outer.center[1])
        tt = outer.angle_of(refl)
        d = outer.radius(tt) - rr       # positive while strictly inside
        i = int(np.argmin(d))
        touch = float(d[i])
        touch_witness = (float(refl[i, 0]), float(refl[i, 1]))

    # orthogonality margin: angle between the boundary tangent and e at the
    # plane crossings; pi/2 deviation 0 means the plane cuts orthogonally
    ortho = math.inf
    ortho_witness = None
    for t in _plane_crossings(outer, e, lam):
        n = outer.normal(np.array([t]))[0]
        dev = abs(math.asin(min(1.0, abs(n @ e))))   # 0 when n is perp to e
        if dev < ortho:
            ortho = dev
            p = outer.point(np.array([t]))[0]
            ortho_witness = (float(p[0]), float(p[1]))
    return gap, gap_witness, touch, touch_witness, ortho, ortho_witness


def sweep(config: TwoPhaseConfig, e, dlambda: float | None = None,
          tol_touch: float | None = None, tol_angle: float = 1e-3,
          resolution: int = 1024) -> SweepReport:
    """Decrease lambda from first contact until one terminal case fires.

    Tie-breaking priority: CoreTouch > BoundaryTouch > OrthogonalCut (ties
    recorded, never reported as a tentacle when CoreTouch also fired).
    """
    e = np.asarray(e, dtype=float)
    e = e / np.hypot(e[0], e[1])
    outer = config.outer
    lam0 = first_contact(outer, e)
    if tol_touch is None:
        tol_touch = 1e-6 * outer.r0
    if dlambda is None:
        dlambda = lam0 / 400 if lam0 > 0 else outer.r0 / 400
        dlambda = max(dlambda, outer.r0 / 800)
    lam_floor = min(np.min(c.polyline(1024) @ e) for c in config.cores)
    ctx = _SweepContext(config, e, resolution)

    def fired(margs):
        gap, touch, ortho = margs
        hits = []
        if gap <= tol_touch:
            hits.append(CASE_CORE)
        if touch <= tol_touch:
            hits.append(CASE_BOUNDARY)
        if ortho <= tol_angle:
            hits.append(CASE_ORTHO)
        return hits

    lam_prev = lam0
    lam = lam0 - dlambda
    while lam > lam_floor - dlambda:
        hits = fired(_fast_margins(ctx, lam))
        if hits:
            # bisection refinement of the crossing between lam_prev and lam
            lo, hi = lam, lam_prev
            while hi - lo > 1e-8:
                mid = 0.5 * (lo + hi)
                if fired(_fast_margins(ctx, mid)):
                    lo = mid
                else:
                    hi = mid
            gap, gap_w, touch, touch_w, ortho, ortho_w = _margins(
                config, e, lo, resolution)
            hits = fired((gap, touch, ortho)) or hits
            for case, witness in ((CASE_CORE, gap_w), (CASE_BOUNDARY, touch_w),
                                  (CASE_ORTHO, ortho_w)):
                if case in hits:
                    others = {
                        "core_gap": gap, "boundary_touch": touch,
                        "orthogonality": ortho,
                    }
                    return SweepReport(
                        direction=(float(e[0]), float(e[1])),
                        first_contact_lambda=lam0,
                        terminal_lambda=float(lo),
                        terminal_case=case,
                        witness_point=witness,
                        margins=others,
                        tie=len(hits) > 1,
                    )
        lam_prev = lam
        lam -= dlambda
    raise SweepError(
        f"sweep along e={tuple(e)} reached the core slab without any terminal "
        f"case (last lambda {lam_prev:g}, floor {lam_floor:g})")


def tentacle_scan(config: TwoPhaseConfig, n_directions: int = 64,
                  **sweep_kwargs) -> TentacleVerdict:
    """Sweep uniformly spaced directions; tentacle iff some sweep ends in
    BoundaryTouch or OrthogonalCut."""
    if n_directions < 8:
        raise SweepError("need at least 8 directions")
    reports = []
    offending = []
    for i in range(n_directions):
        ang = 2 * np.pi * i / n_directions
        e = (math.cos(ang), math.sin(ang))
        rep = sweep(config, e, **sweep_kwargs)
        reports.append(rep)
        if rep.terminal_case in (CASE_BOUNDARY, CASE_ORTHO):
            offending.append(rep.direction)
    return TentacleVerdict(has_tentacle=bool(offending), reports=reports,
                           offending_directions=offending)


def _interpolate(mesh, values, pts):
    """P1 interpolation of nodal values at points (NaN outside the mesh)."""
    from matplotlib.tri import LinearTriInterpolator, Triangulation

    tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1],
                        mesh.triangles)
    f = LinearTriInterpolator(tri, values[: len(mesh.vertices)])
    pts = np.atleast_2d(pts)
    out = f(pts[:, 0], pts[:, 1])
    return np.ma.filled(out, np.nan)


def reflected_difference(u: FemField, config: TwoPhaseConfig, e, lam: float,
                         grid_n: int = 60, require_clear_of_core: bool = True):
    """Sample w_lambda(x) = u(x) - u(x_lambda) on a grid of the reflected cap.

    Returns (min value, location, number of samples).  With
    ``require_clear_of_core`` the cap must stay inside the shell.
    """
    e = np.asarray(e, dtype=float)
    frame = HalfplaneSweepFrame(direction=tuple(e / np.hypot(e[0], e[1])),
                                lam=lam)
    cap = reflected_cap(config.outer, frame)
    if cap.is_empty:
        raise SweepError("empty reflected cap: lambda above first contact")
    if require_clear_of_core:
        gap, _ = signed_gap(cap, config.cores)
        if gap <= 0:
            raise SweepError(
                f"reflected cap intersects the core closure (gap {gap:g})")
    minx, miny, maxx, maxy = cap.polygon.bounds
    xs = np.linspace(minx, maxx, grid_n)
    ys = np.linspace(miny, maxy, grid_n)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    inside = cap.signed_distance(pts) < -1e-9
    pts = pts[inside]
    if len(pts) == 0:
        raise SweepError("no interior sample points in the reflected cap")
    u1 = _interpolate(u.mesh, u.values, pts)
    u2 = _interpolate(u.mesh, u.values, reflect_point(pts, frame))
    w = u1 - u2
    ok = ~np.isnan(w)
    w = w[ok]
    pts = pts[ok]
    i = int(np.argmin(w))
    return float(w[i]), (float(pts[i, 0]), float(pts[i, 1])), len(w)
