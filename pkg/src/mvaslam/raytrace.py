"""Backward ray tracing for path-availability checks.

A propagation path (line of sight, single bounce, or double bounce) is
traced backward from the agent toward the virtual anchor that represents
it.  Each bounce must hit its reflective surface inside the reflector
extent, and every hop segment must be free of obstructions.  Availability
feeds the per-path detection probabilities: an unavailable path cannot
produce a measurement.

All core tests are written against arrays so the SLAM engine can evaluate
thousands of per-particle paths in one call; the scalar ``path_available``
contract wraps the same primitives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateSurface
from .geometry import EPS_GEO, Surface, WallSegment, mva_to_va


@dataclass(frozen=True)
class PathClass:
    """One propagation path: LOS, single bounce at ``s``, or double bounce.

    For a double bounce ``(s, s2)``, ``s`` is the surface of the bounce
    nearest the agent and ``s2`` the one nearest the anchor, matching the
    virtual-anchor composition in :func:`mvaslam.geometry.double_bounce_va`.
    """

    s: Optional[int] = None
    s2: Optional[int] = None

    def __post_init__(self):
        if self.s is None and self.s2 is not None:
            raise ValueError("double-bounce path requires both surface indices")
        if self.s is not None and self.s == self.s2:
            raise ValueError("double-bounce surfaces must differ")

    @property
    def kind(self) -> str:
        if self.s is None:
            return "los"
        return "single" if self.s2 is None else "double"


LOS = PathClass()


def single_bounce(s: int) -> PathClass:
    return PathClass(s=s)


def double_bounce(s: int, s2: int) -> PathClass:
    return PathClass(s=s, s2=s2)


@dataclass(frozen=True)
class Environment:
    """Static geometry: reflector walls plus opaque, non-reflecting blockers."""

    walls: tuple[WallSegment, ...] = ()
    blockers: tuple[WallSegment, ...] = ()

    def __init__(self, walls: Sequence[WallSegment] = (), blockers: Sequence[WallSegment] = ()):
        object.__setattr__(self, "walls", tuple(walls))
        object.__setattr__(self, "blockers", tuple(blockers))

    def validate(self, surfaces: Sequence[Surface]) -> None:
        """Check that every reflector segment lies on its surface's line."""
        for wall in self.walls:
            if wall.surface_index is None:
                continue
            if not 0 <= wall.surface_index < len(surfaces):
                raise DegenerateSurface(
                    f"wall references surface {wall.surface_index} of {len(surfaces)}"
                )
            surf = surfaces[wall.surface_index]
            n = surf.unit_normal
            c = float(n @ surf.line_point)
            for endpoint in (wall.a, wall.b):
                if abs(float(n @ endpoint) - c) >= EPS_GEO:
                    raise DegenerateSurface(
                        f"wall segment does not lie on surface {wall.surface_index} line"
                    )

    def reflector_extent(self, surface_index: int, surfaces: Sequence[Surface]):
        """Tangential parameter range covered by the reflectors of a surface.

        Returns ``(lo, hi)`` in the surface's own tangent coordinate, or
        ``None`` when no wall is registered (infinite reflector).
        """
        tangent = surfaces[surface_index].tangent
        params = []
        for wall in self.walls:
            if wall.surface_index == surface_index:
                params.extend([float(tangent @ wall.a), float(tangent @ wall.b)])
        if not params:
            return None
        return min(params), max(params)


def segment_intersection(a1, a2, b1, b2, eps: float = 1e-12):
    """Intersection point of two closed segments, or None.

    Collinear overlap is reported as the overlap point nearest ``a1``.
    """
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    r = a2 - a1
    s = b2 - b1
    denom = r[0] * s[1] - r[1] * s[0]
    qp = b1 - a1
    qp_cross_r = qp[0] * r[1] - qp[1] * r[0]
    scale = max(np.hypot(*r) * np.hypot(*s), 1.0)
    if abs(denom) <= eps * scale:
        if abs(qp_cross_r) > eps * scale:
            return None  # parallel, not collinear
        rr = float(r @ r)
        t0 = float(qp @ r) / rr
        t1 = float((b2 - a1) @ r) / rr
        lo, hi = min(t0, t1), max(t0, t1)
        if hi < 0.0 or lo > 1.0:
            return None
        return a1 + min(max(lo, 0.0), 1.0) * r
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = qp_cross_r / denom
    if -eps <= t <= 1.0 + eps and -eps <= u <= 1.0 + eps:
        return a1 + t * r
    return None


def detection_probability(path: PathClass, available, base: float):
    """Detection probability of a path: ``base`` when available, else 0."""
    if not 0.0 <= base <= 1.0:
        raise ValueError("base detection probability must lie in [0, 1]")
    return np.where(np.asarray(available, dtype=bool), base, 0.0)[()]


# ---------------------------------------------------------------------------
# Array primitives shared by the scalar contract and the SLAM engine.
# Points are (..., 2); line normals (..., 2) with offsets (...,) describe
# n . x = c.  Everything broadcasts.
# ---------------------------------------------------------------------------


def line_crossing(p, q, normal, offset):
    """Where segment [p, q] crosses the line ``normal . x = offset``.

    Returns ``(ok, hit)``: ``ok`` is True when p and q lie on opposite sides
    (touching counts), ``hit`` is the crossing point (unspecified when not
    ``ok``).
    """
    sd_p = np.sum(np.asarray(p) * normal, axis=-1) - offset
    sd_q = np.sum(np.asarray(q) * normal, axis=-1) - offset
    denom = sd_p - sd_q
    safe = np.abs(denom) > 1e-300
    t = np.where(safe, sd_p / np.where(safe, denom, 1.0), 0.0)
    ok = (sd_p * sd_q <= 0.0) & safe
    hit = np.asarray(p) + t[..., None] * (np.asarray(q) - np.asarray(p))
    return ok, hit


def segment_blocks(p, q, a, b, eps: float = EPS_GEO):
    """True where segment [a, b] obstructs the open interior of hop [p, q].

    Crossings within ``eps`` (in meters) of the hop endpoints do not count:
    hop endpoints lie on reflectors by construction.  Grazing the blocking
    segment's own endpoints does count (deterministic tie-break).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    pq = q - p
    # side of p/q relative to line ab, and of a/b relative to line pq
    cross_ap = ab[..., 0] * (p[..., 1] - a[..., 1]) - ab[..., 1] * (p[..., 0] - a[..., 0])
    cross_aq = ab[..., 0] * (q[..., 1] - a[..., 1]) - ab[..., 1] * (q[..., 0] - a[..., 0])
    cross_pa = pq[..., 0] * (a[..., 1] - p[..., 1]) - pq[..., 1] * (a[..., 0] - p[..., 0])
    cross_pb = pq[..., 0] * (b[..., 1] - p[..., 1]) - pq[..., 1] * (b[..., 0] - p[..., 0])

    hop_len = np.hypot(pq[..., 0], pq[..., 1])
    denom_t = cross_ap - cross_aq
    safe_t = np.abs(denom_t) > 1e-300
    t = np.where(safe_t, cross_ap / np.where(safe_t, denom_t, 1.0), -1.0)
    margin = np.where(hop_len > 0, eps / np.maximum(hop_len, 1e-300), 0.0)
    interior = (t > margin) & (t < 1.0 - margin)

    seg_len = np.hypot(ab[..., 0], ab[..., 1])
    denom_u = cross_pa - cross_pb
    safe_u = np.abs(denom_u) > 1e-300
    u = np.where(safe_u, cross_pa / np.where(safe_u, denom_u, 1.0), -1.0)
    margin_u = eps / np.maximum(seg_len, 1e-300)
    within = (u >= -margin_u) & (u <= 1.0 + margin_u)

    crossing = (cross_ap * cross_aq <= 0.0) & (cross_pa * cross_pb <= 0.0)
    blocked = crossing & safe_t & safe_u & interior & within

    # collinear overlap: hop slides along the segment
    scale = np.maximum(seg_len * hop_len, 1e-300)
    collinear = (np.abs(cross_ap) <= eps * scale) & (np.abs(cross_aq) <= eps * scale)
    if np.any(collinear):
        rr = np.maximum(np.sum(pq * pq, axis=-1), 1e-300)
        t0 = np.sum((a - p) * pq, axis=-1) / rr
        t1 = np.sum((b - p) * pq, axis=-1) / rr
        lo = np.minimum(t0, t1)
        hi = np.maximum(t0, t1)
        overlap = (hi > margin) & (lo < 1.0 - margin)
        blocked = blocked | (collinear & overlap)
    return blocked


def hop_obstructed(p, q, segments, exclude_index=None, eps: float = EPS_GEO):
    """True where any wall/blocker segment obstructs hop [p, q].

    ``segments`` is a sequence of (a, b, surface_index) triples; entries whose
    surface index equals ``exclude_index`` are skipped (a reflector never
    blocks the hop it reflects).
    """
    blocked = np.zeros(np.broadcast(np.asarray(p)[..., 0], np.asarray(q)[..., 0]).shape, dtype=bool)
    for a, b, surface_index in segments:
        if exclude_index is not None and surface_index == exclude_index:
            continue
        blocked |= segment_blocks(p, q, a, b, eps=eps)
    return blocked


def _extent_ok(hit, tangent, extent, eps):
    if extent is None:
        return np.ones(np.asarray(hit).shape[:-1], dtype=bool)
    tau = np.sum(np.asarray(hit) * tangent, axis=-1)
    lo, hi = extent
    return (tau >= lo - eps) & (tau <= hi + eps)


def path_available(agent, pa, path: PathClass, surfaces: Sequence[Surface], env: Environment,
                   eps: float = EPS_GEO) -> bool:
    """Backward-trace one path and report whether it is available.

    LOS: the agent-anchor segment must be unobstructed.  Single bounce: the
    segment from the agent to the VA must cross surface ``s`` inside its
    reflector extent at ``w``; hops agent-``w`` and ``w``-anchor must be
    unobstructed.  Double bounce adds the second reflection analogously.
    Degenerate VA constructions simply yield False.
    """
    agent = np.asarray(agent, dtype=float)
    pa = np.asarray(pa, dtype=float)
    segments = [(w.a, w.b, w.surface_index) for w in env.walls]
    segments += [(w.a, w.b, None) for w in env.blockers]

    if path.kind == "los":
        return not bool(hop_obstructed(agent, pa, segments, eps=eps))

    surf_s = surfaces[path.s]
    if path.kind == "single":
        va = mva_to_va(surf_s.mva, pa, strict=False)
        if not np.all(np.isfinite(va)):
            return False
        ok, w = line_crossing(agent, va, surf_s.unit_normal, float(surf_s.unit_normal @ surf_s.line_point))
        if not bool(ok):
            return False
        if not bool(_extent_ok(w, surf_s.tangent, env.reflector_extent(path.s, surfaces), eps)):
            return False
        if bool(hop_obstructed(agent, w, segments, exclude_index=path.s, eps=eps)):
            return False
        return not bool(hop_obstructed(w, pa, segments, eps=eps))

    surf_s2 = surfaces[path.s2]
    va1 = mva_to_va(surf_s2.mva, pa, strict=False)
    va2 = mva_to_va(surf_s.mva, va1, strict=False) if np.all(np.isfinite(va1)) else np.full(2, np.nan)
    if not (np.all(np.isfinite(va1)) and np.all(np.isfinite(va2))):
        return False
    ok1, w1 = line_crossing(agent, va2, surf_s.unit_normal, float(surf_s.unit_normal @ surf_s.line_point))
    if not bool(ok1):
        return False
    if not bool(_extent_ok(w1, surf_s.tangent, env.reflector_extent(path.s, surfaces), eps)):
        return False
    ok2, w2 = line_crossing(w1, va1, surf_s2.unit_normal, float(surf_s2.unit_normal @ surf_s2.line_point))
    if not bool(ok2):
        return False
    if not bool(_extent_ok(w2, surf_s2.tangent, env.reflector_extent(path.s2, surfaces), eps)):
        return False
    if bool(hop_obstructed(agent, w1, segments, exclude_index=path.s, eps=eps)):
        return False
    if bool(hop_obstructed(w1, w2, segments, exclude_index=path.s2, eps=eps)):
        return False
    return not bool(hop_obstructed(w2, pa, segments, eps=eps))
