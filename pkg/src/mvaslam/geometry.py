"""Exact 2-D transforms between reflective surfaces, physical anchors (PAs),
virtual anchors (VAs), and master virtual anchors (MVAs).

Conventions used throughout the package:

* Points are length-2 float arrays (or array-likes); every operation
  broadcasts over leading axes, so ``(n, 2)`` stacks of points work directly.
* A reflective surface is canonically stored as its MVA point: the mirror
  image of the coordinate origin across the surface line.  The unit normal
  ``u = mva / |mva|`` and the line point ``e = mva / 2`` are derived on
  demand.
* Angles are wrapped to ``[-pi, pi)`` everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoincidentPoints, DegenerateSurface, DegeneratePair

EPS_GEO = 1e-6
"""Degeneracy threshold in meters (far below any physical scale here)."""


def wrap_angle(phi):
    """Wrap angle(s) to the half-open interval [-pi, pi)."""
    return np.mod(np.asarray(phi, dtype=float) + np.pi, 2.0 * np.pi) - np.pi


def _as_points(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 2:
        raise ValueError(f"expected points with last axis 2, got shape {p.shape}")
    return p


@dataclass(frozen=True)
class Surface:
    """A reflective surface line, stored as its MVA point.

    The MVA is the mirror image of the origin across the surface line, so the
    line itself is the perpendicular bisector of the segment origin-MVA.  A
    line through the origin has no valid MVA and is rejected.
    """

    mva: np.ndarray

    def __post_init__(self):
        mva = _as_points(self.mva).reshape(2)
        if not np.all(np.isfinite(mva)):
            raise DegenerateSurface("MVA has non-finite components")
        if np.hypot(mva[0], mva[1]) <= EPS_GEO:
            raise DegenerateSurface("surface line passes through the origin")
        object.__setattr__(self, "mva", mva)

    @property
    def unit_normal(self) -> np.ndarray:
        """Unit normal of the surface line (pointing away from the origin)."""
        return self.mva / np.linalg.norm(self.mva)

    @property
    def line_point(self) -> np.ndarray:
        """A point on the surface line (the foot of the origin's mirror)."""
        return self.mva / 2.0

    @property
    def tangent(self) -> np.ndarray:
        """Unit tangent of the surface line."""
        u = self.unit_normal
        return np.array([-u[1], u[0]])

    @classmethod
    def from_segment(cls, a, b) -> "Surface":
        """Surface whose line passes through segment endpoints ``a`` and ``b``."""
        a = _as_points(a).reshape(2)
        b = _as_points(b).reshape(2)
        d = b - a
        length = np.hypot(d[0], d[1])
        if length <= EPS_GEO:
            raise CoincidentPoints("segment endpoints coincide")
        n = np.array([-d[1], d[0]]) / length
        # mva = twice the projection of the origin onto the line
        return cls(mva=2.0 * np.dot(n, a) * n)


@dataclass(frozen=True)
class WallSegment:
    """Finite wall segment; ``surface_index`` ties a reflector to its Surface."""

    a: np.ndarray
    b: np.ndarray
    surface_index: int | None = None

    def __post_init__(self):
        a = _as_points(self.a).reshape(2)
        b = _as_points(self.b).reshape(2)
        if np.hypot(*(b - a)) <= EPS_GEO:
            raise CoincidentPoints("wall segment endpoints coincide")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


def mirror_point(p, surface: Surface):
    """Mirror point(s) ``p`` across a reflective surface.

    Uses the normal/line-point form: ``p + 2 (u.e - u.p) u``.  Involution:
    mirroring twice returns the input.
    """
    p = _as_points(p)
    u = surface.unit_normal
    e = surface.line_point
    return p + 2.0 * (np.dot(e, u) - p @ u)[..., None] * u


def mva_to_va(mva, pa, strict: bool = True):
    """Map MVA point(s) to the VA of the anchor ``pa`` across that surface.

    Algebraic form ``-(2 <mva, pa> / |mva|^2 - 1) mva + pa``; equal to
    mirroring ``pa`` across the surface the MVA encodes.

    With ``strict=False`` degenerate rows (``|mva| <= EPS_GEO``) yield NaN
    instead of raising, which callers can mask per-particle.
    """
    mva = _as_points(mva)
    pa = _as_points(pa)
    nrm2 = np.sum(mva * mva, axis=-1)
    bad = nrm2 <= EPS_GEO * EPS_GEO
    if strict and np.any(bad):
        raise DegenerateSurface("MVA norm below degeneracy threshold")
    denom = np.where(bad, 1.0, nrm2)
    scale = -(2.0 * np.sum(mva * pa, axis=-1) / denom - 1.0)
    va = scale[..., None] * mva + pa
    if not strict and np.any(bad):
        va = np.where(bad[..., None], np.nan, va)
    return va


def double_bounce_va(mva_s, mva_s2, pa, strict: bool = True):
    """VA of a two-reflection path: last bounce at ``mva_s``'s surface.

    Composition of the single transform: the anchor is first mirrored across
    the surface of ``mva_s2`` (the bounce nearest the anchor), then across
    the surface of ``mva_s`` (the bounce nearest the agent).
    """
    return mva_to_va(mva_s, mva_to_va(mva_s2, pa, strict=strict), strict=strict)


def va_to_mva(va, pa, strict: bool = True):
    """Inverse transform: recover the MVA from a single-bounce VA and its PA.

    ``(|pa|^2 - |va|^2) / |pa - va|^2 * (pa - va)``.  Degenerate when the VA
    coincides with the PA (any surface through their midpoint would do).
    """
    va = _as_points(va)
    pa = _as_points(pa)
    diff = pa - va
    d2 = np.sum(diff * diff, axis=-1)
    bad = d2 <= EPS_GEO * EPS_GEO
    if strict and np.any(bad):
        raise DegeneratePair("VA coincides with the PA")
    denom = np.where(bad, 1.0, d2)
    pa2 = np.sum(np.broadcast_to(pa, diff.shape) ** 2, axis=-1)
    va2 = np.sum(va * va, axis=-1)
    mva = ((pa2 - va2) / denom)[..., None] * diff
    if not strict and np.any(bad):
        mva = np.where(bad[..., None], np.nan, mva)
    return mva


def path_distance_angle(agent_pos, heading, va, strict: bool = True):
    """Distance and arrival angle of the path represented by a VA.

    Returns ``(d, phi)`` with ``d = |agent - va|`` and
    ``phi = wrap(atan2(agent - va) - heading)``: the angle of arrival is
    measured from the VA toward the agent, relative to the agent heading.
    """
    agent_pos = _as_points(agent_pos)
    va = _as_points(va)
    diff = agent_pos - va
    d = np.hypot(diff[..., 0], diff[..., 1])
    bad = d <= EPS_GEO
    if strict and np.any(bad):
        raise CoincidentPoints("agent position coincides with the VA")
    phi = wrap_angle(np.arctan2(diff[..., 1], diff[..., 0]) - np.asarray(heading, dtype=float))
    if not strict and np.any(bad):
        d = np.where(bad, np.nan, d)
        phi = np.where(bad, np.nan, phi)
    return d, phi
