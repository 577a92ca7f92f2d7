"""Planar rectangles and overlap tests used by the kinematic simulators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

OVERLAP_TOL = 1e-9
SNAP_DIGITS = 12


class Vec2(NamedTuple):
    a: float
    b: float

    def __add__(self, other):  # type: ignore[override]
        return Vec2(self.a + other[0], self.b + other[1])

    def __sub__(self, other):
        return Vec2(self.a - other[0], self.b - other[1])

    def scale(self, k: float) -> "Vec2":
        return Vec2(self.a * k, self.b * k)

    def norm(self) -> float:
        return math.hypot(self.a, self.b)


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    theta = math.fmod(theta, 2.0 * math.pi)
    if theta <= -math.pi:
        theta += 2.0 * math.pi
    elif theta > math.pi:
        theta -= 2.0 * math.pi
    return theta


def rotate(v: Sequence[float], theta: float) -> Vec2:
    c, s = math.cos(theta), math.sin(theta)
    return Vec2(c * v[0] - s * v[1], s * v[0] + c * v[1])


def quarter_turns(theta: float) -> int | None:
    """Return k if theta is k*pi/2 (mod 2pi) to 1e-12, else None."""
    k = round(theta / (0.5 * math.pi))
    if abs(theta - k * 0.5 * math.pi) < 1e-12:
        return k % 4
    return None


@dataclass(frozen=True)
class Rect:
    """Oriented rectangle: center, half extents in the body frame, angle."""

    center: Vec2
    half_extents: Vec2
    angle: float = 0.0
    _aabb: Vec2 | None = field(init=False, repr=False, compare=False, hash=False, default=None)

    def __post_init__(self):
        if not (self.half_extents[0] > 0 and self.half_extents[1] > 0):
            raise ValueError(f"half extents must be positive, got {self.half_extents}")
        # Centers live on a 1e-12 m lattice so that +d then -d returns the
        # exact same float; far below the contact tolerance.
        c = self.center
        object.__setattr__(self, "center", Vec2(round(float(c[0]), SNAP_DIGITS), round(float(c[1]), SNAP_DIGITS)))
        if not -math.pi < self.angle <= math.pi:
            object.__setattr__(self, "angle", normalize_angle(self.angle))
        k = quarter_turns(self.angle)
        h = self.half_extents
        if k is not None:
            object.__setattr__(self, "_aabb", h if k % 2 == 0 else Vec2(h[1], h[0]))

    @staticmethod
    def from_bounds(a0: float, a1: float, b0: float, b1: float) -> "Rect":
        return Rect(Vec2(0.5 * (a0 + a1), 0.5 * (b0 + b1)), Vec2(0.5 * (a1 - a0), 0.5 * (b1 - b0)))

    def moved(self, da: float, db: float) -> "Rect":
        return Rect(Vec2(self.center[0] + da, self.center[1] + db), self.half_extents, self.angle)

    def at(self, center: Sequence[float], angle: float | None = None) -> "Rect":
        return Rect(Vec2(center[0], center[1]), self.half_extents,
                    self.angle if angle is None else normalize_angle(angle))

    def aabb_half(self) -> Vec2 | None:
        """Axis-aligned half extents when the angle is a quarter turn, else None."""
        return self._aabb

    def bounds(self) -> tuple[float, float, float, float]:
        """(a_min, a_max, b_min, b_max) of the axis-aligned bounding box."""
        h = self.aabb_half()
        if h is None:
            pts = self.corners()
            a = [p[0] for p in pts]
            b = [p[1] for p in pts]
            return min(a), max(a), min(b), max(b)
        c = self.center
        return c[0] - h[0], c[0] + h[0], c[1] - h[1], c[1] + h[1]

    def corners(self) -> list[Vec2]:
        ha, hb = self.half_extents
        c = self.center
        out = []
        for sa, sb in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
            d = rotate((sa * ha, sb * hb), self.angle)
            out.append(Vec2(c[0] + d[0], c[1] + d[1]))
        return out

    def contains_point(self, p: Sequence[float], tol: float = 0.0) -> bool:
        d = rotate((p[0] - self.center[0], p[1] - self.center[1]), -self.angle)
        return abs(d[0]) <= self.half_extents[0] + tol and abs(d[1]) <= self.half_extents[1] + tol

    def to_dict(self) -> dict:
        return {"center": list(self.center), "half_extents": list(self.half_extents), "angle": self.angle}

    @staticmethod
    def from_dict(d: dict) -> "Rect":
        return Rect(Vec2(*d["center"]), Vec2(*d["half_extents"]), d["angle"])


def _interval_overlap(a0: float, a1: float, b0: float, b1: float) -> float:
    return min(a1, b1) - max(a0, b0)


def penetration(r1: Rect, r2: Rect) -> float:
    """Smallest projected overlap over the separating axes (<= 0 means apart).

    For axis-aligned pairs this is the usual AABB test; otherwise the four
    edge normals of both rectangles are checked (SAT).
    """
    h1, h2 = r1._aabb, r2._aabb
    if h1 is not None and h2 is not None:
        c1, c2 = r1.center, r2.center
        oa = h1[0] + h2[0] - abs(c1[0] - c2[0])
        ob = h1[1] + h2[1] - abs(c1[1] - c2[1])
        return oa if oa < ob else ob
    best = math.inf
    p1, p2 = r1.corners(), r2.corners()
    for theta in (r1.angle, r1.angle + 0.5 * math.pi, r2.angle, r2.angle + 0.5 * math.pi):
        ax = (math.cos(theta), math.sin(theta))
        s1 = [p[0] * ax[0] + p[1] * ax[1] for p in p1]
        s2 = [p[0] * ax[0] + p[1] * ax[1] for p in p2]
        o = _interval_overlap(min(s1), max(s1), min(s2), max(s2))
        if o < best:
            best = o
    return best


def overlaps(r1: Rect, r2: Rect, tol: float = OVERLAP_TOL) -> bool:
    """True when the rectangles interpenetrate by more than ``tol``."""
    return penetration(r1, r2) > tol


def any_overlap(rect: Rect, others: Sequence[Rect], tol: float = OVERLAP_TOL) -> bool:
    return any(penetration(rect, o) > tol for o in others)


def separation_along(mover: Rect, fixed: Rect, direction: Sequence[float],
                     max_dist: float = 0.2, iters: int = 40) -> float:
    """Distance ``fixed`` must travel along ``direction`` to stop overlapping ``mover``.

    Exact for axis-aligned pairs moving along an axis; bisection otherwise.
    """
    if not overlaps(mover, fixed):
        return 0.0
    h1, h2 = mover.aabb_half(), fixed.aabb_half()
    da, db = direction
    if h1 is not None and h2 is not None and (da == 0.0 or db == 0.0):
        a0, a1, b0, b1 = mover.bounds()
        f0, f1, g0, g1 = fixed.bounds()
        if da > 0:
            return a1 - f0
        if da < 0:
            return f1 - a0
        if db > 0:
            return b1 - g0
        return g1 - b0
    lo, hi = 0.0, max_dist
    if overlaps(mover, fixed.moved(da * hi, db * hi)):
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if overlaps(mover, fixed.moved(da * mid, db * mid)):
            lo = mid
        else:
            hi = mid
    return hi
