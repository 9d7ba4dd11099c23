"""Vector and plane math: ray-plane intersection and pixel/world conversions.

The collision plane is a bounded rectangle in world space carrying a pixel
grid: pixel (0, 0) sits at the plane origin corner, u grows along u_axis,
v grows along v_axis (so with v_axis pointing "down" the grid matches image
conventions). Intersections outside the rectangle are a miss, not clamped.

All functions are pure; instances are immutable and safe to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

from gazepick import kernels
from gazepick.errors import ConfigError

# Geometric predicates (parallel ray, on-plane check, basis orthonormality).
GEOM_EPS = 1e-9
# Directions must be unit length within this after normalization.
UNIT_EPS = 1e-6


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def __add__(self, other: "Vec3") -> "Vec3":  # type: ignore[override]
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scale(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n < GEOM_EPS:
            raise ValueError("cannot normalize a zero-length vector")
        return Vec3(self.x / n, self.y / n, self.z / n)


@dataclass(frozen=True)
class CollisionPlane:
    """Bounded plane with a res_w x res_h pixel grid over width_m x height_m meters."""

    origin: Vec3
    u_axis: Vec3
    v_axis: Vec3
    width_m: float
    height_m: float
    res_w: int
    res_h: int

    def __post_init__(self):
        if self.width_m <= 0 or self.height_m <= 0:
            raise ConfigError("plane extent must be positive")
        if self.res_w < 1 or self.res_h < 1:
            raise ConfigError("plane resolution must be at least 1x1")
        if abs(self.u_axis.norm() - 1.0) > GEOM_EPS or abs(self.v_axis.norm() - 1.0) > GEOM_EPS:
            raise ConfigError("plane basis vectors must be unit length")
        if abs(self.u_axis.dot(self.v_axis)) > GEOM_EPS:
            raise ConfigError("plane basis vectors must be orthogonal")
        object.__setattr__(self, "_normal", self.u_axis.cross(self.v_axis))

    @property
    def normal(self) -> Vec3:
        return self._normal  # type: ignore[attr-defined]


class PlaneHit(NamedTuple):
    point: Vec3
    u: float
    v: float
    distance: float


def raycast(plane: CollisionPlane, ray_origin: Vec3, ray_dir: Vec3) -> Optional[PlaneHit]:
    """Cast a ray at the plane. None means miss: parallel ray, intersection
    behind the origin, or a hit outside the plane extent (boundary inclusive
    within the 1e-9 geometric tolerance). ray_dir must be normalized; plane
    validity is enforced at construction."""
    n = plane.normal
    res = kernels.ray_plane_hit(
        ray_origin.x, ray_origin.y, ray_origin.z,
        ray_dir.x, ray_dir.y, ray_dir.z,
        plane.origin.x, plane.origin.y, plane.origin.z,
        plane.u_axis.x, plane.u_axis.y, plane.u_axis.z,
        plane.v_axis.x, plane.v_axis.y, plane.v_axis.z,
        n.x, n.y, n.z,
        plane.width_m, plane.height_m,
        plane.res_w, plane.res_h,
    )
    if res is None:
        return None
    x, y, z, u, v, t = res
    return PlaneHit(point=Vec3(x, y, z), u=u, v=v, distance=t)


def pixel_to_world(plane: CollisionPlane, u: float, v: float) -> Vec3:
    """World-space point of plane pixel (u, v); inverse of the raycast pixel mapping."""
    x, y, z = kernels.plane_point(
        plane.origin.x, plane.origin.y, plane.origin.z,
        plane.u_axis.x, plane.u_axis.y, plane.u_axis.z,
        plane.v_axis.x, plane.v_axis.y, plane.v_axis.z,
        plane.width_m, plane.height_m,
        plane.res_w, plane.res_h,
        u, v,
    )
    return Vec3(x, y, z)
