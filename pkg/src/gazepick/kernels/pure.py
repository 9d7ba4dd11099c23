"""Pure-Python kernel: the per-sample math the engine runs in its inner loop.

These functions are the fallback twin of the compiled module in _native.pyx.
Both implementations must perform the identical sequence of IEEE double
operations so that a trace replayed on either backend produces bit-identical
results; keep expression order in sync when editing either file.
"""

from math import fabs, sqrt

BACKEND_NAME = "pure"

# Ray is parallel / hit is off-plane below this; see geometry module docs.
PARALLEL_EPS = 1e-9


def ray_plane_hit(
    ox, oy, oz,
    dx, dy, dz,
    px, py, pz,
    ux, uy, uz,
    vx, vy, vz,
    nx, ny, nz,
    width_m, height_m,
    res_w, res_h,
):
    """Intersect a ray with a bounded pixel-gridded plane.

    Returns (x, y, z, u_px, v_px, t) for an in-bounds forward hit, or None
    when the ray is parallel, points away, or misses the plane extent.
    """
    denom = dx * nx + dy * ny + dz * nz
    if fabs(denom) < PARALLEL_EPS:
        return None
    t = ((px - ox) * nx + (py - oy) * ny + (pz - oz) * nz) / denom
    if t <= 0.0:
        return None
    x = ox + t * dx
    y = oy + t * dy
    z = oz + t * dz
    rx = x - px
    ry = y - py
    rz = z - pz
    local_u = rx * ux + ry * uy + rz * uz
    local_v = rx * vx + ry * vy + rz * vz
    # Extent check carries the 1e-9 geometric tolerance so exact-boundary
    # rays are not lost to roundoff; the result clamps into [0, extent].
    if (local_u < -PARALLEL_EPS or local_u > width_m + PARALLEL_EPS
            or local_v < -PARALLEL_EPS or local_v > height_m + PARALLEL_EPS):
        return None
    if local_u < 0.0:
        local_u = 0.0
    elif local_u > width_m:
        local_u = width_m
    if local_v < 0.0:
        local_v = 0.0
    elif local_v > height_m:
        local_v = height_m
    return (x, y, z, local_u / width_m * res_w, local_v / height_m * res_h, t)


def plane_point(
    px, py, pz,
    ux, uy, uz,
    vx, vy, vz,
    width_m, height_m,
    res_w, res_h,
    u, v,
):
    """World point of pixel (u, v) on the plane grid; inverse of the hit mapping."""
    local_u = u / res_w * width_m
    local_v = v / res_h * height_m
    return (
        px + local_u * ux + local_v * vx,
        py + local_u * uy + local_v * vy,
        pz + local_u * uz + local_v * vz,
    )


def cluster_step(sx, sy, sz, n, x, y, z, radius_m):
    """One dwell-cluster update against the running mean of n summed points.

    Returns (inside, dist, sx, sy, sz) where the sums include the new point
    only when it landed inside the radius. Centroid is sum/n so a from-scratch
    recompute over the same points in the same order matches exactly.
    """
    cx = sx / n
    cy = sy / n
    cz = sz / n
    ddx = x - cx
    ddy = y - cy
    ddz = z - cz
    dist = sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
    if dist <= radius_m:
        return (True, dist, sx + x, sy + y, sz + z)
    return (False, dist, sx, sy, sz)
