# cython: language_level=3, boundscheck=False, cdivision=False
"""Compiled kernel: same per-sample math as pure.py, in C doubles.

cdivision stays off and expression order mirrors pure.py line for line so
both backends produce bit-identical IEEE results.
"""

from libc.math cimport fabs, sqrt

BACKEND_NAME = "native"

cdef double PARALLEL_EPS = 1e-9


def ray_plane_hit(
    double ox, double oy, double oz,
    double dx, double dy, double dz,
    double px, double py, double pz,
    double ux, double uy, double uz,
    double vx, double vy, double vz,
    double nx, double ny, double nz,
    double width_m, double height_m,
    double res_w, double res_h,
):
    """Intersect a ray with a bounded pixel-gridded plane; None on miss."""
    cdef double denom = dx * nx + dy * ny + dz * nz
    if fabs(denom) < PARALLEL_EPS:
        return None
    cdef double t = ((px - ox) * nx + (py - oy) * ny + (pz - oz) * nz) / denom
    if t <= 0.0:
        return None
    cdef double x = ox + t * dx
    cdef double y = oy + t * dy
    cdef double z = oz + t * dz
    cdef double rx = x - px
    cdef double ry = y - py
    cdef double rz = z - pz
    cdef double local_u = rx * ux + ry * uy + rz * uz
    cdef double local_v = rx * vx + ry * vy + rz * vz
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
    double px, double py, double pz,
    double ux, double uy, double uz,
    double vx, double vy, double vz,
    double width_m, double height_m,
    double res_w, double res_h,
    double u, double v,
):
    """World point of pixel (u, v) on the plane grid."""
    cdef double local_u = u / res_w * width_m
    cdef double local_v = v / res_h * height_m
    return (
        px + local_u * ux + local_v * vx,
        py + local_u * uy + local_v * vy,
        pz + local_u * uz + local_v * vz,
    )


def cluster_step(
    double sx, double sy, double sz, double n,
    double x, double y, double z, double radius_m,
):
    """One dwell-cluster update; see pure.cluster_step for the contract."""
    cdef double cx = sx / n
    cdef double cy = sy / n
    cdef double cz = sz / n
    cdef double ddx = x - cx
    cdef double ddy = y - cy
    cdef double ddz = z - cz
    cdef double dist = sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
    if dist <= radius_m:
        return (True, dist, sx + x, sy + y, sz + z)
    return (False, dist, sx, sy, sz)
