"""Convex-polygon and disk contact geometry for the tabletop sim.

Tools are unions of convex quads in body frame; debris are disks. All
penetration tests return (depth, unit normal) with the normal pointing in
the direction the *disk* must move to separate.
"""

from __future__ import annotations

import numpy as np


def rot(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def transform_pts(pts: np.ndarray, x: float, y: float, theta: float) -> np.ndarray:
    return pts @ rot(theta).T + np.array([x, y])


def rect(cx: float, cy: float, hx: float, hy: float) -> np.ndarray:
    """Axis-aligned rectangle in body frame, CCW vertex order."""
    return np.array([
        [cx - hx, cy - hy],
        [cx + hx, cy - hy],
        [cx + hx, cy + hy],
        [cx - hx, cy + hy],
    ])


def point_in_convex(p: np.ndarray, poly: np.ndarray) -> bool:
    v2 = np.roll(poly, -1, axis=0)
    edge = v2 - poly
    rel = p - poly
    cross = edge[:, 0] * rel[:, 1] - edge[:, 1] * rel[:, 0]
    return bool(np.all(cross >= 0.0))


def closest_point_on_boundary(p: np.ndarray, poly: np.ndarray):
    """Closest boundary point and the outward normal of the nearest edge."""
    v1 = poly
    v2 = np.roll(poly, -1, axis=0)
    edge = v2 - v1
    elen2 = np.maximum((edge ** 2).sum(axis=1), 1e-18)
    t = np.clip(((p - v1) * edge).sum(axis=1) / elen2, 0.0, 1.0)
    proj = v1 + t[:, None] * edge
    d2 = ((p - proj) ** 2).sum(axis=1)
    k = int(np.argmin(d2))
    # outward normal for CCW polygons points right of the edge direction
    n = np.array([edge[k, 1], -edge[k, 0]])
    n /= max(np.linalg.norm(n), 1e-18)
    return proj[k], n


def disk_poly_penetration(center: np.ndarray, r: float, poly: np.ndarray):
    """Penetration of a disk into a convex polygon, or None."""
    q, edge_n = closest_point_on_boundary(center, poly)
    delta = center - q
    dist = float(np.linalg.norm(delta))
    if point_in_convex(center, poly):
        return r + dist, edge_n
    if dist >= r:
        return None
    n = delta / dist if dist > 1e-12 else edge_n
    return r - dist, n


def disk_disk_penetration(c1: np.ndarray, r1: float, c2: np.ndarray, r2: float):
    """Penetration of disk 2 into disk 1; normal pushes disk 2 away."""
    delta = c2 - c1
    dist = float(np.linalg.norm(delta))
    depth = r1 + r2 - dist
    if depth <= 0:
        return None
    n = delta / dist if dist > 1e-12 else np.array([1.0, 0.0])
    return depth, n


def poly_bounds(polys) -> tuple[np.ndarray, np.ndarray]:
    pts = np.vstack(polys)
    return pts.min(axis=0), pts.max(axis=0)


def separation_offset_along(center: np.ndarray, r: float, poly: np.ndarray,
                            direction: np.ndarray, max_offset: float) -> float | None:
    """Smallest offset along ``direction`` that frees the disk from the polygon.

    Used when the normal projection is blocked (e.g. debris pressed against a
    workspace wall); found by bisection, deterministic.
    """
    if disk_poly_penetration(center + max_offset * direction, r, poly) is not None:
        return None
    lo, hi = 0.0, max_offset
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if disk_poly_penetration(center + mid * direction, r, poly) is None:
            hi = mid
        else:
            lo = mid
    return hi
