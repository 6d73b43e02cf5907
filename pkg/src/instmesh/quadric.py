"""Plane quadrics and the squared-distance geometric error they measure.

A quadric is kept as a plain symmetric ``(4, 4)`` float array; sums of
quadrics are ordinary array sums.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .mesh import RefMesh, vertex_star

AREA_EPS = 1e-12
NEGATIVE_TOL = 1e-9
# vᵀQv values within this many ulps of |v|ᵀ|Q||v| are rounding noise and read as 0
NOISE_ULPS = 64
_EPS = float(np.finfo(np.float64).eps)


class DegenerateFaceError(ValueError):
    pass


class CorruptQuadricError(AssertionError):
    pass


class Plane(NamedTuple):
    a: float
    b: float
    c: float
    d: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)


def plane_through(p0, p1, p2) -> Plane:
    p0 = np.asarray(p0, dtype=np.float64)
    n = np.cross(np.asarray(p1, dtype=np.float64) - p0, np.asarray(p2, dtype=np.float64) - p0)
    length = float(np.linalg.norm(n))
    if 0.5 * length <= AREA_EPS:
        raise DegenerateFaceError("face has zero area")
    n = n / length
    return Plane(float(n[0]), float(n[1]), float(n[2]), float(-n @ p0))


def plane_of_face(mesh: RefMesh, face: int) -> Plane:
    """Unit-normal plane of a face, oriented by its winding (right-hand rule)."""
    a, b, c = mesh.faces[face]
    p = mesh.positions
    try:
        return plane_through(p[a], p[b], p[c])
    except DegenerateFaceError:
        raise DegenerateFaceError(f"face {face} has zero area") from None


def fundamental_quadric(plane: Plane) -> np.ndarray:
    p = np.asarray(plane, dtype=np.float64)
    return np.outer(p, p)


def face_quadrics(mesh: RefMesh, area_weighted: bool = False) -> np.ndarray:
    """Fundamental quadric of every face; zero-area faces get a zero matrix."""
    p = mesh.positions
    f = mesh.faces
    if len(f) == 0:
        return np.zeros((0, 4, 4))
    a = p[f[:, 0]]
    n = np.cross(p[f[:, 1]] - a, p[f[:, 2]] - a)
    length = np.linalg.norm(n, axis=1)
    ok = 0.5 * length > AREA_EPS
    unit = np.zeros_like(n)
    unit[ok] = n[ok] / length[ok, None]
    planes = np.concatenate([unit, -(unit * a).sum(axis=1, keepdims=True)], axis=1)
    planes[~ok] = 0.0
    kp = planes[:, :, None] * planes[:, None, :]
    if area_weighted:
        kp *= (0.5 * length)[:, None, None]
    return kp


def vertex_quadrics(mesh: RefMesh, area_weighted: bool = False) -> np.ndarray:
    """Per-vertex sum of incident face quadrics, shape ``(n_vertices, 4, 4)``."""
    kp = face_quadrics(mesh, area_weighted)
    out = np.zeros((mesh.n_vertices, 4, 4))
    for k in range(3):
        np.add.at(out, mesh.faces[:, k], kp)
    return out


def vertex_quadric(mesh: RefMesh, v: int, area_weighted: bool = False) -> np.ndarray:
    q = np.zeros((4, 4))
    for f in sorted(vertex_star(mesh, v)):
        try:
            plane = plane_of_face(mesh, f)
        except DegenerateFaceError:
            continue
        kp = fundamental_quadric(plane)
        if area_weighted:
            a, b, c = mesh.faces[f]
            kp = kp * 0.5 * np.linalg.norm(
                np.cross(mesh.positions[b] - mesh.positions[a], mesh.positions[c] - mesh.positions[a])
            )
        q += kp
    return q


def quadric_error(q: np.ndarray, point) -> float:
    """vᵀQv at the homogeneous point [x y z 1].

    Results below the rounding-error bound of the product are returned as
    exactly 0, so a point lying on all of Q's planes scores 0 regardless of
    summation order.
    """
    v = np.array([point[0], point[1], point[2], 1.0])
    e = float(v @ q @ v)
    if e < -NEGATIVE_TOL:
        raise CorruptQuadricError(f"quadric evaluated to {e}")
    a = np.abs(v)
    if e <= NOISE_ULPS * _EPS * float(a @ np.abs(q) @ a):
        return 0.0
    return e


def collapse_geometric_error(q1: np.ndarray, q2: np.ndarray, survivor) -> float:
    return quadric_error(q1 + q2, survivor)


def choose_survivor(q1: np.ndarray, q2: np.ndarray, p1, p2) -> tuple[int, float]:
    """Pick the endpoint where the merged quadric is smallest.

    Returns ``(0, err)`` for the first endpoint, ``(1, err)`` for the second;
    ties keep the first.
    """
    q = q1 + q2
    e1 = quadric_error(q, p1)
    e2 = quadric_error(q, p2)
    return (0, e1) if e1 <= e2 else (1, e2)
