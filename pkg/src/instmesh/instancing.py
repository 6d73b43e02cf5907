"""Apply a (simplified) reference mesh to every instance transform."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import DET_EPS, RefMesh, Scene


class SingularTransformError(ValueError):
    pass


def transform_points(m: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Rows of ``points`` mapped through the affine 4x4 ``m``.

    Each coordinate is accumulated as ``((x*m0 + y*m1) + z*m2) + m3``, with
    no BLAS reordering, so results are reproducible term for term.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    m = np.asarray(m, dtype=np.float64)
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    out = np.empty_like(p)
    for r in range(3):
        out[:, r] = x * m[r, 0] + y * m[r, 1] + z * m[r, 2] + m[r, 3]
    return out


def transform_point(m: np.ndarray, p) -> np.ndarray:
    return transform_points(m, np.asarray(p, dtype=np.float64)[None, :])[0]


def normal_matrix(m: np.ndarray) -> np.ndarray:
    """Inverse-transpose of the upper-left 3x3 block."""
    a = np.asarray(m, dtype=np.float64)[:3, :3]
    if abs(np.linalg.det(a)) <= DET_EPS:
        raise SingularTransformError("transform has a singular 3x3 block")
    return np.linalg.inv(a).T


def transform_normals(m: np.ndarray, normals: np.ndarray) -> np.ndarray:
    n = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    out = n @ normal_matrix(m).T
    length = np.linalg.norm(out, axis=1, keepdims=True)
    length[length == 0.0] = 1.0
    return out / length


def transform_normal(m: np.ndarray, n) -> np.ndarray:
    return transform_normals(m, np.asarray(n, dtype=np.float64)[None, :])[0]


@dataclass(frozen=True, eq=False)
class ExpandedInstance:
    positions: np.ndarray
    normals: np.ndarray
    texcoords: np.ndarray  # shared with the reference mesh, not copied
    faces: np.ndarray  # position indices offset into the expanded vertex list
    face_texcoords: np.ndarray
    face_normals: np.ndarray  # offset into the expanded normal list
    colors: np.ndarray | None = None


def expand_scene(scene: Scene) -> list[ExpandedInstance]:
    mesh = scene.mesh
    nv, nn = mesh.n_vertices, len(mesh.normals)
    out = []
    for i, inst in enumerate(scene.instances):
        m = inst.transform
        faces = mesh.faces + i * nv
        fn = np.where(mesh.face_normals >= 0, mesh.face_normals + i * nn, -1)
        out.append(
            ExpandedInstance(
                positions=transform_points(m, mesh.positions),
                normals=transform_normals(m, mesh.normals) if nn else mesh.normals,
                texcoords=mesh.texcoords,
                faces=faces,
                face_texcoords=mesh.face_texcoords,
                face_normals=fn,
                colors=mesh.colors,
            )
        )
    return out


def expand_to_mesh(scene: Scene) -> RefMesh:
    """All instances baked into one indexed mesh sharing a single texcoord table."""
    parts = expand_scene(scene)
    mesh = scene.mesh
    return RefMesh(
        positions=np.concatenate([p.positions for p in parts]),
        faces=np.concatenate([p.faces for p in parts]),
        texcoords=mesh.texcoords,
        normals=np.concatenate([p.normals for p in parts]) if len(mesh.normals) else mesh.normals,
        face_texcoords=np.concatenate([p.face_texcoords for p in parts]),
        face_normals=np.concatenate([p.face_normals for p in parts]),
        colors=None if mesh.colors is None else np.concatenate([p.colors for p in parts]),
    )
