"""Deterministic synthetic meshes and instanced scenes for tests and benchmarks."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

from .mesh import Instance, RefMesh, Scene

# vertex/face counts of the bunny-class reference model
BUNNY_VERTICES = 2503
BUNNY_FACES = 4968


def _sphere_points(n: int, rng: np.random.Generator) -> np.ndarray:
    # jittered Fibonacci lattice: well spread, no exact ties in edge length
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = math.pi * (1.0 + math.sqrt(5.0)) * i
    r = np.sqrt(1.0 - z * z)
    p = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    p += rng.normal(scale=0.15 / math.sqrt(n), size=p.shape)
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def _spherical_uv(faces: np.ndarray, dirs: np.ndarray):
    """Longitude/latitude texcoords with a seam: corners on the far side of the wrap get u + 1."""
    u = (np.arctan2(dirs[:, 1], dirs[:, 0]) / (2 * math.pi)) % 1.0
    v = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0)) / math.pi
    table: dict[tuple[int, int], int] = {}
    uv: list[tuple[float, float]] = []
    ft = np.empty_like(faces)
    for f, tri in enumerate(faces.tolist()):
        us = u[tri]
        wrap = us.max() - us.min() > 0.5
        for k, vert in enumerate(tri):
            shift = int(wrap and us[k] < 0.5)
            key = (vert, shift)
            if key not in table:
                table[key] = len(uv)
                uv.append((u[vert] + shift, v[vert]))
            ft[f, k] = table[key]
    return np.array(uv), ft


def make_blob(n_vertices: int = 500, seed: int = 0, bumpiness: float = 0.2, textured: bool = True) -> RefMesh:
    """Closed, genus-0, outward-wound triangle mesh of a radially deformed sphere.

    Faces number ``2 * n_vertices - 4``.
    """
    rng = np.random.default_rng(seed)
    dirs = _sphere_points(n_vertices, rng)
    faces = ConvexHull(dirs).simplices.astype(np.int64)
    a, b, c = dirs[faces[:, 0]], dirs[faces[:, 1]], dirs[faces[:, 2]]
    flip = (np.cross(b - a, c - a) * (a + b + c)).sum(axis=1) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]

    k = rng.integers(2, 5, size=3)
    theta = np.arccos(np.clip(dirs[:, 2], -1, 1))
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    radius = 1.0 + bumpiness * np.sin(k[0] * theta) * np.cos(k[1] * phi) + 0.5 * bumpiness * np.cos(k[2] * theta)
    pos = dirs * radius[:, None]

    # area-weighted vertex normals of the deformed surface
    fnorm = np.cross(pos[faces[:, 1]] - pos[faces[:, 0]], pos[faces[:, 2]] - pos[faces[:, 0]])
    vn = np.zeros_like(pos)
    for j in range(3):
        np.add.at(vn, faces[:, j], fnorm)
    vn /= np.linalg.norm(vn, axis=1, keepdims=True)

    if not textured:
        return RefMesh(pos, faces, normals=vn, face_normals=faces)
    uv, ft = _spherical_uv(faces, dirs)
    return RefMesh(pos, faces, texcoords=uv, normals=vn, face_texcoords=ft, face_normals=faces)


def punch_holes(mesh: RefMesh, n_holes: int, seed: int = 0) -> RefMesh:
    """Remove ``n_holes`` vertex-disjoint faces, leaving clean triangular boundary loops."""
    rng = np.random.default_rng(seed)
    used: set[int] = set()
    drop = []
    for f in rng.permutation(mesh.n_faces).tolist():
        tri = set(mesh.faces[f].tolist())
        if tri & used:
            continue
        used |= tri
        drop.append(f)
        if len(drop) == n_holes:
            break
    if len(drop) < n_holes:
        raise ValueError(f"could only place {len(drop)} of {n_holes} holes")
    keep = np.setdiff1d(np.arange(mesh.n_faces), drop)
    return RefMesh(
        mesh.positions,
        mesh.faces[keep],
        texcoords=mesh.texcoords,
        normals=mesh.normals,
        face_texcoords=mesh.face_texcoords[keep],
        face_normals=mesh.face_normals[keep],
        colors=mesh.colors,
    )


def make_bunny_class(seed: int = 0) -> RefMesh:
    """Open mesh with exactly the bunny's 2503 vertices and 4968 faces.

    A closed genus-0 mesh on 2503 vertices has 5002 faces, so 34 holes are cut.
    """
    blob = make_blob(BUNNY_VERTICES, seed=seed)
    return punch_holes(blob, 2 * BUNNY_VERTICES - 4 - BUNNY_FACES, seed=seed)


def random_transforms(n: int, seed: int = 0, scale_range=(0.5, 2.0), spacing: float = 5.0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    rots = Rotation.random(n, random_state=seed).as_matrix().reshape(n, 3, 3)
    side = max(1, math.ceil(math.sqrt(n)))
    out = []
    for i in range(n):
        m = np.eye(4)
        m[:3, :3] = rots[i] * rng.uniform(*scale_range)
        m[:3, 3] = [spacing * (i % side), spacing * (i // side), rng.uniform(-1, 1)]
        out.append(m)
    return out


def make_instanced_scene(mesh: RefMesh, n_instances: int, seed: int = 0, identity_first: bool = False) -> Scene:
    mats = random_transforms(n_instances, seed=seed)
    if identity_first:
        mats[0] = np.eye(4)
    return Scene(mesh, tuple(Instance(m) for m in mats), object_name="blob")
