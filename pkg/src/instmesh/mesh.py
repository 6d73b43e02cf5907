"""Scene and mesh data model plus the topology/measure queries shared by every stage."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

DET_EPS = 1e-12


class Corner(NamedTuple):
    position: int
    texcoord: Optional[int] = None
    normal: Optional[int] = None
    color: Optional[int] = None


class Face(NamedTuple):
    corners: tuple[Corner, Corner, Corner]


class ValidationIssue(NamedTuple):
    kind: str  # OutOfRange | DegenerateFace | NonUniformAttributes | BadShape
    face: int
    corner: Optional[int] = None
    message: str = ""


def _as_index_array(a, n_faces: int) -> np.ndarray:
    if a is None:
        return np.full((n_faces, 3), -1, dtype=np.int64)
    return np.asarray(a, dtype=np.int64).reshape(-1, 3)


@dataclass(frozen=True, eq=False)
class RefMesh:
    """Triangle mesh with OBJ-style corner indexing.

    ``faces`` holds position indices; ``face_texcoords`` and ``face_normals``
    hold per-corner attribute indices with ``-1`` meaning "absent".  Colors,
    when present, are one RGB triple per position.
    """

    positions: np.ndarray
    faces: np.ndarray
    texcoords: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    face_texcoords: Optional[np.ndarray] = None
    face_normals: Optional[np.ndarray] = None
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        nf = len(faces)
        set_ = object.__setattr__
        set_(self, "positions", pos)
        set_(self, "faces", faces)
        set_(self, "texcoords", np.asarray(self.texcoords, dtype=np.float64).reshape(-1, 2))
        set_(self, "normals", np.asarray(self.normals, dtype=np.float64).reshape(-1, 3))
        set_(self, "face_texcoords", _as_index_array(self.face_texcoords, nf))
        set_(self, "face_normals", _as_index_array(self.face_normals, nf))
        if self.colors is not None:
            set_(self, "colors", np.asarray(self.colors, dtype=np.float64).reshape(-1, 3))
        for name in ("positions", "faces", "texcoords", "normals", "face_texcoords", "face_normals", "colors"):
            arr = getattr(self, name)
            if arr is not None:
                arr.flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def has_texcoords(self) -> bool:
        return bool(len(self.texcoords)) and bool((self.face_texcoords >= 0).any())

    @property
    def has_normals(self) -> bool:
        return bool(len(self.normals)) and bool((self.face_normals >= 0).any())

    def face(self, i: int) -> Face:
        def opt(x):
            return None if x < 0 else int(x)

        corners = []
        for k in range(3):
            p = int(self.faces[i, k])
            corners.append(
                Corner(
                    p,
                    opt(self.face_texcoords[i, k]),
                    opt(self.face_normals[i, k]),
                    p if self.colors is not None else None,
                )
            )
        return Face(tuple(corners))


@dataclass(frozen=True, eq=False)
class Instance:
    transform: np.ndarray

    def __post_init__(self):
        m = np.array(self.transform, dtype=np.float64)
        if m.shape == (16,):
            m = m.reshape(4, 4)
        if m.shape != (4, 4):
            raise ValueError(f"instance transform must be 4x4, got shape {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError(f"instance transform bottom row must be [0 0 0 1], got {m[3].tolist()}")
        if abs(np.linalg.det(m[:3, :3])) <= DET_EPS:
            raise ValueError("instance transform has a singular 3x3 block")
        m.flags.writeable = False
        object.__setattr__(self, "transform", m)

    @classmethod
    def identity(cls) -> "Instance":
        return cls(np.eye(4))


@dataclass(frozen=True, eq=False)
class Scene:
    mesh: RefMesh
    instances: tuple[Instance, ...] = (Instance(np.eye(4)),)
    material_lib: Optional[str] = None
    object_name: Optional[str] = None
    material_name: Optional[str] = None

    def __post_init__(self):
        inst = tuple(self.instances)
        if not inst:
            raise ValueError("a scene needs at least one instance")
        object.__setattr__(self, "instances", inst)


def validate_mesh(mesh: RefMesh) -> list[ValidationIssue]:
    issues: list[ValidationIssue] = []
    limits = (
        ("position", mesh.faces, mesh.n_vertices, False),
        ("texcoord", mesh.face_texcoords, len(mesh.texcoords), True),
        ("normal", mesh.face_normals, len(mesh.normals), True),
    )
    flagged = np.zeros(mesh.n_faces, dtype=bool)
    for _, idx, n, optional in limits:
        present = idx >= 0
        bad = (idx >= n) | (~present if not optional else (idx < -1))
        if optional:
            bad |= present.any(axis=1)[:, None] & ~present.all(axis=1)[:, None]
        flagged |= bad.any(axis=1)
    fv = mesh.faces
    flagged |= (fv[:, 0] == fv[:, 1]) | (fv[:, 1] == fv[:, 2]) | (fv[:, 0] == fv[:, 2])
    for f in np.flatnonzero(flagged).tolist():
        for name, idx, n, optional in limits:
            row = idx[f]
            present = row >= 0
            if optional and present.any() and not present.all():
                issues.append(
                    ValidationIssue("NonUniformAttributes", f, None, f"face {f} mixes {name} presence")
                )
            for k in range(3):
                i = int(row[k])
                if (optional and i == -1):
                    continue
                if i < 0 or i >= n:
                    issues.append(
                        ValidationIssue("OutOfRange", f, k, f"{name} index {i} out of range [0, {n})")
                    )
        a, b, c = (int(x) for x in mesh.faces[f])
        if a == b or b == c or a == c:
            issues.append(ValidationIssue("DegenerateFace", f, None, f"face {f} repeats a position"))
    if mesh.colors is not None and len(mesh.colors) != mesh.n_vertices:
        issues.append(ValidationIssue("BadShape", -1, None, "colors must be one per position"))
    return issues


def _check_vertex(mesh: RefMesh, v: int) -> None:
    if not 0 <= v < mesh.n_vertices:
        raise IndexError(f"vertex {v} out of range [0, {mesh.n_vertices})")


def vertex_star(mesh: RefMesh, v: int) -> set[int]:
    """Indices of faces having ``v`` as a corner."""
    _check_vertex(mesh, v)
    return set(np.flatnonzero((mesh.faces == v).any(axis=1)).tolist())


def triangle_area(a, b, c) -> float:
    return 0.5 * float(np.linalg.norm(np.cross(np.subtract(b, a), np.subtract(c, a))))


def face_areas(mesh: RefMesh) -> np.ndarray:
    p = mesh.positions
    if mesh.n_faces == 0:
        return np.zeros(0)
    a, b, c = p[mesh.faces[:, 0]], p[mesh.faces[:, 1]], p[mesh.faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def vertex_surface_area(mesh: RefMesh, v: int) -> float:
    star = vertex_star(mesh, v)
    if not star:
        return 0.0
    return float(face_areas(mesh)[sorted(star)].sum())


def vertex_areas(mesh: RefMesh) -> np.ndarray:
    """``vertex_surface_area`` for every vertex at once."""
    out = np.zeros(mesh.n_vertices)
    areas = face_areas(mesh)
    for k in range(3):
        np.add.at(out, mesh.faces[:, k], areas)
    return out


def bounding_box_diagonal(mesh: RefMesh) -> float:
    if mesh.n_vertices == 0:
        raise ValueError("bounding box of an empty mesh")
    p = mesh.positions
    return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))
