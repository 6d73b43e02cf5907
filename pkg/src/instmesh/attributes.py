"""Attribute point clouds, the unified error, and attribute interpolation at a merged vertex."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .mesh import RefMesh, vertex_star, vertex_surface_area


class Channel(enum.Enum):
    TEXTURE = "texture"
    NORMAL = "normal"
    COLOR = "color"

    @property
    def dim(self) -> int:
        return _DIM[self]


_DIM = {Channel.TEXTURE: 2, Channel.NORMAL: 3, Channel.COLOR: 3}


class InvalidCollapse(ValueError):
    """Unified error is undefined: no area and no attribute weight."""


@dataclass(frozen=True, eq=False)
class AttributeCloud:
    channel: Channel
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, self.channel.dim)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(pts) != len(w):
            raise ValueError("one weight per cloud point")
        if len(w) and w.min() <= 0:
            raise ValueError("cloud weights must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empty(cls, channel: Channel) -> "AttributeCloud":
        return _EMPTY[channel]

    @classmethod
    def _trusted(cls, channel: Channel, points: np.ndarray, weights: np.ndarray) -> "AttributeCloud":
        # skips validation; callers pass float64 arrays of matching length and positive weights
        obj = object.__new__(cls)
        object.__setattr__(obj, "channel", channel)
        object.__setattr__(obj, "points", points)
        object.__setattr__(obj, "weights", weights)
        return obj

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.weights)


_EMPTY = {ch: AttributeCloud(ch, np.zeros((0, ch.dim)), np.zeros(0)) for ch in Channel}


def _channel_values(mesh: RefMesh, v: int, channel: Channel) -> list[np.ndarray]:
    if channel is Channel.COLOR:
        return [] if mesh.colors is None else [mesh.colors[v]]
    if channel is Channel.TEXTURE:
        idx, table = mesh.face_texcoords, mesh.texcoords
    else:
        idx, table = mesh.face_normals, mesh.normals
    values: list[np.ndarray] = []
    seen = set()
    for f in sorted(vertex_star(mesh, v)):
        for k in range(3):
            if mesh.faces[f, k] != v or idx[f, k] < 0:
                continue
            val = table[idx[f, k]]
            key = tuple(val.tolist())
            if key not in seen:
                seen.add(key)
                values.append(val)
    return values


def init_cloud(mesh: RefMesh, v: int, channel: Channel, area: Optional[float] = None) -> AttributeCloud:
    """One point per distinct attribute value at ``v``, sharing the vertex area equally."""
    values = _channel_values(mesh, v, channel)
    if area is None:
        area = vertex_surface_area(mesh, v)
    if not values or area <= 0.0:
        return AttributeCloud.empty(channel)
    w = area / len(values)
    return AttributeCloud(channel, np.array(values), np.full(len(values), w))


def cloud_error(cloud: AttributeCloud, p) -> float:
    """Weighted RMS distance from ``p`` to the cloud points; 0 for an empty cloud."""
    if len(cloud) == 0:
        return 0.0
    d = cloud.points - np.asarray(p, dtype=np.float64)
    pi = float(cloud.weights @ np.einsum("ij,ij->i", d, d))
    return math.sqrt(max(pi, 0.0) / cloud.total_weight)


def merge_clouds(c1: AttributeCloud, c2: AttributeCloud) -> AttributeCloud:
    if c1.channel is not c2.channel:
        raise ValueError(f"cannot merge {c1.channel.name} cloud with {c2.channel.name} cloud")
    if len(c2) == 0:
        return c1
    if len(c1) == 0:
        return c2
    return AttributeCloud._trusted(
        c1.channel,
        np.concatenate([c1.points, c2.points]),
        np.concatenate([c1.weights, c2.weights]),
    )


def channel_term(cloud: AttributeCloud, probes: Sequence) -> tuple[float, float]:
    """(weight, error) contribution of one channel: mean cloud error over the probe values.

    A channel with no probe values contributes nothing.
    """
    if len(cloud) == 0 or not probes:
        return 0.0, 0.0
    return cloud.total_weight, sum(cloud_error(cloud, p) for p in probes) / len(probes)


def unified_error(
    area: float,
    geometric_error: float,
    normal: tuple[float, float] = (0.0, 0.0),
    color: tuple[float, float] = (0.0, 0.0),
    texture: tuple[float, float] = (0.0, 0.0),
) -> float:
    """Area/weight-blended average of geometric and per-channel attribute errors.

    Each channel argument is ``(total_weight, error)``.
    """
    (xn, n), (xc, c), (xt, t) = normal, color, texture
    den = area + xn + xc + xt
    if den <= 0.0:
        raise InvalidCollapse("no surface area and no attribute weight")
    return (area * geometric_error + xn * n + xc * c + xt * t) / den


def _sub(u, v):
    return (u[0] - v[0], u[1] - v[1], u[2] - v[2])


def _dot(u, v) -> float:
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


def closest_point_on_triangle(p, a, b, c) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Closest point to ``p`` on triangle abc and its barycentric coordinates."""
    bary = _closest_bary([float(x) for x in p], [float(x) for x in a], [float(x) for x in b], [float(x) for x in c])
    q = bary[0] * np.asarray(a, dtype=np.float64) + bary[1] * np.asarray(b, dtype=np.float64) + bary[2] * np.asarray(c, dtype=np.float64)
    return q, bary


def _closest_bary(p, a, b, c) -> tuple[float, float, float]:
    # Voronoi-region walk over vertices, edges, then the face interior
    ab, ac, ap = _sub(b, a), _sub(c, a), _sub(p, a)
    d1, d2 = _dot(ab, ap), _dot(ac, ap)
    if d1 <= 0.0 and d2 <= 0.0:
        return (1.0, 0.0, 0.0)
    bp = _sub(p, b)
    d3, d4 = _dot(ab, bp), _dot(ac, bp)
    if d3 >= 0.0 and d4 <= d3:
        return (0.0, 1.0, 0.0)
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return (1.0 - v, v, 0.0)
    cp = _sub(p, c)
    d5, d6 = _dot(ab, cp), _dot(ac, cp)
    if d6 >= 0.0 and d5 <= d6:
        return (0.0, 0.0, 1.0)
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return (1.0 - w, 0.0, w)
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return (0.0, 1.0 - w, w)
    den = va + vb + vc
    if den == 0.0:
        # zero-area triangle: nearest corner
        dists = [_dot(_sub(p, q), _sub(p, q)) for q in (a, b, c)]
        k = dists.index(min(dists))
        return tuple(1.0 if i == k else 0.0 for i in range(3))
    v = vb / den
    w = vc / den
    return (1.0 - v - w, v, w)


def _sq_dist_to(p, a, b, c, bary) -> float:
    q = [bary[0] * a[i] + bary[1] * b[i] + bary[2] * c[i] for i in range(3)]
    return (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2 + (q[2] - p[2]) ** 2


Wedge = tuple[int, int]  # (texcoord index, normal index), -1 when absent


class WedgeGroup(NamedTuple):
    """Corners that share attribute values once a pair is merged."""

    survivor_wedge: Optional[Wedge]
    removed_wedge: Optional[Wedge]
    corners: tuple[tuple[int, int], ...]  # (face, corner slot)
    texcoord: Optional[np.ndarray]
    normal: Optional[np.ndarray]
    color: Optional[np.ndarray]
    # table indices when the values are copied verbatim from one corner, else -1
    texcoord_index: int = -1
    normal_index: int = -1


class LocalFace(NamedTuple):
    index: int
    verts: tuple[int, int, int]
    tcs: tuple[int, int, int]
    nrms: tuple[int, int, int]


def _wedge_distance(w1: Wedge, w2: Wedge, texcoords, normals) -> float:
    d = 0.0
    if w1[0] >= 0 and w2[0] >= 0:
        x = texcoords[w1[0]] - texcoords[w2[0]]
        d += float(x @ x)
    if w1[1] >= 0 and w2[1] >= 0:
        x = normals[w1[1]] - normals[w2[1]]
        d += float(x @ x)
    return math.sqrt(d)


def _wedges_at(v: int, local: Sequence[LocalFace]) -> dict[Wedge, list[tuple[int, int]]]:
    out: dict[Wedge, list[tuple[int, int]]] = {}
    for lf in local:
        for k in range(3):
            if lf.verts[k] == v:
                out.setdefault((lf.tcs[k], lf.nrms[k]), []).append((lf.index, k))
    return out


def match_wedges(ws: Sequence[Wedge], wr: Sequence[Wedge], texcoords, normals) -> list[tuple[int, int]]:
    """Greedy one-to-one matching by smallest attribute distance; returns index pairs."""
    cand = sorted(
        (_wedge_distance(a, b, texcoords, normals), i, j)
        for i, a in enumerate(ws)
        for j, b in enumerate(wr)
    )
    used_s, used_r, out = set(), set(), []
    for _, i, j in cand:
        if i in used_s or j in used_r:
            continue
        used_s.add(i)
        used_r.add(j)
        out.append((i, j))
    return out


def interpolate_wedges(
    point,
    survivor: int,
    removed: int,
    local: Sequence[LocalFace],
    positions,
    texcoords,
    normals,
    colors=None,
) -> list[WedgeGroup]:
    """Attribute values for every wedge of the merged vertex.

    ``local`` is the geometry around both endpoints before the merge, in
    ascending face order.  Each matched wedge pair projects ``point`` onto the
    local faces carrying one of its corners and interpolates the attributes of
    the nearest one (lowest face index on ties).  Unmatched wedges keep their
    values.
    """
    at_s = _wedges_at(survivor, local)
    at_r = _wedges_at(removed, local)
    ws, wr = list(at_s), list(at_r)
    matched = match_wedges(ws, wr, texcoords, normals)
    groups: list[tuple[Optional[Wedge], Optional[Wedge], list]] = []
    done_s, done_r = set(), set()
    for i, j in matched:
        groups.append((ws[i], wr[j], at_s[ws[i]] + at_r[wr[j]]))
        done_s.add(i)
        done_r.add(j)
    groups += [(w, None, at_s[w]) for i, w in enumerate(ws) if i not in done_s]
    groups += [(None, w, at_r[w]) for j, w in enumerate(wr) if j not in done_r]

    by_index = {lf.index: lf for lf in local}
    pt = [float(x) for x in point]
    out = []
    for sw, rw, corners in groups:
        if sw is None or rw is None:
            # unmatched wedge: keeps its own values
            t, n = sw or rw
            v = survivor if rw is None else removed
            out.append(
                WedgeGroup(
                    sw,
                    rw,
                    tuple(sorted(corners)),
                    texcoords[t] if t >= 0 else None,
                    normals[n] if n >= 0 else None,
                    colors[v] if colors is not None else None,
                    t,
                    n,
                )
            )
            continue
        best = None
        for fi in sorted({f for f, _ in corners}):
            lf = by_index[fi]
            tri = [positions[v] for v in lf.verts]
            bary = _closest_bary(pt, *tri)
            d = _sq_dist_to(pt, *tri, bary)
            if best is None or d < best[0]:
                best = (d, lf, bary)
                if d == 0.0:
                    break  # later faces can only tie
        _, lf, bary = best
        tc = nrm = col = None
        tci = ni = -1
        exact = bary.index(1.0) if 1.0 in bary else -1
        if all(t >= 0 for t in lf.tcs):
            if exact >= 0:
                tci = lf.tcs[exact]
                tc = texcoords[tci]
            else:
                tc = sum(b * texcoords[t] for b, t in zip(bary, lf.tcs))
        if all(n >= 0 for n in lf.nrms):
            if exact >= 0:
                ni = lf.nrms[exact]
                nrm = normals[ni]
            else:
                raw = sum(b * normals[n] for b, n in zip(bary, lf.nrms))
                length = float(np.linalg.norm(raw))
                if length > 1e-12:
                    nrm = raw / length
                else:
                    nrm = normals[lf.nrms[int(np.argmax(bary))]]
        if colors is not None:
            col = colors[lf.verts[exact]] if exact >= 0 else sum(b * colors[v] for b, v in zip(bary, lf.verts))
        out.append(WedgeGroup(sw, rw, tuple(sorted(corners)), tc, nrm, col, tci, ni))
    return out


def interpolate_attributes(mesh: RefMesh, pair: tuple[int, int], survivor: int, point=None) -> list[WedgeGroup]:
    """Interpolated wedge attributes for merging ``pair`` into ``survivor``.

    ``point`` defaults to the survivor's own position.  With no local face the
    result is empty and the survivor keeps its wedges unchanged.
    """
    v1, v2 = pair
    if survivor not in pair:
        raise ValueError("survivor must be one of the pair's endpoints")
    removed = v2 if survivor == v1 else v1
    faces = sorted(vertex_star(mesh, v1) | vertex_star(mesh, v2))
    local = [
        LocalFace(
            f,
            tuple(int(x) for x in mesh.faces[f]),
            tuple(int(x) for x in mesh.face_texcoords[f]),
            tuple(int(x) for x in mesh.face_normals[f]),
        )
        for f in faces
    ]
    if point is None:
        point = mesh.positions[survivor]
    return interpolate_wedges(
        point, survivor, removed, local, mesh.positions.tolist(), mesh.texcoords, mesh.normals, mesh.colors
    )
