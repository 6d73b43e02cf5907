"""Greedy pair-contraction driver for the reference mesh of an instanced scene."""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .attributes import (
    AttributeCloud,
    Channel,
    InvalidCollapse,
    LocalFace,
    WedgeGroup,
    channel_term,
    interpolate_wedges,
    merge_clouds,
    unified_error,
)
from .mesh import RefMesh, Scene, face_areas, validate_mesh
from .pairs import (
    DEFAULT_INITIAL_FRACTION,
    CandidatePair,
    ThresholdState,
    select_min_error_pair,
    settle_threshold,
)
from .quadric import choose_survivor, vertex_quadrics


class Mode(enum.Enum):
    ITS = "its"
    QUADRIC_ONLY = "quadric"


class Target(enum.Enum):
    FACES = "faces"
    VERTICES = "vertices"


class StopReason(enum.Enum):
    TARGET_REACHED = "TargetReached"
    ERROR_CAP_HIT = "ErrorCapHit"
    NO_CANDIDATES = "NoCandidates"


class StalePair(RuntimeError):
    pass


@dataclass(frozen=True)
class SimplifyParams:
    reduce_percent: float = 0.0
    max_unified_error: Optional[float] = None
    mode: Mode = Mode.ITS
    target: Target = Target.FACES
    proximity_pairs: bool = False
    initial_threshold: float = DEFAULT_INITIAL_FRACTION  # fraction of the bbox diagonal
    fixed_threshold: Optional[float] = None  # absolute; disables adaptation
    refine_threshold: bool = True  # bisect once doubling/halving brackets the window
    manifold_guard: bool = True
    area_weighted: bool = False

    def __post_init__(self):
        if not 0.0 <= self.reduce_percent <= 100.0:
            raise ValueError(f"reduce_percent must be in [0, 100], got {self.reduce_percent}")
        if self.max_unified_error is not None and not self.max_unified_error > 0:
            raise ValueError("max_unified_error must be positive")
        if not self.initial_threshold > 0:
            raise ValueError("initial_threshold must be positive")
        if self.fixed_threshold is not None and not self.fixed_threshold > 0:
            raise ValueError("fixed_threshold must be positive")


@dataclass(frozen=True)
class CollapseRecord:
    v1: int
    v2: int
    survivor: int
    geometric_error: float
    unified_error: float
    faces_removed: int


@dataclass
class SimplifyReport:
    initial_vertices: int
    initial_texcoords: int
    initial_normals: int
    initial_faces: int
    final_vertices: int = 0
    final_texcoords: int = 0
    final_normals: int = 0
    final_faces: int = 0
    collapses_performed: int = 0
    elapsed_ms: float = 0.0
    stop_reason: StopReason = StopReason.TARGET_REACHED
    final_threshold: float = float("nan")
    guard_trips: int = 0
    trace: list[CollapseRecord] = field(default_factory=list)


class _Table:
    """Append-only attribute table backed by a growable array."""

    def __init__(self, data: np.ndarray):
        self._a = np.array(data, dtype=np.float64)
        self.size = len(self._a)

    def __getitem__(self, i):
        return self._a[i]

    def append(self, value) -> int:
        if self.size == len(self._a):
            grown = np.empty((max(8, 2 * len(self._a)), self._a.shape[1]))
            grown[: self.size] = self._a[: self.size]
            self._a = grown
        self._a[self.size] = value
        self.size += 1
        return self.size - 1

    def array(self) -> np.ndarray:
        return self._a[: self.size]


class _EdgePool:
    """Live edges with their lengths, kept in flat arrays for threshold counting.

    Dead and blocked edges carry an infinite effective length.
    """

    def __init__(self, positions: list):
        self.pos = positions
        self.slot: dict[tuple[int, int], int] = {}
        self.nfaces: dict[tuple[int, int], int] = {}
        self.blocked: set[tuple[int, int]] = set()
        cap = 64
        self.va = np.empty(cap, dtype=np.int64)
        self.vb = np.empty(cap, dtype=np.int64)
        self.length = np.empty(cap)
        self.eff = np.empty(cap)
        self.size = 0

    def _grow(self):
        cap = 2 * len(self.va)
        for name in ("va", "vb", "length", "eff"):
            old = getattr(self, name)
            new = np.empty(cap, dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def add(self, key: tuple[int, int]) -> None:
        c = self.nfaces.get(key, 0) + 1
        self.nfaces[key] = c
        if c > 1:
            return
        s = self.slot.get(key)
        if s is None:
            if self.size == len(self.va):
                self._grow()
            s = self.size
            self.size += 1
            self.slot[key] = s
            self.va[s], self.vb[s] = key
            self.length[s] = math.dist(self.pos[key[0]], self.pos[key[1]])
        self.eff[s] = math.inf if key in self.blocked else self.length[s]

    def remove(self, key: tuple[int, int]) -> None:
        c = self.nfaces[key] - 1
        if c:
            self.nfaces[key] = c
            return
        del self.nfaces[key]
        self.blocked.discard(key)
        self.eff[self.slot[key]] = math.inf

    def block(self, key: tuple[int, int]) -> None:
        self.blocked.add(key)
        self.eff[self.slot[key]] = math.inf

    def unblock(self, key: tuple[int, int]) -> None:
        self.blocked.discard(key)
        if key in self.nfaces:
            s = self.slot[key]
            self.eff[s] = self.length[s]

    def count_below(self, t: float) -> int:
        return int(np.count_nonzero(self.eff[: self.size] < t))

    def below(self, t: float) -> list[tuple[int, int]]:
        s = np.flatnonzero(self.eff[: self.size] < t)
        return list(zip(self.va[s].tolist(), self.vb[s].tolist()))


def _area(a, b, c) -> float:
    ux, uy, uz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    vx, vy, vz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    return 0.5 * math.sqrt((uy * vz - uz * vy) ** 2 + (uz * vx - ux * vz) ** 2 + (ux * vy - uy * vx) ** 2)


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


class MeshState:
    """Mutable working copy of a reference mesh during simplification."""

    def __init__(self, mesh: RefMesh, with_clouds: bool = True, area_weighted: bool = False):
        self.source = mesh
        self.pos = mesh.positions
        self.pos_list = mesh.positions.tolist()
        nv = mesh.n_vertices
        self.fv: list[list[int]] = mesh.faces.tolist()
        self.ft: list[list[int]] = mesh.face_texcoords.tolist()
        self.fn: list[list[int]] = mesh.face_normals.tolist()
        self.face_alive = [True] * len(self.fv)
        self.face_area = face_areas(mesh).tolist()
        self.n_faces = len(self.fv)
        self.alive = np.ones(nv, dtype=bool)
        self.n_vertices = nv
        self.vfaces: list[set[int]] = [set() for _ in range(nv)]
        self.edges = _EdgePool(self.pos_list)
        for f, (a, b, c) in enumerate(self.fv):
            self.vfaces[a].add(f)
            self.vfaces[b].add(f)
            self.vfaces[c].add(f)
            for key in (_edge(a, b), _edge(b, c), _edge(c, a)):
                self.edges.add(key)
        self.q = vertex_quadrics(mesh, area_weighted)
        self.texcoords = _Table(mesh.texcoords)
        self.normals = _Table(mesh.normals)
        self.colors = mesh.colors
        self.clouds: Optional[list[dict[Channel, AttributeCloud]]] = (
            self._initial_clouds(mesh) if with_clouds else None
        )

    def _initial_clouds(self, mesh: RefMesh) -> list[dict[Channel, AttributeCloud]]:
        nv = mesh.n_vertices
        area = np.zeros(nv)
        for k in range(3):
            np.add.at(area, mesh.faces[:, k], np.asarray(self.face_area))
        tex: list[dict] = [dict() for _ in range(nv)]
        nrm: list[dict] = [dict() for _ in range(nv)]
        tc = [tuple(x) for x in mesh.texcoords.tolist()]
        nm = [tuple(x) for x in mesh.normals.tolist()]
        for fv, ft, fn in zip(self.fv, self.ft, self.fn):
            for v, t, n in zip(fv, ft, fn):
                if t >= 0:
                    tex[v].setdefault(tc[t], None)
                if n >= 0:
                    nrm[v].setdefault(nm[n], None)
        out = []
        for v in range(nv):
            clouds = {}
            s = float(area[v])
            for channel, values in ((Channel.TEXTURE, list(tex[v])), (Channel.NORMAL, list(nrm[v]))):
                if values and s > 0.0:
                    clouds[channel] = AttributeCloud._trusted(
                        channel, np.array(values, dtype=np.float64), np.full(len(values), s / len(values))
                    )
                else:
                    clouds[channel] = AttributeCloud.empty(channel)
            if mesh.colors is not None and s > 0.0:
                clouds[Channel.COLOR] = AttributeCloud(Channel.COLOR, mesh.colors[v], [s])
            else:
                clouds[Channel.COLOR] = AttributeCloud.empty(Channel.COLOR)
            out.append(clouds)
        return out

    # topology queries -------------------------------------------------

    def neighbors(self, v: int) -> set[int]:
        out = set()
        for f in self.vfaces[v]:
            out.update(self.fv[f])
        out.discard(v)
        return out

    def is_boundary_vertex(self, v: int) -> bool:
        return any(self.edges.nfaces.get(_edge(v, u)) == 1 for u in self.neighbors(v))

    def local_faces(self, a: int, b: int) -> list[LocalFace]:
        return [
            LocalFace(f, tuple(self.fv[f]), tuple(self.ft[f]), tuple(self.fn[f]))
            for f in sorted(self.vfaces[a] | self.vfaces[b])
        ]

    def collapse_keeps_manifold(self, a: int, b: int) -> bool:
        """Link condition plus boundary and minimum-neighborhood checks for edge (a, b)."""
        na, nb = self.neighbors(a), self.neighbors(b)
        shared = [f for f in self.vfaces[a] if b in self.fv[f]]
        if not shared or len(shared) > 2:
            return False
        opposite = set()
        for f in shared:
            opposite.update(self.fv[f])
        opposite -= {a, b}
        common = (na & nb) - {a, b}
        if common != opposite:
            return False
        if len((na | nb) - {a, b}) < 3:
            return False
        if len(shared) == 2 and self.is_boundary_vertex(a) and self.is_boundary_vertex(b):
            return False
        return True

    # collapse ---------------------------------------------------------

    def plan(self, survivor: int, removed: int) -> list[WedgeGroup]:
        return interpolate_wedges(
            self.pos[survivor],
            survivor,
            removed,
            self.local_faces(survivor, removed),
            self.pos_list,
            self.texcoords,
            self.normals,
            self.colors,
        )

    def _resolve(self, table: _Table, value, *existing: int) -> int:
        for i in existing:
            if i >= 0 and np.array_equal(table[i], value):
                return i
        return table.append(value)

    def collapse(self, survivor: int, removed: int, groups: Optional[list[WedgeGroup]] = None) -> tuple[int, set[int]]:
        """Merge ``removed`` into ``survivor``.

        Returns the number of faces deleted and the set of vertices whose
        neighborhood changed.
        """
        if survivor == removed:
            raise ValueError("cannot collapse a vertex into itself")
        if not (self.alive[survivor] and self.alive[removed]):
            raise StalePair(f"pair ({survivor}, {removed}) references a dead vertex")
        if groups is None:
            groups = self.plan(survivor, removed)
        touched = {survivor, removed} | self.neighbors(survivor) | self.neighbors(removed)

        for g in groups:
            sw = g.survivor_wedge or (-1, -1)
            rw = g.removed_wedge or (-1, -1)
            t = n = None
            if g.texcoord is not None:
                t = self._resolve(self.texcoords, g.texcoord, g.texcoord_index, sw[0], rw[0])
            if g.normal is not None:
                n = self._resolve(self.normals, g.normal, g.normal_index, sw[1], rw[1])
            for f, k in g.corners:
                if t is not None:
                    self.ft[f][k] = t
                if n is not None:
                    self.fn[f][k] = n

        removed_faces = 0
        for f in sorted(self.vfaces[removed]):
            a, b, c = self.fv[f]
            for key in (_edge(a, b), _edge(b, c), _edge(c, a)):
                self.edges.remove(key)
            if survivor in self.fv[f]:
                self.face_alive[f] = False
                for v in self.fv[f]:
                    if v != removed:
                        self.vfaces[v].discard(f)
                removed_faces += 1
                continue
            vs = self.fv[f]
            vs[vs.index(removed)] = survivor
            a, b, c = vs
            for key in (_edge(a, b), _edge(b, c), _edge(c, a)):
                self.edges.add(key)
            self.vfaces[survivor].add(f)
            p = self.pos_list
            self.face_area[f] = _area(p[a], p[b], p[c])
        self.vfaces[removed] = set()
        self.n_faces -= removed_faces

        self.q[survivor] = self.q[survivor] + self.q[removed]
        if self.clouds is not None:
            cs, cr = self.clouds[survivor], self.clouds[removed]
            self.clouds[survivor] = {ch: merge_clouds(cs[ch], cr[ch]) for ch in cs}
            self.clouds[removed] = {}
        self.alive[removed] = False
        self.n_vertices -= 1
        return removed_faces, touched

    def compact(self) -> RefMesh:
        return compact(self)


def collapse_pair(state: MeshState, pair: CandidatePair) -> int:
    """Collapse ``pair`` in place; returns the number of faces removed."""
    if not (state.alive[pair.v1] and state.alive[pair.v2]):
        raise StalePair(f"pair {pair.key} references a dead vertex")
    survivor = pair.survivor
    if survivor is None:
        i, _ = choose_survivor(state.q[pair.v1], state.q[pair.v2], state.pos[pair.v1], state.pos[pair.v2])
        survivor = pair.key[i]
    removed = pair.v2 if survivor == pair.v1 else pair.v1
    faces_removed, _ = state.collapse(survivor, removed)
    return faces_removed


def compact(state: MeshState) -> RefMesh:
    """Drop dead vertices and attributes orphaned by the collapses; remap indices."""
    src = state.source
    live_faces = [f for f, ok in enumerate(state.face_alive) if ok]
    vmap = np.full(len(state.alive), -1, dtype=np.int64)
    keep_v = np.flatnonzero(state.alive)
    vmap[keep_v] = np.arange(len(keep_v))

    def remap_attr(table: _Table, face_idx: list[list[int]], initial_idx: np.ndarray, n_initial: int):
        # attributes never referenced by the input are kept as-is
        initially_used = np.zeros(n_initial, dtype=bool)
        used0 = initial_idx[initial_idx >= 0]
        initially_used[used0] = True
        keep = np.zeros(table.size, dtype=bool)
        keep[:n_initial] = ~initially_used
        for f in live_faces:
            for i in face_idx[f]:
                if i >= 0:
                    keep[i] = True
        amap = np.full(table.size, -1, dtype=np.int64)
        kept = np.flatnonzero(keep)
        amap[kept] = np.arange(len(kept))
        rows = np.array([[amap[i] if i >= 0 else -1 for i in face_idx[f]] for f in live_faces], dtype=np.int64)
        return table.array()[kept], rows.reshape(-1, 3)

    tex, ft = remap_attr(state.texcoords, state.ft, src.face_texcoords, len(src.texcoords))
    nrm, fn = remap_attr(state.normals, state.fn, src.face_normals, len(src.normals))
    faces = np.array([[vmap[v] for v in state.fv[f]] for f in live_faces], dtype=np.int64).reshape(-1, 3)
    return RefMesh(
        positions=state.pos[keep_v],
        faces=faces,
        texcoords=tex,
        normals=nrm,
        face_texcoords=ft,
        face_normals=fn,
        colors=None if state.colors is None else state.colors[keep_v],
    )


def target_count(initial: int, reduce_percent: float) -> int:
    return math.ceil(round(initial * (100.0 - reduce_percent) / 100.0, 9))


class _Simplifier:
    def __init__(self, mesh: RefMesh, params: SimplifyParams):
        self.params = params
        self.its = params.mode is Mode.ITS
        self.state = MeshState(mesh, with_clouds=self.its, area_weighted=params.area_weighted)
        self.cache: dict[tuple[int, int], tuple[CandidatePair, Optional[list[WedgeGroup]]]] = {}
        self.cached_at: dict[int, set[tuple[int, int]]] = {}
        self.blocked_at: dict[int, set[tuple[int, int]]] = {}
        self.blocked_pairs: set[tuple[int, int]] = set()  # non-edge pairs
        self.guard_trips = 0
        if params.fixed_threshold is not None:
            self.threshold = ThresholdState(params.fixed_threshold, params.fixed_threshold)
        else:
            self.threshold = ThresholdState.seed(mesh, params.initial_threshold)
        self._tree = None

    # candidate discovery ---------------------------------------------

    def _proximity(self, t: float) -> list[tuple[int, int]]:
        if self._tree is None:
            from scipy.spatial import cKDTree

            self._tree = cKDTree(self.state.pos)
        st = self.state
        out = []
        for i, j in self._tree.query_pairs(r=t, output_type="ndarray").tolist():
            key = _edge(i, j)
            if key in st.edges.nfaces or key in self.blocked_pairs:
                continue
            if not (st.alive[i] and st.alive[j]):
                continue
            if np.linalg.norm(st.pos[i] - st.pos[j]) < t:
                out.append(key)
        return out

    def _keys_below(self, t: float) -> list[tuple[int, int]]:
        keys = self.state.edges.below(t)
        if self.params.proximity_pairs:
            keys = keys + self._proximity(t)
        return keys

    def _count_below(self, t: float) -> int:
        n = self.state.edges.count_below(t)
        if self.params.proximity_pairs:
            n += len(self._proximity(t))
        return n

    def _block(self, key: tuple[int, int]) -> None:
        if key in self.state.edges.nfaces:
            self.state.edges.block(key)
        else:
            self.blocked_pairs.add(key)
        for v in key:
            self.blocked_at.setdefault(v, set()).add(key)

    def discover(self) -> list[CandidatePair]:
        while True:
            if self.params.fixed_threshold is None:
                self.threshold, tripped = settle_threshold(
                    self.threshold, self._count_below, refine=self.params.refine_threshold
                )
                self.guard_trips += tripped
            keys = sorted(self._keys_below(self.threshold.t))
            if not keys:
                return []
            ready, blocked_any = [], False
            for key in keys:
                cand = self.evaluate(key)
                if cand is None:
                    self._block(key)
                    blocked_any = True
                else:
                    ready.append(cand)
            if not blocked_any:
                return ready

    # error evaluation -------------------------------------------------

    def evaluate(self, key: tuple[int, int]) -> Optional[CandidatePair]:
        hit = self.cache.get(key)
        if hit is not None:
            return hit[0]
        st = self.state
        a, b = key
        is_edge = key in st.edges.nfaces
        if is_edge and self.params.manifold_guard and not st.collapse_keeps_manifold(a, b):
            return None
        i, geo = choose_survivor(st.q[a], st.q[b], st.pos[a], st.pos[b])
        s, r = (a, b) if i == 0 else (b, a)
        cand = CandidatePair(a, b, is_edge, geometric_error=geo, survivor=s)
        groups = None
        if not self.its:
            cand.unified_error = geo
        else:
            groups = st.plan(s, r)
            area = sum(st.face_area[f] for f in st.vfaces[a] | st.vfaces[b])
            probes = {
                Channel.TEXTURE: [g.texcoord for g in groups if g.texcoord is not None],
                Channel.NORMAL: [g.normal for g in groups if g.normal is not None],
                Channel.COLOR: [g.color for g in groups if g.color is not None],
            }
            terms = {}
            for ch, values in probes.items():
                merged = merge_clouds(st.clouds[a][ch], st.clouds[b][ch])
                terms[ch] = channel_term(merged, values)
            cand.texture_error = terms[Channel.TEXTURE][1]
            cand.normal_error = terms[Channel.NORMAL][1]
            cand.color_error = terms[Channel.COLOR][1]
            try:
                cand.unified_error = unified_error(
                    area, geo, normal=terms[Channel.NORMAL], color=terms[Channel.COLOR], texture=terms[Channel.TEXTURE]
                )
            except InvalidCollapse:
                return None
        self.cache[key] = (cand, groups)
        for v in key:
            self.cached_at.setdefault(v, set()).add(key)
        return cand

    def invalidate(self, touched: set[int]) -> None:
        for v in touched:
            for key in self.cached_at.pop(v, ()):
                self.cache.pop(key, None)
            for key in self.blocked_at.pop(v, ()):
                if key in self.blocked_pairs:
                    self.blocked_pairs.discard(key)
                else:
                    self.state.edges.unblock(key)

    def collapse(self, cand: CandidatePair) -> int:
        s = cand.survivor
        r = cand.v2 if s == cand.v1 else cand.v1
        _, groups = self.cache.get(cand.key, (None, None))
        removed, touched = self.state.collapse(s, r, groups)
        self.invalidate(touched)
        return removed


def simplify(
    scene: Scene,
    params: SimplifyParams = SimplifyParams(),
    on_collapse: Optional[Callable[[CollapseRecord, MeshState], None]] = None,
) -> tuple[Scene, SimplifyReport]:
    """Simplify the scene's reference mesh; instances pass through untouched."""
    mesh = scene.mesh
    if mesh.n_vertices == 0:
        raise ValueError("cannot simplify an empty mesh")
    issues = validate_mesh(mesh)
    if issues:
        raise ValueError(f"invalid mesh ({len(issues)} issues), first: {issues[0].message}")

    start = time.perf_counter()
    report = SimplifyReport(mesh.n_vertices, len(mesh.texcoords), len(mesh.normals), mesh.n_faces)
    if params.target is Target.FACES:
        goal = target_count(mesh.n_faces, params.reduce_percent)
    else:
        goal = target_count(mesh.n_vertices, params.reduce_percent)

    run = _Simplifier(mesh, params)
    st = run.state

    def reached() -> bool:
        current = st.n_faces if params.target is Target.FACES else st.n_vertices
        return current <= goal

    while not reached():
        cands = run.discover()
        if not cands:
            report.stop_reason = StopReason.NO_CANDIDATES
            break
        best = select_min_error_pair(cands)
        if params.max_unified_error is not None and best.unified_error > params.max_unified_error:
            report.stop_reason = StopReason.ERROR_CAP_HIT
            break
        removed = run.collapse(best)
        rec = CollapseRecord(best.v1, best.v2, best.survivor, best.geometric_error, best.unified_error, removed)
        report.trace.append(rec)
        if on_collapse is not None:
            on_collapse(rec, st)
    else:
        report.stop_reason = StopReason.TARGET_REACHED

    out = compact(st) if report.trace else mesh
    report.collapses_performed = len(report.trace)
    report.final_vertices = out.n_vertices
    report.final_texcoords = len(out.texcoords)
    report.final_normals = len(out.normals)
    report.final_faces = out.n_faces
    report.final_threshold = run.threshold.t
    report.guard_trips = run.guard_trips
    report.elapsed_ms = (time.perf_counter() - start) * 1000.0
    return replace(scene, mesh=out), report
