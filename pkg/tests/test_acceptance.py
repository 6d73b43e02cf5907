"""Acceptance suite: one group of tests per criterion.

Run ``pytest tests/test_acceptance.py`` for the per-criterion PASS/FAIL
summary at the end of the session output.
"""

from __future__ import annotations

import math
import random
import sys
import time

import numpy as np
import pytest
from scipy.spatial import Delaunay

from instmesh.attributes import AttributeCloud, Channel, channel_term, cloud_error, unified_error
from instmesh.cli import compare_scene, main, parse_report
from instmesh.instancing import expand_scene
from instmesh.mesh import Instance, RefMesh, Scene, validate_mesh
from instmesh.objio import OutputKind, parse_scene, read_scene, save_scene, write_scene
from instmesh.pairs import Decision, ThresholdState, adapt_threshold, settle_threshold
from instmesh.quadric import Plane, fundamental_quadric, quadric_error
from instmesh.simplify import Mode, SimplifyParams, StopReason, simplify, target_count
from instmesh.synthetic import (
    BUNNY_FACES,
    BUNNY_VERTICES,
    make_blob,
    make_bunny_class,
    make_instanced_scene,
    random_transforms,
)

# reference vertex/face counts for the 2503/4968 model after 10, 20 and 50 percent reduction
REFERENCE_COUNTS = {10: (2247, 4456), 20: (1998, 3958), 50: (1244, 2448)}


@pytest.fixture(scope="module")
def bunny_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("bunny") / "bunny.obj"
    save_scene(make_instanced_scene(make_bunny_class(), 13, seed=7), path)
    return path


# 1 -------------------------------------------------------------------------

C1 = pytest.mark.criterion(1, "face target and 2:1 removal on closed meshes; bunny-class counts within 1%")


@C1
@pytest.mark.parametrize("mode", list(Mode))
@pytest.mark.parametrize("n, seed", [(250, 0), (400, 1), (777, 2)])
@pytest.mark.parametrize("percent", [5, 10, 20, 50, 75])
def test_closed_mesh_face_target(n, seed, percent, mode):
    mesh = make_blob(n, seed=seed)
    out, rep = simplify(Scene(mesh), SimplifyParams(reduce_percent=percent, mode=mode))
    goal = target_count(mesh.n_faces, percent)
    assert goal - 2 <= out.mesh.n_faces <= goal
    faces_removed = mesh.n_faces - out.mesh.n_faces
    vertices_removed = mesh.n_vertices - out.mesh.n_vertices
    assert 2 * vertices_removed == faces_removed


@C1
@pytest.mark.parametrize("percent", sorted(REFERENCE_COUNTS))
def test_bunny_class_counts(bunny_file, tmp_path, percent):
    out = tmp_path / "bunny_s.obj"
    rows = tmp_path / "rows.csv"
    code = main(["simplify", "--input", str(bunny_file), "--reduce", str(percent), "--out", str(out),
                 "--expanded", str(tmp_path / "bunny_idx.obj"), "--report", str(rows), "--quiet"])
    assert code == 0
    (row,) = parse_report(rows.read_text())
    want_v, want_f = REFERENCE_COUNTS[percent]
    print(f"P={percent}: {row.vertices} v / {row.faces} f (reference {want_v} / {want_f}), {row.time_ms:.0f} ms")
    assert abs(row.vertices - want_v) <= 0.01 * BUNNY_VERTICES
    assert abs(row.faces - want_f) <= 0.01 * BUNNY_FACES
    assert row.time_ms < 5000


# 2 -------------------------------------------------------------------------

C2 = pytest.mark.criterion(2, "expanded positions equal the transformed reference exactly")


def _apply(m, p):
    x, y, z = p
    return [m[r][0] * x + m[r][1] * y + m[r][2] * z + m[r][3] for r in range(3)]


@C2
def test_instancing_is_exact():
    mesh = make_blob(1250, seed=11)
    mats = random_transforms(6, seed=3, scale_range=(0.1, 10.0), spacing=123.456)
    mats.append(np.diag([-1.0, 2.0, 0.5, 1.0]))
    scene = Scene(mesh, tuple(Instance(m) for m in mats))
    out, _ = simplify(scene, SimplifyParams(reduce_percent=20))
    ref = out.mesh.positions.tolist()
    assert len(ref) >= 1000
    for inst, part in zip(out.instances, expand_scene(out)):
        m = inst.transform.tolist()
        got = part.positions.tolist()
        assert got == [_apply(m, p) for p in ref]


# 3 -------------------------------------------------------------------------

C3 = pytest.mark.criterion(3, "N=13 at 10%: instanced bytes < half the expanded baseline, under 10 s")


@C3
def test_size_advantage(bunny_file, tmp_path):
    scene = read_scene(bunny_file)
    start = time.perf_counter()
    result = compare_scene(scene, SimplifyParams(reduce_percent=10), tmp_path, "bunny")
    elapsed = time.perf_counter() - start
    print(result.table())
    assert len(scene.instances) == 13
    assert result.instanced.bytes < 0.5 * result.baseline.bytes
    assert elapsed < 10.0


# 4 -------------------------------------------------------------------------

C4 = pytest.mark.criterion(4, "instanced time flat in N (<= 2x), baseline grows (>= 4x) from N=1 to N=8")


@C4
def test_time_scaling(tmp_path):
    mesh = make_blob(400, seed=5)
    assert mesh.n_faces >= 500
    params = SimplifyParams(reduce_percent=20)
    best = {}
    for n in (1, 8):
        scene = make_instanced_scene(mesh, n, seed=1)
        runs = [compare_scene(scene, params, tmp_path / f"n{n}_{k}") for k in range(3)]
        best[n] = (min(r.instanced.time_ms for r in runs), min(r.baseline.time_ms for r in runs))
    print(f"instanced {best[1][0]:.1f} -> {best[8][0]:.1f} ms, baseline {best[1][1]:.1f} -> {best[8][1]:.1f} ms")
    assert best[8][0] <= 2.0 * best[1][0]
    assert best[8][1] >= 4.0 * best[1][1]


# 5 -------------------------------------------------------------------------

C5 = pytest.mark.criterion(5, "quadric, cloud and unified-error formulas")


@C5
def test_quadric_is_squared_distance():
    r = np.random.default_rng(2024)
    for _ in range(100):
        n = r.normal(size=3)
        n /= np.linalg.norm(n)
        d = float(r.uniform(-3, 3))
        q = r.uniform(-5, 5, size=3)
        direct = (float(n @ q) + d) ** 2
        assert abs(quadric_error(fundamental_quadric(Plane(*n, d)), q) - direct) <= 1e-9


@C5
def test_cloud_error_matches_direct_sum():
    r = random.Random(7)
    for size in list(range(1, 11)) + [25, 50, 100]:
        pts = [[r.uniform(-1, 1) for _ in range(3)] for _ in range(size)]
        w = [r.uniform(0.01, 2.0) for _ in range(size)]
        p = [r.uniform(-1, 1) for _ in range(3)]
        pi = sum(wi * sum((a - b) ** 2 for a, b in zip(q, p)) for q, wi in zip(pts, w))
        direct = math.sqrt(pi / sum(w))
        assert abs(cloud_error(AttributeCloud(Channel.NORMAL, pts, w), p) - direct) <= 1e-12


@C5
def test_empty_clouds_leave_geometric_error():
    for area, gamma in [(1.0, 0.0), (0.37, 2.5), (12.0, 1e-7)]:
        terms = {ch: channel_term(AttributeCloud.empty(ch), [np.zeros(ch.dim)]) for ch in Channel}
        e = unified_error(area, gamma, normal=terms[Channel.NORMAL], color=terms[Channel.COLOR],
                          texture=terms[Channel.TEXTURE])
        assert e == gamma


# 6 -------------------------------------------------------------------------

C6 = pytest.mark.criterion(6, "every greedy collapse matches an exhaustive minimum-error scan")


def _oracle_replay(mesh: RefMesh, trace) -> list[str]:
    """Independent quadric-only greedy decimator, checked step by step against ``trace``."""
    pos = [tuple(p) for p in mesh.positions.tolist()]
    faces = [list(f) for f in mesh.faces.tolist()]

    def plane(f):
        a, b, c = (pos[v] for v in f)
        u = [b[i] - a[i] for i in range(3)]
        w = [c[i] - a[i] for i in range(3)]
        n = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]]
        length = math.sqrt(sum(x * x for x in n))
        n = [x / length for x in n]
        return n + [-sum(n[i] * a[i] for i in range(3))]

    planes: dict[int, list[list[float]]] = {v: [] for v in range(len(pos))}
    for f in faces:
        p = plane(f)
        for v in f:
            planes[v].append(p)

    def error(planeset, x):
        # a point within 1e-12 of a plane lies on it
        total = 0.0
        for p in planeset:
            d = p[0] * x[0] + p[1] * x[1] + p[2] * x[2] + p[3]
            if abs(d) > 1e-12:
                total += d * d
        return total

    mismatches = []
    for step, rec in enumerate(trace):
        edges = sorted({(min(a, b), max(a, b)) for f in faces for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0]))})
        best = None
        for a, b in edges:
            both = planes[a] + planes[b]
            ea, eb = error(both, pos[a]), error(both, pos[b])
            survivor, e = (a, ea) if ea <= eb else (b, eb)
            if best is None or (e, a, b) < best[0]:
                best = ((e, a, b), survivor)
        (e, a, b), survivor = best
        if (rec.v1, rec.v2, rec.survivor) != (a, b, survivor):
            mismatches.append(f"step {step}: got {(rec.v1, rec.v2, rec.survivor)}, oracle {(a, b, survivor)}")
            break
        assert abs(rec.geometric_error - e) <= 1e-9
        removed = b if survivor == a else a
        planes[survivor] = planes[survivor] + planes[removed]
        del planes[removed]
        faces = [[survivor if v == removed else v for v in f] for f in faces]
        faces = [f for f in faces if len(set(f)) == 3]
    return mismatches


def _random_small_mesh(seed: int) -> RefMesh:
    r = np.random.default_rng(seed)
    n = int(r.integers(5, 13))
    if seed % 2:
        return make_blob(n, seed=seed, bumpiness=0.3, textured=False)
    xy = r.uniform(-1, 1, size=(n, 2))
    tri = Delaunay(xy).simplices
    z = r.normal(scale=0.3, size=n)
    return RefMesh(np.c_[xy, z], tri)


@C6
def test_greedy_matches_exhaustive_oracle():
    params = SimplifyParams(reduce_percent=60, mode=Mode.QUADRIC_ONLY, fixed_threshold=math.inf, manifold_guard=False)
    total, mismatches = 0, []
    for seed in range(50):
        mesh = _random_small_mesh(seed)
        assert mesh.n_vertices <= 12
        _, rep = simplify(Scene(mesh), params)
        total += len(rep.trace)
        mismatches += [f"mesh {seed} {m}" for m in _oracle_replay(mesh, rep.trace)]
    print(f"{total} collapses checked, {len(mismatches)} mismatches")
    assert total > 100
    assert mismatches == []


# 7 -------------------------------------------------------------------------

C7 = pytest.mark.criterion(7, "instanced round trip and expanded self-consumption")


def _assert_round_trip(scene: Scene):
    back = parse_scene(write_scene(scene, OutputKind.INSTANCED))
    a, b = scene.mesh, back.mesh
    assert (a.n_vertices, a.n_faces, len(a.texcoords), len(a.normals)) == (
        b.n_vertices, b.n_faces, len(b.texcoords), len(b.normals))
    assert len(back.instances) == len(scene.instances)
    for name in ("faces", "face_texcoords", "face_normals"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    for name in ("positions", "texcoords", "normals"):
        assert np.max(np.abs(getattr(a, name) - getattr(b, name)), initial=0.0) <= 1e-6
    for x, y in zip(scene.instances, back.instances):
        assert np.max(np.abs(x.transform - y.transform)) <= 1e-6

    flat = parse_scene(write_scene(scene, OutputKind.EXPANDED_INDEXED))
    assert validate_mesh(flat.mesh) == []
    assert flat.mesh.n_faces == len(scene.instances) * a.n_faces


@C7
@pytest.mark.parametrize("seed", range(4))
def test_round_trip(seed):
    scene = make_instanced_scene(make_blob(150 + 50 * seed, seed=seed), 1 + 3 * seed, seed=seed)
    _assert_round_trip(scene)
    out, _ = simplify(scene, SimplifyParams(reduce_percent=30))
    _assert_round_trip(out)


@C7
def test_written_bunny_outputs_reparse(bunny_file, tmp_path):
    out, idx = tmp_path / "s.obj", tmp_path / "idx.obj"
    assert main(["simplify", "--input", str(bunny_file), "--reduce", "20", "--out", str(out),
                 "--expanded", str(idx), "--quiet"]) == 0
    inst = parse_scene(out.read_text())
    flat = parse_scene(idx.read_text())
    assert validate_mesh(inst.mesh) == [] and validate_mesh(flat.mesh) == []
    assert flat.mesh.n_faces == 13 * inst.mesh.n_faces


# 8 -------------------------------------------------------------------------

C8 = pytest.mark.criterion(8, "threshold automaton table and oscillation guard")


@C8
def test_automaton_table():
    for count in range(101):
        state = ThresholdState(1.0, 1.0)
        new, decision = adapt_threshold(state, count)
        if count == 0:
            assert (new.t, decision) == (2.0, Decision.DOUBLED)
        elif count <= 10:
            assert (new.t, decision) == (1.0, Decision.KEEP)
        else:
            assert (new.t, decision) == (0.5, Decision.HALVED)


@C8
@pytest.mark.parametrize("refine", [True, False])
def test_guard_on_synthetic_cliff(refine):
    calls = []

    def count(t):
        calls.append(t)
        return 0 if t < 1.0 else 11

    state, tripped = settle_threshold(ThresholdState(0.01, 0.01), count, refine=refine)
    assert tripped
    assert count(state.t) == 11
    assert len(calls) <= 70


@C8
def test_guard_on_equal_edge_strip():
    h = math.sqrt(3) / 2
    pos = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [0.5, h, 0], [1.5, h, 0], [2.5, h, 0]]
    faces = [[0, 1, 4], [1, 5, 4], [1, 2, 5], [2, 6, 5], [2, 3, 6]]
    mesh = RefMesh(pos, faces)
    for refine in (True, False):
        for guard in (True, False):
            params = SimplifyParams(reduce_percent=40, refine_threshold=refine, manifold_guard=guard)
            out, rep = simplify(Scene(mesh), params)
            assert rep.guard_trips >= 1
            assert rep.stop_reason in (StopReason.TARGET_REACHED, StopReason.NO_CANDIDATES)
            assert validate_mesh(out.mesh) == []


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
