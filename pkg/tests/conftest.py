from __future__ import annotations

import math

import numpy as np
import pytest

from instmesh.mesh import RefMesh


def tetrahedron(edge: float = 1.0) -> RefMesh:
    """Regular tetrahedron, outward winding."""
    p = np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.5, math.sqrt(3) / 2, 0.0],
            [0.5, math.sqrt(3) / 6, math.sqrt(2.0 / 3.0)],
        ]
    ) * edge
    faces = [[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]]
    return RefMesh(p, faces)


def lone_triangle() -> RefMesh:
    return RefMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


def fan(n: int = 6, z_jitter: float = 0.0) -> RefMesh:
    """Closed fan of ``n`` triangles around vertex 0."""
    ring = [[math.cos(2 * math.pi * k / n), math.sin(2 * math.pi * k / n), z_jitter * (k % 2)] for k in range(n)]
    faces = [[0, 1 + k, 1 + (k + 1) % n] for k in range(n)]
    return RefMesh([[0, 0, 0]] + ring, faces)


def cube_corner() -> RefMesh:
    """Origin corner of the unit cube: two right triangles on each of x=0, y=0, z=0."""
    p = [
        [0, 0, 0],
        [1, 0, 0], [0, 1, 0], [0, 0, 1],
        [1, 1, 0], [0, 1, 1], [1, 0, 1],
    ]
    faces = [
        [0, 2, 4], [0, 4, 1],  # z = 0
        [0, 3, 5], [0, 5, 2],  # x = 0
        [0, 1, 6], [0, 6, 3],  # y = 0
    ]
    return RefMesh(p, faces)


def cube() -> RefMesh:
    p = [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)]
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = []
    for a, b, c, d in quads:
        faces += [[a, b, c], [a, c, d]]
    return RefMesh(p, faces)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one pass/fail line per acceptance criterion --------------------------------

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "failed": []})
    if rep.failed or (rep.when == "setup" and rep.skipped):
        entry["ok"] = False
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] else "FAIL"
        extra = "" if e["ok"] else "  (" + ", ".join(e["failed"]) + ")"
        terminalreporter.write_line(f"criterion {number}: {status}  {e['title']}{extra}")
