"""Instance-extended Wavefront OBJ reader and the instanced / expanded writers.

Instance block grammar::

    instances <N>
    instance m00 m01 m02 m03 m10 ... m33     (N lines, row-major, p' = M [x y z 1]^T)
"""

from __future__ import annotations

import enum
import io
import logging
import shutil
import warnings
from pathlib import Path
from typing import Iterable, Optional, TextIO, Union

import numpy as np

from .instancing import expand_scene
from .mesh import DET_EPS, Instance, RefMesh, Scene

log = logging.getLogger(__name__)

# harmless OBJ statements that carry nothing this model keeps
_IGNORED = {"g", "s", "l", "p", "usemap", "maplib", "lod", "shadow_obj", "trace_obj"}


class ParseErrorKind(enum.Enum):
    UNKNOWN_KEYWORD = "UnknownKeyword"
    MALFORMED_NUMBER = "MalformedNumber"
    INDEX_OUT_OF_RANGE = "IndexOutOfRange"
    NON_TRIANGLE_FACE = "NonTriangleFace"
    BAD_INSTANCE_MATRIX = "BadInstanceMatrix"
    MISSING_INSTANCE_COUNT = "MissingInstanceCount"


class ParseError(ValueError):
    def __init__(self, line_number: int, kind: ParseErrorKind, message: str):
        super().__init__(f"line {line_number}: {kind.value}: {message}")
        self.line_number = line_number
        self.kind = kind
        self.message = message


class OutputKind(enum.Enum):
    INSTANCED = "instanced"
    EXPANDED_INDEXED = "expanded"


def _floats(tokens: list[str], n_min: int, n_max: int, lineno: int) -> list[float]:
    if not n_min <= len(tokens) <= n_max:
        raise ParseError(lineno, ParseErrorKind.MALFORMED_NUMBER, f"expected {n_min}-{n_max} numbers, got {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(lineno, ParseErrorKind.MALFORMED_NUMBER, str(exc)) from None


def _index(tok: str, count: int, what: str, lineno: int) -> int:
    try:
        i = int(tok)
    except ValueError:
        raise ParseError(lineno, ParseErrorKind.MALFORMED_NUMBER, f"bad {what} index {tok!r}") from None
    if i < 1 or i > count:
        raise ParseError(lineno, ParseErrorKind.INDEX_OUT_OF_RANGE, f"{what} index {i} outside 1..{count}")
    return i - 1


def parse_scene(source: Union[str, TextIO, Iterable[str]], strict: bool = False) -> Scene:
    """Parse instance-extended OBJ text.

    Unknown keywords are skipped with a log warning, or rejected when
    ``strict`` is set.  The first error aborts the parse.
    """
    lines = io.StringIO(source) if isinstance(source, str) else source
    positions: list[list[float]] = []
    colors: list[Optional[list[float]]] = []
    texcoords: list[list[float]] = []
    normals: list[list[float]] = []
    faces: list[list[int]] = []
    ftex: list[list[int]] = []
    fnrm: list[list[int]] = []
    matrices: list[np.ndarray] = []
    declared: Optional[tuple[int, int]] = None  # (count, line)
    mtllib = obj_name = material = None
    skipped: dict[str, int] = {}

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "v":
            vals = _floats(rest, 3, 7, lineno)
            if len(vals) not in (3, 6):
                raise ParseError(lineno, ParseErrorKind.MALFORMED_NUMBER, "vertex needs 3 coordinates or 3 + RGB")
            positions.append(vals[:3])
            colors.append(vals[3:] if len(vals) == 6 else None)
        elif key == "vt":
            texcoords.append(_floats(rest, 1, 3, lineno)[:2] + [0.0] * max(0, 2 - len(rest)))
        elif key == "vn":
            normals.append(_floats(rest, 3, 3, lineno))
        elif key == "f":
            if len(rest) != 3:
                raise ParseError(lineno, ParseErrorKind.NON_TRIANGLE_FACE, f"face has {len(rest)} corners; only triangles are supported")
            vs, ts, ns = [], [], []
            for tok in rest:
                parts = tok.split("/")
                if len(parts) > 3 or not parts[0]:
                    raise ParseError(lineno, ParseErrorKind.MALFORMED_NUMBER, f"bad face corner {tok!r}")
                vs.append(_index(parts[0], len(positions), "position", lineno))
                t = parts[1] if len(parts) > 1 else ""
                n = parts[2] if len(parts) > 2 else ""
                ts.append(_index(t, len(texcoords), "texcoord", lineno) if t else -1)
                ns.append(_index(n, len(normals), "normal", lineno) if n else -1)
            for arr, name in ((ts, "texcoord"), (ns, "normal")):
                if -1 in arr and any(x >= 0 for x in arr):
                    raise ParseError(lineno, ParseErrorKind.MALFORMED_NUMBER, f"face mixes corners with and without {name}")
            faces.append(vs)
            ftex.append(ts)
            fnrm.append(ns)
        elif key == "instances":
            if declared is not None:
                raise ParseError(lineno, ParseErrorKind.MISSING_INSTANCE_COUNT, "duplicate instances directive")
            if len(rest) != 1:
                raise ParseError(lineno, ParseErrorKind.MISSING_INSTANCE_COUNT, "instances needs exactly one count")
            try:
                n = int(rest[0])
            except ValueError:
                raise ParseError(lineno, ParseErrorKind.MALFORMED_NUMBER, f"bad instance count {rest[0]!r}") from None
            if n < 1:
                raise ParseError(lineno, ParseErrorKind.MISSING_INSTANCE_COUNT, "instance count must be at least 1")
            declared = (n, lineno)
        elif key == "instance":
            if declared is None:
                raise ParseError(lineno, ParseErrorKind.MISSING_INSTANCE_COUNT, "instance line before an instances directive")
            if len(matrices) >= declared[0]:
                raise ParseError(lineno, ParseErrorKind.MISSING_INSTANCE_COUNT, f"more than the {declared[0]} declared instances")
            if len(rest) != 16:
                raise ParseError(lineno, ParseErrorKind.BAD_INSTANCE_MATRIX, f"instance needs 16 numbers, got {len(rest)}")
            m = np.array(_floats(rest, 16, 16, lineno)).reshape(4, 4)
            if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
                raise ParseError(lineno, ParseErrorKind.BAD_INSTANCE_MATRIX, "bottom row must be 0 0 0 1")
            if abs(np.linalg.det(m[:3, :3])) <= DET_EPS:
                raise ParseError(lineno, ParseErrorKind.BAD_INSTANCE_MATRIX, "singular 3x3 block")
            matrices.append(m)
        elif key == "mtllib":
            mtllib = " ".join(rest) or None
        elif key == "usemtl":
            material = " ".join(rest) or None
        elif key == "o":
            obj_name = " ".join(rest) or None
        elif key in _IGNORED:
            continue
        else:
            if strict:
                raise ParseError(lineno, ParseErrorKind.UNKNOWN_KEYWORD, f"unknown keyword {key!r}")
            skipped[key] = skipped.get(key, 0) + 1

    for key, n in skipped.items():
        log.warning("skipped %d line(s) with unknown keyword %r", n, key)
    if declared is not None and len(matrices) != declared[0]:
        raise ParseError(
            declared[1],
            ParseErrorKind.MISSING_INSTANCE_COUNT,
            f"declared {declared[0]} instances, found {len(matrices)}",
        )

    col = None
    if colors and all(c is not None for c in colors):
        col = np.array(colors)
    elif any(c is not None for c in colors):
        log.warning("only some vertices carry colors; colors dropped")

    mesh = RefMesh(
        positions=np.array(positions).reshape(-1, 3),
        faces=np.array(faces, dtype=np.int64).reshape(-1, 3),
        texcoords=np.array(texcoords).reshape(-1, 2),
        normals=np.array(normals).reshape(-1, 3),
        face_texcoords=np.array(ftex, dtype=np.int64).reshape(-1, 3),
        face_normals=np.array(fnrm, dtype=np.int64).reshape(-1, 3),
        colors=col,
    )
    instances = tuple(Instance(m) for m in matrices) or (Instance.identity(),)
    return Scene(mesh, instances, material_lib=mtllib, object_name=obj_name, material_name=material)


def read_scene(path: Union[str, Path], strict: bool = False) -> Scene:
    with open(path, encoding="utf-8") as fh:
        return parse_scene(fh, strict=strict)


def _fmt(x: float) -> str:
    return "%.6f" % (x + 0.0)


def _vertex_lines(positions: np.ndarray, colors: Optional[np.ndarray]) -> list[str]:
    if colors is None:
        return ["v %s %s %s" % tuple(_fmt(c) for c in p) for p in positions.tolist()]
    return [
        "v %s %s %s %s %s %s" % tuple(_fmt(c) for c in (*p, *rgb))
        for p, rgb in zip(positions.tolist(), colors.tolist())
    ]


def _face_lines(faces: np.ndarray, ft: np.ndarray, fn: np.ndarray) -> list[str]:
    out = []
    for vs, ts, ns in zip(faces.tolist(), ft.tolist(), fn.tolist()):
        corners = []
        for v, t, n in zip(vs, ts, ns):
            if t >= 0 and n >= 0:
                corners.append(f"{v + 1}/{t + 1}/{n + 1}")
            elif t >= 0:
                corners.append(f"{v + 1}/{t + 1}")
            elif n >= 0:
                corners.append(f"{v + 1}//{n + 1}")
            else:
                corners.append(str(v + 1))
        out.append("f " + " ".join(corners))
    return out


def _header(scene: Scene) -> list[str]:
    out = []
    if scene.material_lib:
        out.append(f"mtllib {scene.material_lib}")
    if scene.object_name:
        out.append(f"o {scene.object_name}")
    return out


def write_scene(scene: Scene, kind: OutputKind = OutputKind.INSTANCED) -> str:
    mesh = scene.mesh
    lines = _header(scene)
    usemtl = [f"usemtl {scene.material_name}"] if scene.material_name else []
    if kind is OutputKind.INSTANCED:
        lines += _vertex_lines(mesh.positions, mesh.colors)
        lines += ["vt %s %s" % (_fmt(u), _fmt(v)) for u, v in mesh.texcoords.tolist()]
        lines += ["vn %s %s %s" % tuple(_fmt(c) for c in n) for n in mesh.normals.tolist()]
        lines += usemtl
        lines += _face_lines(mesh.faces, mesh.face_texcoords, mesh.face_normals)
        lines.append(f"instances {len(scene.instances)}")
        for inst in scene.instances:
            lines.append("instance " + " ".join(_fmt(x) for x in inst.transform.ravel().tolist()))
    else:
        lines += ["vt %s %s" % (_fmt(u), _fmt(v)) for u, v in mesh.texcoords.tolist()]
        for i, part in enumerate(expand_scene(scene)):
            lines.append(f"g instance_{i}")
            lines += _vertex_lines(part.positions, part.colors)
            lines += ["vn %s %s %s" % tuple(_fmt(c) for c in n) for n in part.normals.tolist()]
            lines += usemtl
            lines += _face_lines(part.faces, part.face_texcoords, part.face_normals)
    return "\n".join(lines) + "\n"


def save_scene(scene: Scene, path: Union[str, Path], kind: OutputKind = OutputKind.INSTANCED) -> int:
    """Write ``scene`` to ``path``; returns the number of bytes written."""
    data = write_scene(scene, kind).encode("utf-8")
    Path(path).write_bytes(data)
    return len(data)


def copy_material_lib(scene: Scene, source_dir: Union[str, Path], dest_dir: Union[str, Path]) -> Optional[str]:
    """Copy the scene's .mtl next to the output; warn (not fail) when it is missing."""
    name = scene.material_lib
    if not name:
        return None
    src = Path(source_dir) / name
    if not src.is_file():
        warnings.warn(f"material library {name!r} not found in {source_dir}", stacklevel=2)
        return None
    dst = Path(dest_dir) / name
    dst.parent.mkdir(parents=True, exist_ok=True)
    if src.resolve() != dst.resolve():
        shutil.copyfile(src, dst)
    return name
