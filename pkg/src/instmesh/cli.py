"""Command-line entry points: ``simplify``, ``compare`` and ``generate``.

Exit codes: 0 success, 1 unreadable/unparsable input, 2 invalid parameters.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

from .instancing import expand_to_mesh
from .mesh import Scene, validate_mesh
from .objio import OutputKind, ParseError, copy_material_lib, read_scene, save_scene
from .simplify import Mode, SimplifyParams, SimplifyReport, Target, simplify
from .synthetic import make_blob, make_bunny_class, make_instanced_scene

log = logging.getLogger("instmesh")

REPORT_HEADER = ("model", "mode", "reduce", "instances", "time_ms", "bytes", "vertices", "faces")


@dataclass(frozen=True)
class RunRecord:
    model: str
    mode: str  # ITS | QuadricOnly | ExpandedBaseline
    reduce: float
    instances: int
    time_ms: float
    bytes: int
    vertices: int
    faces: int


MODE_LABEL = {Mode.ITS: "ITS", Mode.QUADRIC_ONLY: "QuadricOnly"}


def emit_report(records: Sequence[RunRecord], header: bool = True) -> str:
    if not records:
        raise ValueError("a report needs at least one record")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(REPORT_HEADER)
    for r in records:
        w.writerow([r.model, r.mode, repr(float(r.reduce)), r.instances, f"{r.time_ms:.3f}", r.bytes, r.vertices, r.faces])
    return buf.getvalue()


def parse_report(text: str) -> list[RunRecord]:
    rows = list(csv.DictReader(io.StringIO(text)))
    types = {f.name: f.type for f in fields(RunRecord)}
    conv = {"str": str, "float": float, "int": int}
    return [RunRecord(**{k: conv[types[k]](v) for k, v in row.items()}) for row in rows]


def append_report(path: Path, records: Sequence[RunRecord]) -> None:
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        fh.write(emit_report(records, header=new))


def _percent(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v <= 100.0:
        raise argparse.ArgumentTypeError(f"reduction must be within [0, 100], got {v}")
    return v


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _add_simplify_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", type=Path, required=True, help="instance-extended OBJ file")
    p.add_argument("--reduce", type=_percent, required=True, help="percent of faces to remove (0-100)")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.ITS.value)
    p.add_argument("--target", choices=[t.value for t in Target], default=Target.FACES.value)
    p.add_argument("--max-error", type=_positive, default=None, help="stop once the cheapest collapse exceeds this")
    p.add_argument("--proximity-pairs", action="store_true", help="also admit close non-edge pairs")
    p.add_argument(
        "--initial-threshold", type=_positive, default=0.01, help="seed distance threshold as a fraction of the bbox diagonal"
    )
    p.add_argument("--report", type=Path, default=None, help="append a CSV row per run to this file")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="instmesh", description="Instanced, attribute-aware mesh simplification.")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simplify", help="simplify the reference mesh of an instanced OBJ")
    _add_simplify_options(s)
    s.add_argument("--out", type=Path, required=True, help="instanced output OBJ")
    s.add_argument("--expanded", type=Path, default=None, help="also write every instance as one plain OBJ")

    c = sub.add_parser("compare", help="instanced run vs. simplifying all instances expanded")
    _add_simplify_options(c)
    c.add_argument("--out-dir", type=Path, required=True)

    g = sub.add_parser("generate", help="write a synthetic instanced scene")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--vertices", type=int, default=500)
    g.add_argument("--bunny-class", action="store_true", help="2503-vertex / 4968-face open mesh")
    g.add_argument("--instances", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--force", action="store_true")
    return parser


def _params(args) -> SimplifyParams:
    return SimplifyParams(
        reduce_percent=args.reduce,
        max_unified_error=args.max_error,
        mode=Mode(args.mode),
        target=Target(args.target),
        proximity_pairs=args.proximity_pairs,
        initial_threshold=args.initial_threshold,
    )


class _UsageError(Exception):
    pass


def _check_writable(paths, force: bool) -> None:
    for p in paths:
        if p is not None and p.exists() and not force:
            raise _UsageError(f"{p} exists; pass --force to overwrite")


def _load(path: Path) -> Scene:
    return read_scene(path)


def _verified_counts(path: Path) -> tuple[int, int]:
    """Vertex/face counts of a written file, re-read from disk."""
    scene = read_scene(path)
    issues = validate_mesh(scene.mesh)
    if issues:
        raise RuntimeError(f"{path} failed validation: {issues[0].message}")
    return scene.mesh.n_vertices, scene.mesh.n_faces


def _print_report(name: str, params: SimplifyParams, report: SimplifyReport, n_instances: int, files: dict) -> None:
    print(f"model {name}  mode {params.mode.value}  reduce {params.reduce_percent:g}%  instances {n_instances}")
    print(f"  vertices  {report.initial_vertices} -> {report.final_vertices}")
    print(f"  faces     {report.initial_faces} -> {report.final_faces}")
    print(f"  texcoords {report.initial_texcoords} -> {report.final_texcoords}")
    print(f"  normals   {report.initial_normals} -> {report.final_normals}")
    print(f"  collapses {report.collapses_performed}  stop {report.stop_reason.value}  simplify {report.elapsed_ms:.1f} ms")
    for path, size in files.items():
        print(f"  wrote {path} ({size} bytes)")


def run_simplify(args) -> tuple[int, Optional[RunRecord]]:
    params = _params(args)
    _check_writable([args.out, args.expanded], args.force)
    scene = _load(args.input)
    args.out.parent.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    out_scene, report = simplify(scene, params)
    files = {args.out: save_scene(out_scene, args.out, OutputKind.INSTANCED)}
    if args.expanded is not None:
        args.expanded.parent.mkdir(parents=True, exist_ok=True)
        files[args.expanded] = save_scene(out_scene, args.expanded, OutputKind.EXPANDED_INDEXED)
    elapsed = (time.perf_counter() - start) * 1000.0

    copy_material_lib(scene, args.input.parent, args.out.parent)
    nv, nf = _verified_counts(args.out)
    record = RunRecord(
        args.input.stem, MODE_LABEL[params.mode], params.reduce_percent, len(scene.instances),
        elapsed, sum(files.values()), nv, nf,
    )
    if not args.quiet:
        _print_report(args.input.stem, params, report, len(scene.instances), files)
    if args.report is not None:
        append_report(args.report, [record])
    return 0, record


@dataclass(frozen=True)
class Comparison:
    instanced: RunRecord
    baseline: RunRecord
    instanced_with_expanded_bytes: int

    @property
    def time_ratio(self) -> float:
        return self.baseline.time_ms / self.instanced.time_ms if self.instanced.time_ms else float("inf")

    @property
    def size_ratio(self) -> float:
        return self.baseline.bytes / self.instanced.bytes

    def table(self) -> str:
        rows = [
            ("condition", "time_ms", "bytes", "bytes+expanded", "vertices", "faces"),
            (self.instanced.mode, f"{self.instanced.time_ms:.1f}", str(self.instanced.bytes),
             str(self.instanced_with_expanded_bytes), str(self.instanced.vertices), str(self.instanced.faces)),
            (self.baseline.mode, f"{self.baseline.time_ms:.1f}", str(self.baseline.bytes),
             str(self.baseline.bytes), str(self.baseline.vertices), str(self.baseline.faces)),
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
        lines.append(f"baseline/instanced: time x{self.time_ratio:.2f}  size x{self.size_ratio:.2f}")
        return "\n".join(lines)


def compare_scene(scene: Scene, params: SimplifyParams, out_dir: Path, name: str = "scene") -> Comparison:
    """Run the instanced condition and the expanded baseline on the same input."""
    out_dir.mkdir(parents=True, exist_ok=True)
    inst_path = out_dir / f"{name}_instanced.obj"
    view_path = out_dir / f"{name}_instanced_expanded.obj"
    base_path = out_dir / f"{name}_baseline.obj"

    start = time.perf_counter()
    simplified, _ = simplify(scene, params)
    inst_bytes = save_scene(simplified, inst_path, OutputKind.INSTANCED)
    inst_ms = (time.perf_counter() - start) * 1000.0
    view_bytes = save_scene(simplified, view_path, OutputKind.EXPANDED_INDEXED)

    start = time.perf_counter()
    flat = Scene(expand_to_mesh(scene), material_lib=scene.material_lib,
                 object_name=scene.object_name, material_name=scene.material_name)
    flat_simplified, _ = simplify(flat, params)
    base_bytes = save_scene(flat_simplified, base_path, OutputKind.EXPANDED_INDEXED)
    base_ms = (time.perf_counter() - start) * 1000.0

    n = len(scene.instances)
    iv, if_ = _verified_counts(inst_path)
    bv, bf = _verified_counts(base_path)
    return Comparison(
        RunRecord(name, MODE_LABEL[params.mode], params.reduce_percent, n, inst_ms, inst_bytes, iv, if_),
        RunRecord(name, "ExpandedBaseline", params.reduce_percent, n, base_ms, base_bytes, bv, bf),
        inst_bytes + view_bytes,
    )


def run_compare(args) -> tuple[int, Comparison]:
    params = _params(args)
    scene = _load(args.input)
    name = args.input.stem
    out_dir = args.out_dir
    targets = [out_dir / f"{name}_{s}.obj" for s in ("instanced", "instanced_expanded", "baseline")]
    _check_writable(targets, args.force)
    result = compare_scene(scene, params, out_dir, name)
    copy_material_lib(scene, args.input.parent, out_dir)
    if not args.quiet:
        print(result.table())
        print(emit_report([result.instanced, result.baseline]), end="")
    if args.report is not None:
        append_report(args.report, [result.instanced, result.baseline])
    return 0, result


def run_generate(args) -> int:
    _check_writable([args.out], args.force)
    mesh = make_bunny_class(args.seed) if args.bunny_class else make_blob(args.vertices, seed=args.seed)
    scene = make_instanced_scene(mesh, args.instances, seed=args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_scene(scene, args.out)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if getattr(args, "quiet", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "simplify":
            return run_simplify(args)[0]
        if args.command == "compare":
            return run_compare(args)[0]
        return run_generate(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
