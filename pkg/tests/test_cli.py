import csv
import io

import pytest

from instmesh.cli import RunRecord, compare_scene, emit_report, main, parse_report
from instmesh.mesh import Scene
from instmesh.objio import read_scene, save_scene
from instmesh.simplify import SimplifyParams
from instmesh.synthetic import make_blob, make_instanced_scene


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "blob.obj"
    scene = make_instanced_scene(make_blob(200, seed=1), 3, seed=2)
    save_scene(Scene(scene.mesh, scene.instances, material_lib="blob.mtl"), path)
    (tmp_path / "blob.mtl").write_text("newmtl skin\n")
    return path


def test_simplify_writes_everything(scene_file, tmp_path, capsys):
    out, exp, rep = tmp_path / "o" / "s.obj", tmp_path / "o" / "idx.obj", tmp_path / "rows.csv"
    code = main(["simplify", "--input", str(scene_file), "--reduce", "10", "--out", str(out),
                 "--expanded", str(exp), "--report", str(rep)])
    assert code == 0
    assert "faces" in capsys.readouterr().out
    written = read_scene(out)
    assert len(written.instances) == 3
    assert read_scene(exp).mesh.n_faces == 3 * written.mesh.n_faces
    assert (tmp_path / "o" / "blob.mtl").exists()
    (row,) = parse_report(rep.read_text())
    assert (row.vertices, row.faces) == (written.mesh.n_vertices, written.mesh.n_faces)
    assert row.bytes == out.stat().st_size + exp.stat().st_size
    assert row.mode == "ITS" and row.instances == 3


def test_reduce_zero_keeps_counts(scene_file, tmp_path):
    out = tmp_path / "s.obj"
    assert main(["simplify", "--input", str(scene_file), "--reduce", "0", "--out", str(out), "--quiet"]) == 0
    src, dst = read_scene(scene_file).mesh, read_scene(out).mesh
    assert (dst.n_vertices, dst.n_faces) == (src.n_vertices, src.n_faces)


@pytest.mark.parametrize("value", ["101", "-1", "ten"])
def test_bad_reduce_exits_2(scene_file, tmp_path, capsys, value):
    with pytest.raises(SystemExit) as info:
        main(["simplify", "--input", str(scene_file), "--reduce", value, "--out", str(tmp_path / "s.obj")])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_refuses_to_overwrite(scene_file, tmp_path):
    out = tmp_path / "s.obj"
    out.write_text("keep me")
    args = ["simplify", "--input", str(scene_file), "--reduce", "5", "--out", str(out), "--quiet"]
    assert main(args) == 2
    assert out.read_text() == "keep me"
    assert main(args + ["--force"]) == 0


def test_parse_error_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    assert main(["simplify", "--input", str(bad), "--reduce", "5", "--out", str(tmp_path / "s.obj")]) == 1
    assert "line 5" in capsys.readouterr().err


def test_missing_input_exits_1(tmp_path):
    assert main(["simplify", "--input", str(tmp_path / "nope.obj"), "--reduce", "5",
                 "--out", str(tmp_path / "s.obj")]) == 1


def test_compare_cli(scene_file, tmp_path, capsys):
    rep = tmp_path / "rows.csv"
    code = main(["compare", "--input", str(scene_file), "--reduce", "20", "--out-dir", str(tmp_path / "cmp"),
                 "--report", str(rep)])
    assert code == 0
    text = capsys.readouterr().out
    assert "ExpandedBaseline" in text and "bytes+expanded" in text
    rows = parse_report(rep.read_text())
    assert [r.mode for r in rows] == ["ITS", "ExpandedBaseline"]
    assert rows[0].bytes < rows[1].bytes


def test_compare_single_identity_instance_agrees(tmp_path):
    scene = Scene(make_blob(150, seed=4))
    result = compare_scene(scene, SimplifyParams(reduce_percent=30), tmp_path)
    a, b = result.instanced, result.baseline
    assert (a.vertices, a.faces) == (b.vertices, b.faces)


def test_generate(tmp_path):
    out = tmp_path / "g.obj"
    assert main(["generate", "--out", str(out), "--vertices", "100", "--instances", "4"]) == 0
    scene = read_scene(out)
    assert scene.mesh.n_vertices == 100 and len(scene.instances) == 4


REC = RunRecord("bunny", "ITS", 10.0, 13, 1234.5, 1234567, 2247, 4456)


def test_report_single_record():
    lines = emit_report([REC]).splitlines()
    assert lines[0] == "model,mode,reduce,instances,time_ms,bytes,vertices,faces"
    assert len(lines) == 2
    assert "1,234" not in lines[1]
    assert lines[1].split(",")[5] == "1234567"


def test_report_round_trip():
    recs = [REC, RunRecord("blob", "ExpandedBaseline", 50.0, 8, 0.125, 99, 10, 16)]
    assert parse_report(emit_report(recs)) == recs
    assert len(list(csv.reader(io.StringIO(emit_report(recs))))) == 3


def test_report_needs_records():
    with pytest.raises(ValueError):
        emit_report([])


def test_report_appends(scene_file, tmp_path):
    rep = tmp_path / "rows.csv"
    for i in range(2):
        main(["simplify", "--input", str(scene_file), "--reduce", "5", "--out", str(tmp_path / f"s{i}.obj"),
              "--report", str(rep), "--quiet"])
    lines = rep.read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("model,")
