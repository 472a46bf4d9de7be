import re
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cubeclust.cli import NOISE_COLOUR, cluster_colour, emit_svg, ingest, main, write_points
from cubeclust.errors import ParseError
from cubeclust.labels import Labeling
from cubeclust.synthetic import blobs, uniform


def write(tmp_path, text, name="pts.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_ingest_examples(tmp_path):
    pts = ingest(write(tmp_path, "0,0\n1,1\n"))
    assert pts.tolist() == [[0.0, 0.0], [1.0, 1.0]]
    assert ingest(write(tmp_path, "x,y\n2,3\n")).tolist() == [[2.0, 3.0]]


def test_empty_file_warns(tmp_path, capsys):
    pts = ingest(write(tmp_path, ""))
    assert pts.shape == (0, 2)
    assert "warning" in capsys.readouterr().err


@pytest.mark.parametrize("text, row", [
    ("0,0\n1,1\n2\n", 3),
    ("0,0\n1,a\n", 2),
    ("0,0\n1,inf\n", 2),
    ("1\n2\n", 1),
])
def test_parse_errors_name_the_row(tmp_path, text, row):
    with pytest.raises(ParseError) as err:
        ingest(write(tmp_path, text))
    assert f"row {row}" in str(err.value)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(allow_nan=False, allow_infinity=False), st.floats(allow_nan=False, allow_infinity=False)), min_size=1, max_size=30))
def test_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    pts = np.array(rows)
    write_points(pts, path)
    back = ingest(path)
    assert back.tobytes() == pts.tobytes() or np.array_equal(back, pts)  # -0.0 may print as -0
    assert np.array_equal(back, pts)


def test_exit_codes(tmp_path, capsys):
    good = write(tmp_path, "0,0\n0.1,0\n0,0.1\n5,5\n")
    assert main(["dbscan-star", str(good), "--eps", "0.5", "--k", "2"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines() == ["id,cluster", "0,0", "1,0", "2,0", "3,-1"]
    assert main(["dbscan-star", str(good), "--eps", "-1"]) == 1
    assert main(["dbscan-star", str(good)]) == 1
    assert main(["dbscan-star", str(good), "--eps", "1", "--k", "0"]) == 1
    assert main(["hdbscan-star", str(good), "--eps-schedule", "2,1"]) == 1
    bad = write(tmp_path, "0,0\n1\n", "bad.csv")
    assert main(["dbscan", str(bad), "--eps", "1"]) == 2
    assert "row 2" in capsys.readouterr().err
    assert main(["dbscan", str(tmp_path / "missing.csv"), "--eps", "1"]) == 2


def test_two_blob_labels_file(tmp_path):
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(size=(80, 2)) * 0.3, rng.normal(size=(80, 2)) * 0.3 + 10])
    src = tmp_path / "b.csv"
    write_points(pts, src)
    out = tmp_path / "labels.csv"
    rep = tmp_path / "report.csv"
    assert main(["dbscan", str(src), "--eps", "1.5", "--k", "4", "--labels", str(out), "--report", str(rep)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "id,cluster"
    assert {line.split(",")[1] for line in lines[1:]} == {"0", "1"}
    report = rep.read_text().splitlines()
    assert report[0] == "phase,metric,value"
    assert any(r.startswith("dbscan_star,distance_evaluations_local_scan,") for r in report)


def fills(svg):
    return re.findall(r'<circle [^>]*fill="(#[0-9a-f]{6})"', svg)


def test_svg_colours(tmp_path):
    pts = np.array([[0.0, 0], [1, 1], [5, 5], [6, 6], [20, 0]])
    lab = Labeling.from_raw(np.arange(5), [0, 0, 1, 1, -1])
    assert emit_svg(pts, lab, tmp_path / "a.svg")
    got = fills((tmp_path / "a.svg").read_text())
    assert len(got) == 5
    assert set(got) == {cluster_colour(0), cluster_colour(1), NOISE_COLOUR}
    assert len({cluster_colour(c) for c in range(10)}) == 10
    assert emit_svg(pts, Labeling.all_noise(np.arange(5)), tmp_path / "b.svg")
    assert set(fills((tmp_path / "b.svg").read_text())) == {NOISE_COLOUR}
    assert emit_svg(np.zeros((0, 2)), Labeling.all_noise([]), tmp_path / "c.svg")
    text = (tmp_path / "c.svg").read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>") and not fills(text)


def test_svg_needs_two_dimensions(tmp_path, capsys):
    pts = np.zeros((3, 3))
    assert not emit_svg(pts, Labeling.all_noise(np.arange(3)), tmp_path / "d.svg")
    assert not (tmp_path / "d.svg").exists()
    assert "notice" in capsys.readouterr().err


@pytest.mark.parametrize("seed", range(5))
def test_oracle_check_passes(tmp_path, seed, capsys):
    src = tmp_path / "u.csv"
    write_points(uniform(500, 2, seed=seed), src)
    code = main(["oracle-check", str(src), "--eps", "0.06", "--eps-schedule", "0.03,0.06", "--k", "5"])
    out = capsys.readouterr().out
    assert code == 0, out
    assert out.count("match") == 3 and "MISMATCH" not in out


def test_auto_schedule_matches_single_scale(tmp_path):
    src = tmp_path / "b.csv"
    write_points(blobs(600, 2, seed=3), src)
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["hdbscan-star", str(src), "--k", "5", "--eps-schedule", "auto", "--labels", str(a)]) == 0
    from cubeclust.shdbscan import suggest_schedule
    q50 = suggest_schedule(blobs(600, 2, seed=3), 5, steps=1)[0]
    assert main(["hdbscan-star", str(src), "--k", "5", "--eps-schedule", repr(q50), "--labels", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_labels_identical_across_workers(tmp_path):
    src = tmp_path / "t.csv"
    assert main(["generate", str(src), "--kind", "towns", "--n", "3000", "--seed", "1"]) == 0
    outs = []
    for workers in ("1", "4", "4"):
        dst = tmp_path / f"l{len(outs)}.csv"
        assert main(["hdbscan-star", str(src), "--k", "10", "--eps-schedule", "auto", "--workers", workers, "--labels", str(dst)]) == 0
        outs.append(dst.read_bytes())
        dst2 = tmp_path / f"d{len(outs)}.csv"
        assert main(["dbscan", str(src), "--eps", "900", "--k", "10", "--workers", workers, "--labels", str(dst2)]) == 0
        outs.append(dst2.read_bytes())
    assert outs[0] == outs[2] == outs[4]
    assert outs[1] == outs[3] == outs[5]


def test_generate_kinds(tmp_path):
    for kind in ("blobs", "uniform", "towns"):
        dst = tmp_path / f"{kind}.csv"
        assert main(["generate", str(dst), "--kind", kind, "--n", "50"]) == 0
        assert ingest(dst).shape == (50, 2)
    assert main(["generate", str(tmp_path / "x.csv"), "--kind", "towns", "--dim", "3"]) == 1


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "cubeclust.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "dbscan-star" in proc.stdout
