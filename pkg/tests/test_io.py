import json

import numpy as np
import pytest

from uniattr.io import dumps_json, fmt_float, read_pgm, render_line_plot, write_csv, write_json, write_pgm


def test_fmt_float():
    assert fmt_float(1.0) == "1.0"
    assert fmt_float(0.1) == "0.10000000000000001"
    assert float(fmt_float(1 / 3)) == 1 / 3
    with pytest.raises(ValueError):
        fmt_float(float("nan"))


def test_json_is_valid_and_round_trips_floats():
    obj = {"b": [1.5, np.float64(2.25)], "a": {"n": np.int64(3), "flag": np.bool_(True), "arr": np.eye(2)}}
    text = dumps_json(obj)
    back = json.loads(text)
    assert list(back) == ["b", "a"]
    assert back["a"]["arr"] == [[1.0, 0.0], [0.0, 1.0]]
    assert back["a"]["flag"] is True
    with pytest.raises(TypeError):
        dumps_json({"x": object()})


def test_writers_are_byte_deterministic(tmp_path):
    rows = [[0.1, "a", 3], [1e-20, "b", 4]]
    a = write_csv(tmp_path / "a.csv", ["x", "s", "n"], rows).read_bytes()
    b = write_csv(tmp_path / "b.csv", ["x", "s", "n"], rows).read_bytes()
    assert a == b and a.startswith(b"x,s,n\n0.10000000000000001,a,3\n")
    assert write_json(tmp_path / "a.json", {"v": 0.1}).read_bytes() == write_json(tmp_path / "b.json", {"v": 0.1}).read_bytes()


def test_pgm_round_trip(tmp_path):
    img = np.linspace(0, 1, 12).reshape(3, 4)
    pix = read_pgm(write_pgm(tmp_path / "i.pgm", img))
    assert pix.shape == (3, 4) and pix[0, 0] == 0 and pix[-1, -1] == 255
    signed = read_pgm(write_pgm(tmp_path / "s.pgm", np.array([[-2.0, 0.0, 2.0]]), signed=True))
    np.testing.assert_array_equal(signed, [[0, 128, 255]])
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "bad.pgm", np.zeros((2, 2, 2)))


def test_svg_single_series(tmp_path):
    text = render_line_plot({"s": ([0, 1], [0, 1])}, tmp_path / "p.svg").read_text()
    assert text.count("<polyline") == 1
    points = text.split('points="')[1].split('"')[0].split()
    assert len(points) == 2
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")


def test_svg_deterministic_and_legend(tmp_path):
    series = {"uni": ([0, 0.5, 1], [0.1, 0.5, 0.9]), "ig-black": ([0, 0.5, 1], [0.2, 0.1, 0.9])}
    a = render_line_plot(series, tmp_path / "a.svg", title="t").read_bytes()
    b = render_line_plot(series, tmp_path / "b.svg", title="t").read_bytes()
    assert a == b
    assert a.count(b"<polyline") == 2 and b"ig-black" in a
    with pytest.raises(ValueError):
        render_line_plot({}, tmp_path / "c.svg")


def test_svg_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        render_line_plot({"s": ([0, 1], [0, 1])}, blocker / "p.svg")
