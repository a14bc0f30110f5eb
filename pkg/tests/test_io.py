import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ringsquid import io
from ringsquid.config import make_grid
from ringsquid.errors import ParameterError
from ringsquid.expansion import WaveField2D
from ringsquid.imaging import DensityImage

finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(re=hnp.arrays(float, (64, 64), elements=finite), im=hnp.arrays(float, (64, 64), elements=finite),
       t=st.floats(0, 10))
@settings(max_examples=10, deadline=None)
def test_field_round_trip_is_exact(tmp_path_factory, re, im, t):
    path = tmp_path_factory.mktemp("f") / "psi.bin"
    field = WaveField2D(make_grid(3.0, 64), re + 1j * im, t)
    io.write_field(field, path, length_unit_m=2.24e-5, time_unit_s=0.18, extra={"kappa": 0.4})
    back, header = io.read_field(path)
    assert np.array_equal(back.amplitude, field.amplitude)
    assert back.time == t and back.grid == field.grid
    assert header["units"] == {"length_m": 2.24e-5, "time_s": 0.18}
    assert header["extra"]["kappa"] == 0.4


def test_field_reader_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not json\n")
    with pytest.raises(ParameterError, match="bad field header"):
        io.read_field(bad)
    bad.write_bytes(b'{"format": "other"}\n')
    with pytest.raises(ParameterError, match="not a"):
        io.read_field(bad)
    good = tmp_path / "good.bin"
    io.write_field(WaveField2D(make_grid(2.0, 64), np.ones((64, 64)) + 0j, 0.0), good)
    good.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(ParameterError, match="expected"):
        io.read_field(good)


def test_pgm16_quantisation(tmp_path):
    rng = np.random.default_rng(3)
    v = rng.random((32, 48)) * 7.0
    scale = io.write_pgm16(v, tmp_path / "a.pgm")
    back = io.read_pgm16(tmp_path / "a.pgm", scale)
    assert back.shape == v.shape
    assert np.max(np.abs(back - v)) <= 0.5 * scale + 1e-12
    # row 0 of the array is the bottom row of the picture
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n48 32\n65535\n")


def test_pgm8_with_comment(tmp_path):
    path = tmp_path / "b.pgm"
    data = np.arange(12, dtype=np.uint8).reshape(3, 4)
    path.write_bytes(b"P5\n# camera frame\n4 3\n255\n" + data.tobytes())
    back = io.read_pgm16(path)
    assert np.array_equal(back, data[::-1].astype(float))


@pytest.mark.parametrize("content, fragment", [
    (b"P2\n2 2\n255\n0 0 0 0", "binary"),
    (b"P5\n2 2\n255\n\x00", "expected 4 pixels"),
    (b"P5\n2", "truncated"),
])
def test_pgm_errors(tmp_path, content, fragment):
    path = tmp_path / "x.pgm"
    path.write_bytes(content)
    with pytest.raises(ParameterError, match=fragment):
        io.read_pgm16(path)


def test_bare_pgm_has_unit_pitch(tmp_path):
    path = tmp_path / "c.pgm"
    io.write_pgm16(np.ones((16, 32)), path)
    img = io.load_image(path, length_unit_m=1e-6)
    assert img.grid.nx == 32 and img.grid.ny == 16
    assert img.grid.pixel_pitch == pytest.approx(1.0)
    assert img.length_unit_m == 1e-6


def test_save_and_load_image(tmp_path):
    grid = make_grid(4.0, 64)
    R, _ = grid.polar()
    img = DensityImage(grid, np.exp(-R ** 2), time=0.1, psf_radius=0.2, length_unit_m=2.24e-5,
                       time_unit_s=0.18)
    paths = io.save_image(img, tmp_path / "img", params_hash="abc", kappa=0.4)
    assert [p.name for p in paths] == ["img.pgm", "img.pgm.json", "img.png", "img.png.json"]
    meta = json.loads(paths[1].read_text())
    assert meta["kappa"] == 0.4 and meta["params_hash"] == "abc"
    back = io.load_image(paths[0])
    assert back.grid == grid
    assert back.time == 0.1 and back.psf_radius == 0.2
    assert back.length_unit_m == 2.24e-5 and back.time_unit_s == 0.18
    assert np.max(np.abs(back.values - img.values)) < 1e-4


def test_sha256_is_stable(tmp_path):
    path = tmp_path / "f.txt"
    path.write_text("ring")
    assert io.sha256(path) == io.sha256(path)
    assert len(io.sha256(path)) == 64
