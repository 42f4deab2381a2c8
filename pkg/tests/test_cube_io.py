"""Data model and file format tests."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cos2a.cube import (
    BandSpec,
    HyperCube,
    MultiResProduct,
    read_cube,
    read_matrix_csv,
    read_product,
    write_cube,
    write_matrix_csv,
    write_product,
)
from cos2a.errors import FormatError, InputError
from cos2a.scene import SceneSpec, generate_scene


def test_round_trip_small_cube(tmp_path):
    values = np.full((3, 2, 2), 0.5)
    cube = HyperCube(values, [400.0, 500.0, 600.0])
    path = tmp_path / "c.cube"
    write_cube(cube, path)
    back = read_cube(path)
    assert np.array_equal(back.values, cube.values)
    assert np.array_equal(back.wavelengths_nm, cube.wavelengths_nm)


def test_header_payload_size_mismatch(tmp_path):
    cube = HyperCube(np.zeros((3, 2, 2)), [1.0, 2.0, 3.0])
    path = tmp_path / "c.cube"
    write_cube(cube, path)
    raw = path.read_bytes()
    header, payload = raw.split(b"\n", 1)
    doctored = json.loads(header)
    doctored["bands"] = 4
    doctored["wavelengths_nm"] = [1.0, 2.0, 3.0, 4.0]
    path.write_bytes(json.dumps(doctored).encode() + b"\n" + payload)
    with pytest.raises(FormatError, match="payload"):
        read_cube(path)


def test_synthetic_scene_cube_invariants(tmp_path):
    cube, _ = generate_scene(SceneSpec(height=64, width=64, bands=172, n_endmembers=5, seed=3))
    path = tmp_path / "scene.cube"
    write_cube(cube, path)
    back = read_cube(path)
    assert back.bands == 172
    assert np.all(np.diff(back.wavelengths_nm) > 0)
    assert np.all(np.isfinite(back.values))
    # second write is byte-identical (quantization is stable)
    path2 = tmp_path / "scene2.cube"
    write_cube(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_single_value_cube_payload_is_four_bytes(tmp_path):
    path = tmp_path / "one.cube"
    write_cube(HyperCube(np.zeros((1, 1, 1)), [500.0]), path)
    header, payload = path.read_bytes().split(b"\n", 1)
    assert json.loads(header)["magic"] == "cos2a-cube"
    assert len(payload) == 4


def test_nan_cube_rejected():
    values = np.zeros((1, 2, 2))
    values[0, 0, 0] = np.nan
    with pytest.raises(InputError, match="finite"):
        HyperCube(values, [500.0])


def test_non_finite_payload_rejected(tmp_path):
    cube = HyperCube(np.ones((1, 2, 2)), [500.0])
    path = tmp_path / "c.cube"
    write_cube(cube, path)
    raw = bytearray(path.read_bytes())
    header, _ = bytes(raw).split(b"\n", 1)
    inf = np.array([np.inf], dtype="<f4").tobytes()
    path.write_bytes(header + b"\n" + inf * 4)
    with pytest.raises(FormatError, match="non-finite"):
        read_cube(path)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        read_cube("/nonexistent/path.cube")


def test_malformed_header(tmp_path):
    path = tmp_path / "bad.cube"
    path.write_bytes(b"not json\n" + b"\x00" * 4)
    with pytest.raises(FormatError, match="malformed"):
        read_cube(path)


def test_wavelengths_must_increase():
    with pytest.raises(InputError, match="increasing"):
        HyperCube(np.zeros((2, 1, 1)), [500.0, 400.0])


def test_round_trip_fuzz(tmp_path):
    # 1000 random cubes, float32-representable values, exact round trips.
    rng = np.random.default_rng(2024)
    path = tmp_path / "fuzz.cube"
    for i in range(1000):
        bands = int(rng.integers(1, 5))
        h = int(rng.integers(1, 5))
        w = int(rng.integers(1, 5))
        values = rng.uniform(0, 10, size=(bands, h, w)).astype(np.float32).astype(np.float64)
        wavelengths = np.sort(rng.uniform(400, 2500, size=bands))
        if bands > 1 and np.any(np.diff(wavelengths) == 0):
            continue
        cube = HyperCube(values, wavelengths)
        write_cube(cube, path)
        back = read_cube(path)
        assert np.array_equal(back.values, cube.values), f"cube {i} did not round trip"


def test_band_sequential_layout(tmp_path):
    # element (b, y, x) sits at flat payload index b*H*W + y*W + x
    h, w, m = 3, 4, 2
    values = np.empty((m, h, w))
    for b in range(m):
        for y in range(h):
            for x in range(w):
                values[b, y, x] = b * 100 + y * 10 + x
    path = tmp_path / "layout.cube"
    write_cube(HyperCube(values, [500.0, 600.0]), path)
    _, payload = path.read_bytes().split(b"\n", 1)
    flat = np.frombuffer(payload, dtype="<f4")
    for b in range(m):
        for y in range(h):
            for x in range(w):
                assert flat[b * h * w + y * w + x] == values[b, y, x]


def test_matrix_csv_identity(tmp_path):
    path = tmp_path / "m.csv"
    write_matrix_csv(np.eye(2), path)
    assert path.read_text() == "1,0\n0,1\n"


def test_matrix_csv_ragged(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("1,2\n3\n")
    with pytest.raises(FormatError, match="ragged"):
        read_matrix_csv(path)


def test_matrix_csv_non_numeric(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,x\n")
    with pytest.raises(FormatError, match="non-numeric"):
        read_matrix_csv(path)


def test_matrix_csv_random_response_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    matrix = rng.uniform(0, 1, size=(4, 172))
    path = tmp_path / "resp.csv"
    write_matrix_csv(matrix, path)
    back = read_matrix_csv(path)
    assert np.max(np.abs(back - matrix)) == 0.0


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.lists(
            st.floats(allow_nan=False, allow_infinity=False, width=64, min_value=-1e12, max_value=1e12),
            min_size=3,
            max_size=3,
        ),
        min_size=1,
        max_size=6,
    )
)
def test_matrix_csv_round_trip_property(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    matrix = np.asarray(rows, dtype=np.float64)
    write_matrix_csv(matrix, path)
    assert np.array_equal(read_matrix_csv(path), matrix)


def _product(h=4, w=4):
    specs = (
        BandSpec("F1", 500.0, 50.0, 10),
        BandSpec("C1", 800.0, 50.0, 20),
    )
    values = np.zeros((2, h, w))
    values[0] = np.arange(h * w).reshape(h, w)
    coarse = np.arange((h // 2) * (w // 2)).reshape(h // 2, w // 2)
    values[1] = np.repeat(np.repeat(coarse, 2, axis=0), 2, axis=1)
    return MultiResProduct(values, specs)


def test_product_round_trip(tmp_path):
    product = _product()
    path = tmp_path / "p.cube"
    write_product(product, path)
    back = read_product(path)
    assert np.array_equal(back.values, product.values)
    assert back.band_specs == product.band_specs
    back.validate_block_structure()


def test_product_missing_sidecar(tmp_path):
    product = _product()
    path = tmp_path / "p.cube"
    write_product(product, path)
    (tmp_path / "p.cube.bands.json").unlink()
    with pytest.raises(FormatError, match="sidecar"):
        read_product(path)


def test_product_block_violation_detected():
    product = _product()
    values = product.values.copy()
    values[1, 0, 0] += 1.0
    broken = MultiResProduct(values, product.band_specs)
    with pytest.raises(InputError, match="blocks"):
        broken.validate_block_structure()


def test_high_res_view_selects_fine_bands():
    product = _product()
    view = product.high_res_view()
    assert view.shape == (1, 16)
    assert np.array_equal(view[0], product.values[0].ravel())
