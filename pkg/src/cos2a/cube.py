"""Core data model and portable file I/O.

Three kinds of objects move between pipeline stages:

* :class:`HyperCube` -- a bands x height x width reflectance tensor with
  per-band wavelengths. Band-sequential layout: element ``(b, y, x)`` sits at
  flat index ``b*H*W + y*W + x``.
* :class:`MultiResProduct` -- a 12-band product on the finest grid, where
  coarse bands are stored block-replicated (x4 for 20-m bands, x36 for 60-m
  bands).
* Dense matrices -- plain 2-D float64 ``numpy`` arrays, persisted as CSV.

On-disk cube format: one UTF-8 JSON header line terminated by ``\\n`` with
fields ``{"magic": "cos2a-cube", "version": 1, "height": H, "width": W,
"bands": M, "dtype": "f32le", "interleave": "bsq", "wavelengths_nm": [...]}``,
followed by exactly ``4*M*H*W`` bytes of little-endian float32 payload.
A product is a cube plus a ``<path>.bands.json`` sidecar carrying the band
table. In memory values are float64; the payload quantizes to float32, so
file -> memory -> file round trips are always byte-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError

__all__ = [
    "BandSpec",
    "HyperCube",
    "MultiResProduct",
    "read_cube",
    "write_cube",
    "read_product",
    "write_product",
    "read_matrix_csv",
    "write_matrix_csv",
]

CUBE_MAGIC = "cos2a-cube"
CUBE_VERSION = 1

GSD_CLASSES = (10, 20, 60)
#: Spatial degradation factor applied to each ground-sample-distance class.
GSD_BLUR_FACTOR = {10: 1, 20: 2, 60: 6}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class HyperCube:
    """Immutable hyperspectral cube: ``values`` is (bands, height, width) float64."""

    values: np.ndarray
    wavelengths_nm: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise InputError("cube values must be a 3-D (bands, height, width) array")
        if values.size == 0:
            raise InputError("cube must contain at least one value")
        if not np.all(np.isfinite(values)):
            raise InputError("cube values must all be finite")
        wavelengths = np.asarray(self.wavelengths_nm, dtype=np.float64)
        if wavelengths.ndim != 1 or wavelengths.shape[0] != values.shape[0]:
            raise InputError("wavelengths_nm must be 1-D with one entry per band")
        if not np.all(np.isfinite(wavelengths)):
            raise InputError("wavelengths must be finite")
        if wavelengths.size > 1 and not np.all(np.diff(wavelengths) > 0):
            raise InputError("wavelengths must be strictly increasing")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "wavelengths_nm", _freeze(wavelengths))

    @property
    def bands(self) -> int:
        return int(self.values.shape[0])

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])

    def as_matrix(self) -> np.ndarray:
        """Return a (bands, height*width) copy; pixels run row-major."""

        return self.values.reshape(self.bands, -1).copy()

    @classmethod
    def from_matrix(
        cls, matrix: np.ndarray, height: int, width: int, wavelengths_nm: np.ndarray
    ) -> "HyperCube":
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != height * width:
            raise InputError(
                f"matrix of shape {matrix.shape} does not match a {height}x{width} grid"
            )
        return cls(matrix.reshape(matrix.shape[0], height, width), wavelengths_nm)


@dataclass(frozen=True)
class BandSpec:
    """One band of a multispectral sensor."""

    name: str
    center_nm: float
    bandwidth_nm: float
    gsd_class: int

    def __post_init__(self) -> None:
        if self.bandwidth_nm <= 0:
            raise InputError(f"band {self.name}: bandwidth must be positive")
        if self.gsd_class not in GSD_CLASSES:
            raise InputError(
                f"band {self.name}: gsd_class must be one of {GSD_CLASSES}"
            )

    @property
    def coverage(self) -> tuple[float, float]:
        half = 0.5 * self.bandwidth_nm
        return (self.center_nm - half, self.center_nm + half)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "center_nm": self.center_nm,
            "bandwidth_nm": self.bandwidth_nm,
            "gsd_class": self.gsd_class,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BandSpec":
        try:
            return cls(
                name=str(d["name"]),
                center_nm=float(d["center_nm"]),
                bandwidth_nm=float(d["bandwidth_nm"]),
                gsd_class=int(d["gsd_class"]),
            )
        except KeyError as exc:
            raise FormatError(f"band table entry missing field {exc}") from exc


@dataclass(frozen=True)
class MultiResProduct:
    """Multi-resolution multispectral product stored replicated to the fine grid.

    ``values`` is (n_bands, height, width) float64 on the 10-m grid; bands with
    ``gsd_class`` 20 or 60 are constant on aligned 2x2 / 6x6 blocks (edge
    blocks may be truncated when the grid does not divide evenly).
    """

    values: np.ndarray
    band_specs: tuple[BandSpec, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise InputError("product values must be a 3-D (bands, height, width) array")
        if not np.all(np.isfinite(values)):
            raise InputError("product values must all be finite")
        specs = tuple(self.band_specs)
        if len(specs) != values.shape[0]:
            raise InputError(
                f"{len(specs)} band specs do not match {values.shape[0]} value planes"
            )
        if not any(s.gsd_class == 10 for s in specs):
            raise InputError("product needs at least one gsd_class-10 band")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "band_specs", specs)

    @property
    def n_bands(self) -> int:
        return int(self.values.shape[0])

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])

    def as_matrix(self) -> np.ndarray:
        """All bands as a (n_bands, height*width) matrix."""

        return self.values.reshape(self.n_bands, -1).copy()

    def high_res_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.band_specs) if s.gsd_class == 10]

    def high_res_view(self) -> np.ndarray:
        """The gsd-10 bands as a (n_hi, height*width) matrix, in band order."""

        return self.values[self.high_res_indices()].reshape(-1, self.height * self.width).copy()

    def validate_block_structure(self) -> None:
        """Check that every coarse band is constant on its aligned blocks."""

        for spec, plane in zip(self.band_specs, self.values):
            r = GSD_BLUR_FACTOR[spec.gsd_class]
            if r == 1:
                continue
            rows = (np.arange(self.height) // r) * r
            cols = (np.arange(self.width) // r) * r
            anchor = plane[np.ix_(rows, cols)]
            if not np.array_equal(plane, anchor):
                raise InputError(
                    f"band {spec.name}: not constant on aligned {r}x{r} blocks"
                )


# ---------------------------------------------------------------------------
# Cube files
# ---------------------------------------------------------------------------


def write_cube(cube: HyperCube, path: str | Path) -> None:
    """Write ``cube`` in the cos2a cube format (JSON header + f32le payload)."""

    header = {
        "magic": CUBE_MAGIC,
        "version": CUBE_VERSION,
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "dtype": "f32le",
        "interleave": "bsq",
        "wavelengths_nm": [float(w) for w in cube.wavelengths_nm],
    }
    payload = np.ascontiguousarray(cube.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def read_cube(path: str | Path) -> HyperCube:
    """Read a cube written by :func:`write_cube`; inverse up to f32 precision."""

    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed cube header") from exc
    if not isinstance(header, dict) or header.get("magic") != CUBE_MAGIC:
        raise FormatError(f"{path}: not a {CUBE_MAGIC} file")
    if header.get("version") != CUBE_VERSION:
        raise FormatError(f"{path}: unsupported version {header.get('version')!r}")
    if header.get("dtype") != "f32le" or header.get("interleave") != "bsq":
        raise FormatError(f"{path}: unsupported dtype/interleave")
    try:
        bands = int(header["bands"])
        height = int(header["height"])
        width = int(header["width"])
        wavelengths = [float(w) for w in header["wavelengths_nm"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: incomplete cube header") from exc
    if min(bands, height, width) <= 0:
        raise FormatError(f"{path}: non-positive dimensions in header")
    expected = 4 * bands * height * width
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, header declares {expected}"
        )
    if len(wavelengths) != bands:
        raise FormatError(f"{path}: wavelength list does not match band count")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{path}: payload contains non-finite values")
    try:
        return HyperCube(values.reshape(bands, height, width), np.asarray(wavelengths))
    except InputError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".bands.json")


def write_product(product: MultiResProduct, path: str | Path) -> None:
    """Write a product as a cube (wavelengths = band centers) plus band sidecar."""

    centers = np.asarray([s.center_nm for s in product.band_specs], dtype=np.float64)
    cube = HyperCube(product.values, centers)
    write_cube(cube, path)
    sidecar = {"bands": [s.to_dict() for s in product.band_specs]}
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def read_product(path: str | Path) -> MultiResProduct:
    cube = read_cube(path)
    sidecar_path = _sidecar_path(path)
    if not sidecar_path.exists():
        raise FormatError(f"missing band table sidecar {sidecar_path}")
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        try:
            sidecar = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{sidecar_path}: malformed band table") from exc
    entries = sidecar.get("bands")
    if not isinstance(entries, list) or not entries:
        raise FormatError(f"{sidecar_path}: band table must be a non-empty list")
    specs = tuple(BandSpec.from_dict(e) for e in entries)
    return MultiResProduct(cube.values, specs)


# ---------------------------------------------------------------------------
# CSV matrices
# ---------------------------------------------------------------------------


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    """Write a 2-D real matrix as CSV with 17 significant digits (lossless)."""

    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise InputError("matrix must be 2-D")
    if not np.all(np.isfinite(matrix)):
        raise InputError("matrix values must be finite")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in matrix:
            fh.write(",".join(format(v, ".17g") for v in row))
            fh.write("\n")


def read_matrix_csv(path: str | Path) -> np.ndarray:
    """Read a rectangular CSV of decimal reals as a 2-D float64 array."""

    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric cell") from exc
            if len(rows[-1]) != len(rows[0]):
                raise FormatError(
                    f"{path}:{lineno}: ragged row ({len(rows[-1])} cells, "
                    f"expected {len(rows[0])})"
                )
    if not rows:
        raise FormatError(f"{path}: empty matrix")
    matrix = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise FormatError(f"{path}: non-finite matrix values")
    return matrix
