"""Sensor simulation: spectral responses, spatial degradation, calibration.

A :class:`SensorProfile` lists broad multispectral bands by center wavelength,
bandwidth, and ground-sample-distance class. :func:`build_response` turns a
profile into a row-stochastic band-averaging matrix on a hyperspectral
wavelength grid, and :func:`simulate_product` degrades a hyperspectral cube
into the matching multi-resolution product (gsd-20 bands uniformly blurred by
a factor of 2, gsd-60 bands by 6, all stored replicated back to the fine
grid). Non-divisible grids use truncated edge blocks: the mean is taken over
however many cells the block actually has, and replication mirrors that, so
constants stay constant and interior blocks keep the exact
average-then-replicate round trip.

The bundled ``sentinel2a`` profile carries the public instrument constants:
10-m bands {B2, B3, B4, B8}, 20-m {B5, B6, B7, B8A, B11, B12}, 60-m {B1, B9}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .cube import GSD_BLUR_FACTOR, BandSpec, HyperCube, MultiResProduct
from .errors import FormatError, InputError

__all__ = [
    "SensorProfile",
    "load_profile",
    "default_profile",
    "build_response",
    "high_res_submatrix",
    "block_average",
    "block_replicate",
    "simulate_product",
    "calibrate_gain",
    "nearest_band_subvector",
]


@dataclass(frozen=True)
class SensorProfile:
    """Ordered band table plus a free-text provenance string."""

    bands: tuple[BandSpec, ...]
    source: str = ""

    def __post_init__(self) -> None:
        if not self.bands:
            raise InputError("profile must define at least one band")
        object.__setattr__(self, "bands", tuple(self.bands))

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    def high_res_indices(self) -> list[int]:
        return [i for i, b in enumerate(self.bands) if b.gsd_class == 10]


def load_profile(path: str | Path) -> SensorProfile:
    """Load a sensor profile from its JSON description."""

    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: malformed profile JSON") from exc
    entries = data.get("bands")
    if not isinstance(entries, list) or not entries:
        raise FormatError(f"{path}: profile must list at least one band")
    bands = tuple(BandSpec.from_dict(e) for e in entries)
    return SensorProfile(bands=bands, source=str(data.get("source", data.get("name", ""))))


def default_profile() -> SensorProfile:
    """The bundled 12-band Sentinel-2A profile (4/6/2 bands at 10/20/60 m)."""

    ref = resources.files("cos2a").joinpath("data/sentinel2a.json")
    with resources.as_file(ref) as path:
        return load_profile(path)


def build_response(profile: SensorProfile, wavelengths_nm: np.ndarray) -> np.ndarray:
    """Band-averaging spectral response matrix, one row per profile band.

    Row ``b`` holds ``1/k_b`` on the ``k_b`` hyperspectral bands whose
    wavelength falls inside band ``b``'s coverage and 0 elsewhere, so every
    row is nonnegative and sums to 1.
    """

    wavelengths = np.asarray(wavelengths_nm, dtype=np.float64)
    if wavelengths.ndim != 1 or wavelengths.size == 0:
        raise InputError("wavelengths_nm must be a non-empty 1-D array")
    rows = np.zeros((profile.n_bands, wavelengths.size))
    for i, band in enumerate(profile.bands):
        lo, hi = band.coverage
        inside = (wavelengths >= lo) & (wavelengths <= hi)
        count = int(inside.sum())
        if count == 0:
            raise InputError(
                f"band {band.name}: coverage [{lo:g}, {hi:g}] nm contains no "
                "hyperspectral wavelength"
            )
        rows[i, inside] = 1.0 / count
    return rows


def high_res_submatrix(response: np.ndarray, profile: SensorProfile) -> np.ndarray:
    """Rows of ``response`` belonging to gsd-10 bands, in profile order."""

    response = np.asarray(response, dtype=np.float64)
    if response.shape[0] != profile.n_bands:
        raise InputError(
            f"response has {response.shape[0]} rows, profile {profile.n_bands} bands"
        )
    indices = profile.high_res_indices()
    if not indices:
        raise InputError("profile has no gsd_class-10 band")
    return response[indices].copy()


def block_average(image: np.ndarray, factor: int) -> np.ndarray:
    """Mean over aligned ``factor x factor`` blocks; edge blocks truncated."""

    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise InputError("image must be 2-D")
    factor = int(factor)
    if factor < 1:
        raise InputError("factor must be >= 1")
    if factor == 1:
        return image.copy()
    h, w = image.shape
    row_starts = np.arange(0, h, factor)
    col_starts = np.arange(0, w, factor)
    sums = np.add.reduceat(np.add.reduceat(image, row_starts, axis=0), col_starts, axis=1)
    row_sizes = np.minimum(row_starts + factor, h) - row_starts
    col_sizes = np.minimum(col_starts + factor, w) - col_starts
    return sums / np.outer(row_sizes, col_sizes)


def block_replicate(image: np.ndarray, factor: int, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-block upsampling to an ``out_h x out_w`` grid."""

    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise InputError("image must be 2-D")
    factor = int(factor)
    if factor < 1:
        raise InputError("factor must be >= 1")
    h, w = image.shape
    for n_in, n_out, axis in ((h, out_h, "height"), (w, out_w, "width")):
        if not (n_in - 1) * factor < n_out <= n_in * factor:
            raise InputError(
                f"target {axis} {n_out} inconsistent with {n_in} blocks of size {factor}"
            )
    return np.repeat(np.repeat(image, factor, axis=0), factor, axis=1)[:out_h, :out_w]


def simulate_product(hsi: HyperCube, profile: SensorProfile) -> MultiResProduct:
    """Degrade a hyperspectral cube into a multi-resolution product.

    Applies the band-averaging response spectrally, then per band the spatial
    degradation of its gsd class: gsd-10 bands pass through, gsd-20 bands are
    2x2 block-averaged, gsd-60 bands 6x6 block-averaged, and both are
    replicated back to the fine grid.
    """

    response = build_response(profile, hsi.wavelengths_nm)
    spectra = response @ hsi.as_matrix()
    planes = spectra.reshape(profile.n_bands, hsi.height, hsi.width)
    out = np.empty_like(planes)
    for i, band in enumerate(profile.bands):
        r = GSD_BLUR_FACTOR[band.gsd_class]
        if r == 1:
            out[i] = planes[i]
        else:
            coarse = block_average(planes[i], r)
            out[i] = block_replicate(coarse, r, hsi.height, hsi.width)
    return MultiResProduct(values=out, band_specs=profile.bands)


def calibrate_gain(a_sub: np.ndarray, s: np.ndarray) -> float:
    """Best nonnegative gain fitting ``gain * a_sub`` to ``s`` in least squares.

    Closed-form minimizer of ``0.5 * ||gain*a_sub - s||^2`` over ``gain >= 0``:
    the unconstrained ratio ``<a_sub, s> / <a_sub, a_sub>`` clamped at zero.
    """

    a_sub = np.asarray(a_sub, dtype=np.float64).ravel()
    s = np.asarray(s, dtype=np.float64).ravel()
    if a_sub.shape != s.shape:
        raise InputError("a_sub and s must have the same length")
    denom = float(a_sub @ a_sub)
    if denom == 0.0:
        raise InputError("a_sub must not be all zero")
    return max(0.0, float(a_sub @ s) / denom)


def nearest_band_subvector(
    a: np.ndarray, wavelengths_nm: np.ndarray, profile: SensorProfile
) -> np.ndarray:
    """Per profile band, the entry of ``a`` at the closest hyperspectral band.

    Ties are broken toward the lower hyperspectral index.
    """

    a = np.asarray(a, dtype=np.float64).ravel()
    wavelengths = np.asarray(wavelengths_nm, dtype=np.float64).ravel()
    if wavelengths.size == 0:
        raise InputError("wavelengths_nm must be non-empty")
    if a.shape != wavelengths.shape:
        raise InputError("a and wavelengths_nm must have the same length")
    centers = np.asarray([b.center_nm for b in profile.bands])
    # argmin returns the first minimizer, which is the lower-index tie rule.
    indices = np.abs(wavelengths[None, :] - centers[:, None]).argmin(axis=1)
    return a[indices]
