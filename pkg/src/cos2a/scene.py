"""Synthetic scenes with known low-rank structure.

Scenes are built as an exact product of smooth nonnegative endmember spectra
and simplex-constrained abundance maps, so downstream solvers can be checked
against ground truth. Endmember columns are sums of a few Gaussian bumps over
the wavelength axis plus a small offset, rescaled into [0.05, 0.95];
abundances are smoothed Gaussian random fields pushed through a softmax, with
optional pure pixels injected at distinct locations. Everything is a pure
function of the spec, so a fixed seed reproduces the scene bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .cnmf import Factorization
from .cube import HyperCube
from .errors import InputError

__all__ = ["SceneSpec", "generate_scene"]


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a synthetic scene.

    ``smoothness`` is the spectral correlation length in bands (width scale of
    the endmember bumps); ``spatial_smoothness`` is the correlation length in
    pixels of the abundance random fields.
    """

    height: int
    width: int
    bands: int = 172
    n_endmembers: int = 5
    seed: int = 0
    smoothness: float = 12.0
    spatial_smoothness: float = 2.0
    pure_pixel: bool = True
    noise_std: float = 0.0
    wavelength_min_nm: float = 400.0
    wavelength_max_nm: float = 2500.0

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise InputError("scene dimensions must be positive")
        if self.n_endmembers < 1:
            raise InputError("n_endmembers must be >= 1")
        if self.bands < self.n_endmembers:
            raise InputError("bands must be >= n_endmembers")
        if self.height * self.width < self.n_endmembers:
            raise InputError("pixel count must be >= n_endmembers")
        if self.bands < 2:
            raise InputError("need at least 2 bands")
        if self.smoothness <= 0:
            raise InputError("smoothness must be positive")
        if self.spatial_smoothness <= 0:
            raise InputError("spatial_smoothness must be positive")
        if self.noise_std < 0:
            raise InputError("noise_std must be >= 0")
        if self.wavelength_min_nm >= self.wavelength_max_nm:
            raise InputError("wavelength range must be increasing")


def _endmembers(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Smooth spectra in [0.05, 0.95], one column per endmember."""

    idx = np.arange(spec.bands, dtype=np.float64)
    columns = np.empty((spec.bands, spec.n_endmembers))
    for j in range(spec.n_endmembers):
        n_bumps = int(rng.integers(3, 7))
        profile = np.zeros(spec.bands)
        for _ in range(n_bumps):
            center = rng.uniform(0, spec.bands - 1)
            sigma = spec.smoothness * rng.uniform(0.5, 1.5)
            amplitude = rng.uniform(0.3, 1.0)
            profile += amplitude * np.exp(-0.5 * ((idx - center) / sigma) ** 2)
        profile += rng.uniform(0.02, 0.1)
        lo, hi = profile.min(), profile.max()
        if hi > lo:
            profile = 0.05 + 0.9 * (profile - lo) / (hi - lo)
        else:
            profile = np.full(spec.bands, 0.5)
        columns[:, j] = profile
    return columns


def _abundances(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Simplex-constrained abundance rows on the pixel grid."""

    n = spec.n_endmembers
    fields = rng.standard_normal((n, spec.height, spec.width))
    for i in range(n):
        fields[i] = gaussian_filter(fields[i], sigma=spec.spatial_smoothness, mode="reflect")
    fields *= 3.0 / max(fields.std(), 1e-12)
    fields -= fields.max(axis=0, keepdims=True)
    weights = np.exp(fields)
    weights /= weights.sum(axis=0, keepdims=True)
    abundances = weights.reshape(n, -1)
    if spec.pure_pixel:
        locations = rng.choice(spec.height * spec.width, size=n, replace=False)
        for i, pixel in enumerate(locations):
            abundances[:, pixel] = 0.0
            abundances[i, pixel] = 1.0
    return abundances


def generate_scene(spec: SceneSpec) -> tuple[HyperCube, Factorization]:
    """Generate a scene cube together with its exact factorization.

    Without noise the cube values are literally the stored product of the
    returned endmember and abundance matrices. With ``noise_std > 0`` additive
    Gaussian noise is applied (clamped at zero) and exactness no longer holds.
    """

    rng = np.random.default_rng(spec.seed)
    endmembers = _endmembers(spec, rng)
    abundances = _abundances(spec, rng)
    values = endmembers @ abundances
    if spec.noise_std > 0:
        values = np.maximum(values + rng.normal(0.0, spec.noise_std, values.shape), 0.0)
    wavelengths = np.linspace(spec.wavelength_min_nm, spec.wavelength_max_nm, spec.bands)
    cube = HyperCube(values.reshape(spec.bands, spec.height, spec.width), wavelengths)
    return cube, Factorization(endmembers, abundances)
