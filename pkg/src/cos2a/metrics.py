"""Quantitative evaluation of reconstructed cubes.

Conventions (the literature varies, so they are pinned here and overridable
per call):

* PSNR: mean over bands of per-band ``10 log10(peak^2 / MSE)``, with the peak
  taken over the whole reference cube; bands are capped at 100 dB and a
  zero-error band contributes the cap.
* SAM: mean per-pixel angle between reference and test spectra in degrees;
  pixels where either spectrum has zero norm are skipped and counted.
* RMSE: square root of the global mean squared error.
* SSIM: mean over bands of single-scale SSIM with an 11x11 Gaussian window
  (sigma 1.5), stability constants K1=0.01 / K2=0.03, dynamic range equal to
  the reference maximum, averaged over fully interior window positions.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .cube import HyperCube
from .errors import InputError

__all__ = ["MetricsReport", "psnr", "sam_degrees", "rmse", "ssim", "evaluate"]

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_shapes(ref: HyperCube, test: HyperCube) -> None:
    if ref.values.shape != test.values.shape:
        raise InputError(
            f"shape mismatch: reference {ref.values.shape}, test {test.values.shape}"
        )


def per_band_psnr(ref: HyperCube, test: HyperCube, cap_db: float = PSNR_CAP_DB) -> np.ndarray:
    """Per-band peak signal-to-noise ratios in dB (peak from the reference)."""

    _check_shapes(ref, test)
    peak = float(ref.values.max())
    if peak <= 0:
        raise InputError("reference cube must contain a positive peak value")
    diff = ref.values - test.values
    mse = (diff * diff).mean(axis=(1, 2))
    out = np.full(ref.bands, cap_db)
    nonzero = mse > 0
    out[nonzero] = np.minimum(cap_db, 10.0 * np.log10(peak * peak / mse[nonzero]))
    return out


def psnr(ref: HyperCube, test: HyperCube) -> float:
    """Mean over bands of the per-band PSNR, in dB."""

    return float(per_band_psnr(ref, test).mean())


def _sam_with_count(ref: HyperCube, test: HyperCube) -> tuple[float, int]:
    _check_shapes(ref, test)
    x = ref.values.reshape(ref.bands, -1)
    y = test.values.reshape(test.bands, -1)
    nx = np.linalg.norm(x, axis=0)
    ny = np.linalg.norm(y, axis=0)
    valid = (nx > 0) & (ny > 0)
    skipped = int(np.count_nonzero(~valid))
    if not np.any(valid):
        raise InputError("no pixel with nonzero spectra in both cubes")
    cosine = np.sum(x[:, valid] * y[:, valid], axis=0) / (nx[valid] * ny[valid])
    angles = np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0)))
    return float(angles.mean()), skipped


def sam_degrees(ref: HyperCube, test: HyperCube) -> float:
    """Mean spectral angle in degrees, skipping zero-norm pixels."""

    return _sam_with_count(ref, test)[0]


def rmse(ref: HyperCube, test: HyperCube) -> float:
    """Root mean squared error over every entry."""

    _check_shapes(ref, test)
    diff = ref.values - test.values
    return float(np.sqrt((diff * diff).mean()))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    window = np.outer(g, g)
    return window / window.sum()


def _windowed_mean(plane: np.ndarray, window: np.ndarray) -> np.ndarray:
    # Weighted local means over fully interior (valid) window positions.
    size = window.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(plane, (size, size))
    return np.tensordot(view, window, axes=([2, 3], [0, 1]))


def ssim(ref: HyperCube, test: HyperCube) -> float:
    """Mean over bands of the standard single-scale structural similarity."""

    _check_shapes(ref, test)
    if ref.height < SSIM_WINDOW or ref.width < SSIM_WINDOW:
        raise InputError(
            f"spatial dimensions must be >= the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    dynamic_range = float(ref.values.max())
    if dynamic_range <= 0:
        raise InputError("reference cube must contain a positive peak value")
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    window = _gaussian_window()
    scores = np.empty(ref.bands)
    for b in range(ref.bands):
        x = ref.values[b]
        y = test.values[b]
        mu_x = _windowed_mean(x, window)
        mu_y = _windowed_mean(y, window)
        var_x = _windowed_mean(x * x, window) - mu_x * mu_x
        var_y = _windowed_mean(y * y, window) - mu_y * mu_y
        cov = _windowed_mean(x * y, window) - mu_x * mu_y
        numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        scores[b] = float((numerator / denominator).mean())
    return float(scores.mean())


@dataclass(frozen=True)
class MetricsReport:
    psnr_db: float
    sam_deg: float
    rmse: float
    ssim: float
    per_band_psnr: tuple[float, ...] = field(default_factory=tuple)
    skipped_pixels: int = 0
    runtime_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "psnr_db": self.psnr_db,
            "sam_deg": self.sam_deg,
            "rmse": self.rmse,
            "ssim": self.ssim,
            "per_band_psnr": list(self.per_band_psnr),
            "skipped_pixels": self.skipped_pixels,
            "runtime_s": self.runtime_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate(ref: HyperCube, test: HyperCube) -> MetricsReport:
    """Compute all four metrics on a cube pair."""

    _check_shapes(ref, test)
    started = time.perf_counter()
    band_psnr = per_band_psnr(ref, test)
    sam_value, skipped = _sam_with_count(ref, test)
    report = MetricsReport(
        psnr_db=float(band_psnr.mean()),
        sam_deg=sam_value,
        rmse=rmse(ref, test),
        ssim=ssim(ref, test),
        per_band_psnr=tuple(float(v) for v in band_psnr),
        skipped_pixels=skipped,
        runtime_s=time.perf_counter() - started,
    )
    return report
