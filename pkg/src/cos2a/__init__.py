"""cos2a: upgrade multi-resolution multispectral products to hyperspectral cubes.

The package is organized as one module per pipeline stage:

* :mod:`cos2a.cube` -- data model and file formats
* :mod:`cos2a.scene` -- synthetic ground-truth scenes
* :mod:`cos2a.sensor` -- spectral responses and sensor simulation
* :mod:`cos2a.numops` -- shared numerical operators
* :mod:`cos2a.rough` -- unrolled-ADMM rough spectral upsampling
* :mod:`cos2a.response` -- nonnegative ridge response estimation
* :mod:`cos2a.cnmf` -- coupled factorization super-resolution
* :mod:`cos2a.metrics` -- PSNR / SAM / RMSE / SSIM evaluation
* :mod:`cos2a.pipeline` -- end-to-end orchestration (CLI: ``cos2a``)
"""

from __future__ import annotations

__version__ = "0.1.0"

from .cnmf import CnmfConfig, Factorization, duality_transform, reconstruct, solve_cnmf
from .cube import (
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
from .errors import ContractViolation, Cos2aError, FormatError, InputError, NumericalError
from .metrics import MetricsReport, evaluate, psnr, rmse, sam_degrees, ssim
from .pipeline import PipelineConfig, SuperresResult, calibrate_cube, run_superres, spectral_baseline
from .response import RidgeConfig, estimate_response
from .rough import DenoiserSpec, UnfoldConfig, run_unfolded_admm, spectral_upsample_init
from .scene import SceneSpec, generate_scene
from .sensor import (
    SensorProfile,
    build_response,
    calibrate_gain,
    default_profile,
    load_profile,
    simulate_product,
)

__all__ = [
    "__version__",
    "BandSpec",
    "CnmfConfig",
    "ContractViolation",
    "Cos2aError",
    "DenoiserSpec",
    "Factorization",
    "FormatError",
    "HyperCube",
    "InputError",
    "MetricsReport",
    "MultiResProduct",
    "NumericalError",
    "PipelineConfig",
    "RidgeConfig",
    "SceneSpec",
    "SensorProfile",
    "SuperresResult",
    "UnfoldConfig",
    "build_response",
    "calibrate_cube",
    "calibrate_gain",
    "default_profile",
    "duality_transform",
    "estimate_response",
    "evaluate",
    "generate_scene",
    "load_profile",
    "psnr",
    "read_cube",
    "read_matrix_csv",
    "read_product",
    "reconstruct",
    "rmse",
    "run_superres",
    "run_unfolded_admm",
    "sam_degrees",
    "simulate_product",
    "solve_cnmf",
    "spectral_baseline",
    "spectral_upsample_init",
    "ssim",
    "write_cube",
    "write_matrix_csv",
    "write_product",
]
