"""Rough spectral upsampling by a fixed number of unrolled ADMM stages.

The solver alternates, for ``K`` stages, a denoising step on the current
estimate, an exact data-fit solve through the small Gram system of the
spectral response (see :func:`cos2a.numops.woodbury_solve`), and a running
correction term:

    Z^{k+1} = denoise(Y^k - U^k)
    Y^{k+1} = argmin ||Y_S - D Y||_F^2 + (rho/2) ||Y - Z^{k+1} - U^k||_F^2
    U^{k+1} = U^k - Y^{k+1} + Z^{k+1}

and returns the final ``Z``. The denoiser is pluggable: ``identity``, a
``box`` mean filter, an exact ``quadratic`` proximal step (used by the
convergence oracles), or a small ``conv`` network loaded from a weights file.

Conv weights file: one JSON header line ``{"magic": "cos2a-conv",
"version": 1, "arch": {"channels": C, "groups": G, "blocks": d,
"bands": M}}`` followed by little-endian float32 tensors in order: input
conv weight ``(C, M/G, 3, 3)`` and bias ``(C,)``; for each of the ``d``
blocks the two conv weights ``(C, C/G, 3, 3)`` with biases ``(C,)``; output
conv weight ``(M, C/G, 3, 3)`` and bias ``(M,)``. All convolutions are 3x3,
zero-padded, grouped with ``G`` groups; each block adds its input back, and
the network output is added to the network input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.ndimage import uniform_filter

from .cube import HyperCube
from .errors import FormatError, InputError, NumericalError
from .numops import woodbury_solve

__all__ = [
    "DenoiserSpec",
    "UnfoldConfig",
    "ConvArch",
    "ConvDenoiser",
    "load_conv_weights",
    "save_conv_weights",
    "spectral_upsample_init",
    "denoise",
    "run_unfolded_admm",
]

CONV_MAGIC = "cos2a-conv"
CONV_VERSION = 1

DENOISER_KINDS = ("identity", "box", "quadratic", "conv")
INIT_MODES = ("min_norm", "adjoint")


@dataclass(frozen=True)
class DenoiserSpec:
    """Which denoiser the unrolled stages apply, plus its parameters."""

    kind: str = "box"
    window: int = 3
    mu: float = 1.0
    anchor: np.ndarray | None = None
    weights_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in DENOISER_KINDS:
            raise InputError(f"unknown denoiser kind {self.kind!r}")
        if self.kind == "box":
            if self.window < 1 or self.window % 2 == 0:
                raise InputError("box window must be odd and >= 1")
        if self.kind == "quadratic" and self.mu < 0:
            raise InputError("quadratic strength mu must be >= 0")
        if self.kind == "conv" and not self.weights_path:
            raise InputError("conv denoiser needs a weights_path")

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "box":
            d["window"] = self.window
        elif self.kind == "quadratic":
            d["mu"] = self.mu
        elif self.kind == "conv":
            d["weights_path"] = self.weights_path
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserSpec":
        kind = d.get("kind", "box")
        return cls(
            kind=kind,
            window=int(d.get("window", 3)),
            mu=float(d.get("mu", 1.0)),
            weights_path=d.get("weights_path"),
        )


@dataclass(frozen=True)
class UnfoldConfig:
    """Stage count, penalty weight, denoiser, and initialization mode."""

    stages: int = 4
    rho: float = 1.0
    denoiser: DenoiserSpec = field(default_factory=DenoiserSpec)
    init: str = "min_norm"
    clamp_output: bool = True

    def __post_init__(self) -> None:
        if self.stages < 1:
            raise InputError("stages must be >= 1")
        if self.rho <= 0:
            raise InputError("rho must be positive")
        if self.init not in INIT_MODES:
            raise InputError(f"init must be one of {INIT_MODES}")

    def to_dict(self) -> dict:
        return {
            "stages": self.stages,
            "rho": self.rho,
            "denoiser": self.denoiser.to_dict(),
            "init": self.init,
            "clamp_output": self.clamp_output,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UnfoldConfig":
        return cls(
            stages=int(d.get("stages", 4)),
            rho=float(d.get("rho", 1.0)),
            denoiser=DenoiserSpec.from_dict(d.get("denoiser", {})),
            init=str(d.get("init", "min_norm")),
            clamp_output=bool(d.get("clamp_output", True)),
        )


# ---------------------------------------------------------------------------
# Conv denoiser
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvArch:
    channels: int = 48
    groups: int = 4
    blocks: int = 3
    bands: int = 172

    def __post_init__(self) -> None:
        if min(self.channels, self.groups, self.blocks, self.bands) < 1:
            raise InputError("architecture sizes must be positive")
        if self.channels % self.groups or self.bands % self.groups:
            raise InputError("channels and bands must both divide by groups")

    def tensor_shapes(self) -> list[tuple[int, ...]]:
        c, g, m = self.channels, self.groups, self.bands
        shapes: list[tuple[int, ...]] = [(c, m // g, 3, 3), (c,)]
        for _ in range(self.blocks):
            shapes += [(c, c // g, 3, 3), (c,), (c, c // g, 3, 3), (c,)]
        shapes += [(m, c // g, 3, 3), (m,)]
        return shapes


def _grouped_conv3x3(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, groups: int) -> np.ndarray:
    """Zero-padded 3x3 grouped convolution of an (in_ch, H, W) image."""

    in_ch, h, w = x.shape
    out_ch = weight.shape[0]
    in_per, out_per = in_ch // groups, out_ch // groups
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.empty((out_ch, h, w))
    for g in range(groups):
        xs = padded[g * in_per : (g + 1) * in_per]
        patches = np.empty((in_per, 3, 3, h, w))
        for dy in range(3):
            for dx in range(3):
                patches[:, dy, dx] = xs[:, dy : dy + h, dx : dx + w]
        flat = patches.reshape(in_per * 9, h * w)
        wg = weight[g * out_per : (g + 1) * out_per].reshape(out_per, in_per * 9)
        out[g * out_per : (g + 1) * out_per] = (wg @ flat).reshape(out_per, h, w)
    return out + bias[:, None, None]


@dataclass(frozen=True)
class ConvDenoiser:
    """Residual-in-residual grouped conv network with an outer input skip."""

    arch: ConvArch
    tensors: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        shapes = self.arch.tensor_shapes()
        if len(self.tensors) != len(shapes):
            raise FormatError(
                f"expected {len(shapes)} weight tensors, got {len(self.tensors)}"
            )
        for tensor, shape in zip(self.tensors, shapes):
            if tensor.shape != shape:
                raise FormatError(f"weight tensor shape {tensor.shape} != declared {shape}")

    def forward(self, image: np.ndarray) -> np.ndarray:
        """Apply the network to a (bands, H, W) image."""

        if image.ndim != 3 or image.shape[0] != self.arch.bands:
            raise InputError(
                f"expected ({self.arch.bands}, H, W) image, got {image.shape}"
            )
        g = self.arch.groups
        t = iter(self.tensors)
        h = _grouped_conv3x3(image, next(t), next(t), g)
        for _ in range(self.arch.blocks):
            u = _grouped_conv3x3(h, next(t), next(t), g)
            u = np.maximum(u, 0.0)
            u = _grouped_conv3x3(u, next(t), next(t), g)
            h = h + u
        residual = _grouped_conv3x3(h, next(t), next(t), g)
        return image + residual


def save_conv_weights(denoiser: ConvDenoiser, path: str | Path) -> None:
    header = {
        "magic": CONV_MAGIC,
        "version": CONV_VERSION,
        "arch": {
            "channels": denoiser.arch.channels,
            "groups": denoiser.arch.groups,
            "blocks": denoiser.arch.blocks,
            "bands": denoiser.arch.bands,
        },
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for tensor in denoiser.tensors:
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_conv_weights(path: str | Path) -> ConvDenoiser:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed weights header") from exc
    if not isinstance(header, dict) or header.get("magic") != CONV_MAGIC:
        raise FormatError(f"{path}: not a {CONV_MAGIC} file")
    if header.get("version") != CONV_VERSION:
        raise FormatError(f"{path}: unsupported version {header.get('version')!r}")
    arch_dict = header.get("arch")
    if not isinstance(arch_dict, dict):
        raise FormatError(f"{path}: missing arch header")
    try:
        arch = ConvArch(
            channels=int(arch_dict["channels"]),
            groups=int(arch_dict["groups"]),
            blocks=int(arch_dict["blocks"]),
            bands=int(arch_dict["bands"]),
        )
    except (KeyError, TypeError, ValueError, InputError) as exc:
        raise FormatError(f"{path}: bad arch header: {exc}") from exc
    shapes = arch.tensor_shapes()
    expected = 4 * sum(int(np.prod(s)) for s in shapes)
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, architecture needs {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    tensors: list[np.ndarray] = []
    offset = 0
    for shape in shapes:
        size = int(np.prod(shape))
        tensors.append(flat[offset : offset + size].reshape(shape))
        offset += size
    return ConvDenoiser(arch=arch, tensors=tuple(tensors))


# ---------------------------------------------------------------------------
# Denoising and the unrolled iterations
# ---------------------------------------------------------------------------


def _box_filter(x: np.ndarray, window: int, height: int, width: int) -> np.ndarray:
    """Per-band mean filter whose border windows average only in-bounds cells."""

    if window == 1:
        return x.copy()
    planes = x.reshape(x.shape[0], height, width)
    counts = uniform_filter(
        np.ones((height, width)), size=window, mode="constant", cval=0.0
    )
    out = np.empty_like(planes)
    for b in range(planes.shape[0]):
        sums = uniform_filter(planes[b], size=window, mode="constant", cval=0.0)
        out[b] = sums / counts
    return out.reshape(x.shape)


def denoise(
    x: np.ndarray,
    spec: DenoiserSpec,
    *,
    height: int | None = None,
    width: int | None = None,
    rho: float = 1.0,
) -> np.ndarray:
    """Apply one denoising step to a (bands, pixels) matrix.

    ``box`` and ``conv`` act spatially and need the grid shape. ``quadratic``
    is the exact proximal step of ``(mu/2) ||. - anchor||^2`` at weight
    ``1/rho``, i.e. ``(rho x + mu anchor) / (rho + mu)``; a missing anchor
    means zero.
    """

    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InputError("expected a (bands, pixels) matrix")
    if spec.kind == "identity":
        return x.copy()
    if spec.kind == "quadratic":
        anchor = 0.0 if spec.anchor is None else np.asarray(spec.anchor, dtype=np.float64)
        if isinstance(anchor, np.ndarray) and anchor.shape != x.shape:
            raise InputError(f"anchor shape {anchor.shape} != input shape {x.shape}")
        return (rho * x + spec.mu * anchor) / (rho + spec.mu)
    if height is None or width is None or height * width != x.shape[1]:
        raise InputError("box/conv denoisers need the grid shape matching the pixel count")
    if spec.kind == "box":
        return _box_filter(x, spec.window, height, width)
    network = load_conv_weights(spec.weights_path)
    if network.arch.bands != x.shape[0]:
        raise FormatError(
            f"weights are for {network.arch.bands} bands, input has {x.shape[0]}"
        )
    return network.forward(x.reshape(x.shape[0], height, width)).reshape(x.shape)


def spectral_upsample_init(y_s: np.ndarray, d: np.ndarray, mode: str = "min_norm") -> np.ndarray:
    """Initial spectral upsampling of a multispectral matrix.

    ``min_norm`` returns ``D^T (D D^T + eps I)^{-1} Y_S`` with
    ``eps = 1e-8 tr(D D^T) / m`` (the minimum-norm preimage, regularized);
    ``adjoint`` returns ``D^T Y_S`` with each hyperspectral row rescaled by
    the total response weight reaching it, so band groups of a constant input
    stay constant. A zero response maps everything to zero.
    """

    y_s = np.asarray(y_s, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if mode not in INIT_MODES:
        raise InputError(f"mode must be one of {INIT_MODES}")
    if d.ndim != 2 or y_s.ndim != 2 or d.shape[0] != y_s.shape[0]:
        raise InputError(f"incompatible shapes: D {d.shape}, Y_S {y_s.shape}")
    if mode == "min_norm":
        gram = d @ d.T
        trace = float(np.trace(gram))
        if trace == 0.0:
            return np.zeros((d.shape[1], y_s.shape[1]))
        eps = 1e-8 * trace / d.shape[0]
        return d.T @ np.linalg.solve(gram + eps * np.eye(d.shape[0]), y_s)
    weights = d.sum(axis=0)
    out = d.T @ y_s
    covered = weights > 0
    out[covered] /= weights[covered, None]
    out[~covered] = 0.0
    return out


def run_unfolded_admm(
    y_s: np.ndarray,
    d: np.ndarray,
    cfg: UnfoldConfig,
    *,
    height: int,
    width: int,
    wavelengths_nm: np.ndarray,
    on_stage: Callable[[int, np.ndarray, np.ndarray, np.ndarray], None] | None = None,
) -> HyperCube:
    """Run the unrolled stages and return the rough hyperspectral cube.

    ``on_stage(k, y_h, z, u)`` is invoked after each stage with the fresh
    iterates (diagnostics hook; pass ``None`` to skip). The returned cube is
    the final ``Z``, clamped at zero when ``cfg.clamp_output`` is set.
    """

    y_s = np.asarray(y_s, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if y_s.ndim != 2 or y_s.shape[1] != height * width:
        raise InputError(f"Y_S shape {y_s.shape} does not match a {height}x{width} grid")
    if d.ndim != 2 or d.shape[0] != y_s.shape[0]:
        raise InputError(f"response shape {d.shape} does not match Y_S {y_s.shape}")
    n_hyper = d.shape[1]
    u = np.zeros((n_hyper, y_s.shape[1]))
    y_h = spectral_upsample_init(y_s, d, cfg.init)
    rhs_base = 2.0 * (d.T @ y_s)
    z = y_h
    for k in range(cfg.stages):
        z = denoise(y_h - u, cfg.denoiser, height=height, width=width, rho=cfg.rho)
        y_h = woodbury_solve(d, cfg.rho, rhs_base + cfg.rho * (z + u))
        u = u - y_h + z
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(y_h))):
            raise NumericalError(f"non-finite iterate at stage {k + 1}")
        if on_stage is not None:
            on_stage(k, y_h, z, u)
    out = np.maximum(z, 0.0) if cfg.clamp_output else z
    return HyperCube.from_matrix(out, height, width, wavelengths_nm)
