"""Coupled nonnegative factorization for the spatial super-resolution stage.

The anchored spectral problem is recast as a coupled factorization: blur the
rough hyperspectral solution down to the coarse grid, pair it with the
high-resolution multispectral bands, and fit shared endmember/abundance
factors to both,

    minimize  0.5 ||Y_lo - A S B||_F^2 + 0.5 ||Y_m - D A S||_F^2
              + lambda1 vol(A) + lambda2 ||S||_1     over A, S >= 0,

where ``B`` is the uniform block-averaging map and ``vol`` the pairwise
column-distance surrogate from :mod:`cos2a.numops`. Both blocks are convex;
they are solved alternately by monotone accelerated projected gradient with
warm starts, so the recorded objective trace is non-increasing across
half-steps. Endmember columns that collapse to zero are revived from the
data-fit residual in a way that provably cannot increase the objective.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cube import HyperCube
from .errors import ContractViolation, InputError, NumericalError
from .numops import (
    BlurOperator,
    accelerated_projected_gradient,
    apply_blur,
    blur_adjoint,
    estimate_lipschitz,
    project_nonneg,
    prox_l1_nonneg,
    spa_select,
    volume_gradient,
    volume_surrogate,
)

__all__ = [
    "CnmfConfig",
    "Factorization",
    "TraceEntry",
    "cnmf_objective",
    "duality_transform",
    "init_factorization",
    "a_step",
    "s_step",
    "solve_cnmf",
    "reconstruct",
]

#: Relative slack allowed before a recorded objective increase is treated as
#: a broken solver guarantee.
MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class CnmfConfig:
    n_endmembers: int = 10
    lambda1: float = 0.001
    lambda2: float = 0.001
    r: int = 2
    outer_max: int = 200
    outer_tol: float = 1e-5
    inner_max: int = 100
    inner_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_endmembers < 1:
            raise InputError("n_endmembers must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InputError("penalty weights must be >= 0")
        if self.r < 1:
            raise InputError("blur factor must be >= 1")
        if self.outer_max < 1 or self.inner_max < 1:
            raise InputError("iteration limits must be >= 1")
        if self.outer_tol < 0 or self.inner_tol < 0:
            raise InputError("tolerances must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_endmembers": self.n_endmembers,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "r": self.r,
            "outer_max": self.outer_max,
            "outer_tol": self.outer_tol,
            "inner_max": self.inner_max,
            "inner_tol": self.inner_tol,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CnmfConfig":
        return cls(
            n_endmembers=int(d.get("n_endmembers", 10)),
            lambda1=float(d.get("lambda1", 0.001)),
            lambda2=float(d.get("lambda2", 0.001)),
            r=int(d.get("r", 2)),
            outer_max=int(d.get("outer_max", 200)),
            outer_tol=float(d.get("outer_tol", 1e-5)),
            inner_max=int(d.get("inner_max", 100)),
            inner_tol=float(d.get("inner_tol", 1e-7)),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class Factorization:
    """Nonnegative endmember matrix (M, N) and abundance matrix (N, L)."""

    a: np.ndarray
    s: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=np.float64)
        s = np.asarray(self.s, dtype=np.float64)
        if a.ndim != 2 or s.ndim != 2 or a.shape[1] != s.shape[0]:
            raise InputError(f"incompatible factor shapes {a.shape} and {s.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(s))):
            raise InputError("factors must be finite")
        if a.min(initial=0.0) < 0 or s.min(initial=0.0) < 0:
            raise InputError("factors must be nonnegative")
        a.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "s", s)

    @property
    def n_endmembers(self) -> int:
        return int(self.a.shape[1])


class TraceEntry(NamedTuple):
    sweep: int
    half_step: str
    objective: float


def cnmf_objective(
    a: np.ndarray,
    s: np.ndarray,
    y_lo: np.ndarray,
    y_m: np.ndarray,
    d: np.ndarray,
    lambda1: float,
    lambda2: float,
    blur: BlurOperator,
) -> float:
    """Evaluate the coupled-factorization objective at arbitrary factors."""

    s_lo = apply_blur(s, blur)
    fit_lo = y_lo - a @ s_lo
    fit_m = y_m - d @ (a @ s)
    return (
        0.5 * float(np.sum(fit_lo * fit_lo))
        + 0.5 * float(np.sum(fit_m * fit_m))
        + lambda1 * volume_surrogate(a)
        + lambda2 * float(np.sum(np.abs(s)))
    )


def duality_transform(
    y_rough: np.ndarray,
    y_hi: np.ndarray,
    response_hi: np.ndarray,
    *,
    height: int,
    width: int,
    r: int = 2,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble the coupled-factorization inputs from the rough solution.

    Returns ``(y_lo, y_m, d)``: the rough solution blurred to the coarse grid,
    the high-resolution multispectral bands, and the high-resolution response,
    i.e. exactly the data the coupled solver consumes.
    """

    y_rough = np.asarray(y_rough, dtype=np.float64)
    y_hi = np.asarray(y_hi, dtype=np.float64)
    response_hi = np.asarray(response_hi, dtype=np.float64)
    blur = BlurOperator(height, width, r)
    if y_rough.ndim != 2 or y_rough.shape[1] != height * width:
        raise InputError(f"rough matrix {y_rough.shape} does not match the grid")
    if y_hi.ndim != 2 or y_hi.shape[1] != height * width:
        raise InputError(f"high-res matrix {y_hi.shape} does not match the grid")
    if response_hi.ndim != 2 or response_hi.shape != (y_hi.shape[0], y_rough.shape[0]):
        raise InputError(
            f"response {response_hi.shape} does not map {y_rough.shape[0]} bands "
            f"to {y_hi.shape[0]}"
        )
    return apply_blur(y_rough, blur), y_hi.copy(), response_hi.copy()


def _nonneg_least_squares(
    c: np.ndarray,
    y: np.ndarray,
    x0: np.ndarray,
    max_iters: int,
    tol: float,
    seed: int,
) -> np.ndarray:
    """minimize 0.5 ||y - c x||_F^2 over x >= 0, by accelerated projection."""

    top = estimate_lipschitz(
        apply=lambda v: c @ v, adjoint=lambda w: c.T @ w, dim=c.shape[1], seed=seed
    )
    if top == 0.0:
        return np.zeros_like(x0)

    def grad(x: np.ndarray) -> np.ndarray:
        return c.T @ (c @ x - y)

    def objective(x: np.ndarray) -> float:
        fit = y - c @ x
        return 0.5 * float(np.sum(fit * fit))

    x, _, _ = accelerated_projected_gradient(
        x0, grad, project_nonneg, objective, top, max_iters, tol
    )
    return x


def init_factorization(
    y_lo: np.ndarray,
    y_m: np.ndarray,
    d: np.ndarray,
    cfg: CnmfConfig,
    *,
    height: int,
    width: int,
) -> Factorization:
    """Deterministic starting point: pure-pixel columns plus a nonnegative fit.

    Endmembers are coarse-grid pixels picked by successive projection (random
    nonnegative columns fill in, seeded and flagged, if the data rank is too
    low); abundances solve the multispectral nonnegative least-squares fit on
    the full grid.
    """

    y_lo = np.asarray(y_lo, dtype=np.float64)
    y_m = np.asarray(y_m, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    n = cfg.n_endmembers
    if n > min(y_lo.shape):
        raise InputError(
            f"n_endmembers {n} exceeds the coarse data size {y_lo.shape}"
        )
    picks = spa_select(y_lo, n) if np.any(y_lo) else []
    a0 = np.empty((y_lo.shape[0], n))
    a0[:, : len(picks)] = project_nonneg(y_lo[:, picks])
    if len(picks) < n:
        warnings.warn(
            f"init_factorization: filling {n - len(picks)} endmembers with "
            "seeded random columns (rank-deficient data)",
            stacklevel=2,
        )
        rng = np.random.default_rng(cfg.seed)
        scale = float(y_lo.max()) if float(y_lo.max()) > 0 else 1.0
        a0[:, len(picks) :] = rng.uniform(0.0, scale, size=(y_lo.shape[0], n - len(picks)))
    s0 = _nonneg_least_squares(
        d @ a0,
        y_m,
        np.zeros((n, y_m.shape[1])),
        cfg.inner_max,
        cfg.inner_tol,
        cfg.seed,
    )
    return Factorization(a0, s0)


def a_step(
    a0: np.ndarray,
    s: np.ndarray,
    y_lo: np.ndarray,
    y_m: np.ndarray,
    d: np.ndarray,
    lambda1: float,
    blur: BlurOperator,
    max_iters: int,
    tol: float,
    seed: int = 0,
) -> np.ndarray:
    """Minimize the objective over the endmember block, abundances fixed.

    Gradient, objective, and the Lipschitz power iteration all run through
    the small Gram matrices of the fixed abundances, so the per-iteration
    cost is independent of the pixel count.
    """

    s_lo = apply_blur(s, blur)
    n = a0.shape[1]
    dtd = d.T @ d
    g_lo = s_lo @ s_lo.T
    g_m = s @ s.T
    c_lo = y_lo @ s_lo.T
    c_m = d.T @ (y_m @ s.T)
    sq_lo = float(np.sum(y_lo * y_lo))
    sq_m = float(np.sum(y_m * y_m))

    def hessian(v: np.ndarray) -> np.ndarray:
        a = v.reshape(a0.shape)
        out = a @ g_lo + dtd @ (a @ g_m)
        if lambda1 > 0:
            out = out + lambda1 * volume_gradient(a)
        return out.ravel()

    # The Hessian action is self-adjoint PSD, so the composition inside the
    # power iteration is the Hessian itself.
    top = estimate_lipschitz(hessian, lambda w: w, dim=a0.size, seed=seed)
    if top == 0.0:
        return a0.copy()

    def grad(a: np.ndarray) -> np.ndarray:
        g = a @ g_lo - c_lo + dtd @ (a @ g_m) - c_m
        if lambda1 > 0:
            g = g + lambda1 * volume_gradient(a)
        return g

    def objective(a: np.ndarray) -> float:
        fit_lo = sq_lo - 2.0 * float(np.sum(c_lo * a)) + float(np.sum((a @ g_lo) * a))
        fit_m = sq_m - 2.0 * float(np.sum(c_m * a)) + float(np.sum((dtd @ (a @ g_m)) * a))
        return 0.5 * fit_lo + 0.5 * fit_m + lambda1 * volume_surrogate(a)

    a, _, _ = accelerated_projected_gradient(
        a0, grad, project_nonneg, objective, top, max_iters, tol
    )
    return a


def s_step(
    s0: np.ndarray,
    a: np.ndarray,
    y_lo: np.ndarray,
    y_m: np.ndarray,
    d: np.ndarray,
    lambda2: float,
    blur: BlurOperator,
    max_iters: int,
    tol: float,
    seed: int = 0,
) -> np.ndarray:
    """Minimize the objective over the abundance block, endmembers fixed."""

    c = d @ a
    ata = a.T @ a
    ctc = c.T @ c
    aty = a.T @ y_lo
    cty = c.T @ y_m
    sq_lo = float(np.sum(y_lo * y_lo))
    sq_m = float(np.sum(y_m * y_m))

    def hessian(v: np.ndarray) -> np.ndarray:
        s = v.reshape(s0.shape)
        out = blur_adjoint(ata @ apply_blur(s, blur), blur) + ctc @ s
        return out.ravel()

    top = estimate_lipschitz(hessian, lambda w: w, dim=s0.size, seed=seed)
    if top == 0.0:
        # Smooth part is flat in S; only the sparsity penalty remains.
        return np.zeros_like(s0) if lambda2 > 0 else s0.copy()

    def grad(s: np.ndarray) -> np.ndarray:
        s_lo = apply_blur(s, blur)
        return blur_adjoint(ata @ s_lo - aty, blur) + ctc @ s - cty

    def objective(s: np.ndarray) -> float:
        s_lo = apply_blur(s, blur)
        fit_lo = sq_lo - 2.0 * float(np.sum(aty * s_lo)) + float(np.sum((ata @ s_lo) * s_lo))
        fit_m = sq_m - 2.0 * float(np.sum(cty * s)) + float(np.sum((ctc @ s) * s))
        return 0.5 * fit_lo + 0.5 * fit_m + lambda2 * float(np.sum(np.abs(s)))

    threshold = lambda2 / top

    def prox(v: np.ndarray) -> np.ndarray:
        return prox_l1_nonneg(v, threshold)

    s, _, _ = accelerated_projected_gradient(
        s0, grad, prox, objective, top, max_iters, tol
    )
    return s


def _revive_dead_columns(
    a: np.ndarray, s: np.ndarray, y_lo: np.ndarray, blur: BlurOperator
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Reseed zero endmember columns from the coarse-grid residual.

    Replaces a dead column by the max-norm residual pixel scaled so the
    pairwise-distance penalty strictly decreases, and zeroes the matching
    abundance row (which leaves both data-fit terms untouched because the
    column was zero). The full objective therefore cannot increase.
    """

    n = a.shape[1]
    norms = np.linalg.norm(a, axis=0)
    dead = np.flatnonzero(norms <= 1e-12 * max(1.0, norms.max()))
    if dead.size == 0 or n < 2:
        return a, s, False
    a = a.copy()
    s = s.copy()
    revived = False
    for j in dead:
        s[j, :] = 0.0
        residual = y_lo - a @ apply_blur(s, blur)
        pixel = int(np.argmax(np.linalg.norm(residual, axis=0)))
        candidate = np.maximum(residual[:, pixel], 0.0)
        norm_sq = float(candidate @ candidate)
        if norm_sq == 0.0:
            continue
        cross = float(candidate @ a.sum(axis=1))
        if cross <= 0.0:
            continue
        a[:, j] = (cross / ((n - 1) * norm_sq)) * candidate
        revived = True
    return a, s, revived


def solve_cnmf(
    y_lo: np.ndarray,
    y_m: np.ndarray,
    d: np.ndarray,
    cfg: CnmfConfig,
    *,
    height: int,
    width: int,
    init: Factorization | None = None,
) -> tuple[Factorization, list[TraceEntry]]:
    """Alternate the two convex blocks until the objective stalls.

    Returns the factorization and the objective trace (one entry per
    half-step). Raises :class:`ContractViolation` if a recorded objective
    ever increases beyond the 1e-9 relative slack, and
    :class:`NumericalError` on a non-finite objective.
    """

    y_lo = np.asarray(y_lo, dtype=np.float64)
    y_m = np.asarray(y_m, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    blur = BlurOperator(height, width, cfg.r)
    if y_lo.ndim != 2 or y_lo.shape[1] != blur.n_blocks:
        raise InputError(f"coarse matrix {y_lo.shape} does not match {blur.n_blocks} blocks")
    if y_m.ndim != 2 or y_m.shape[1] != blur.n_pixels:
        raise InputError(f"multispectral matrix {y_m.shape} does not match the grid")
    if d.shape != (y_m.shape[0], y_lo.shape[0]):
        raise InputError(f"response {d.shape} incompatible with data shapes")

    if init is None:
        init = init_factorization(y_lo, y_m, d, cfg, height=height, width=width)
    a = np.asarray(init.a, dtype=np.float64).copy()
    s = np.asarray(init.s, dtype=np.float64).copy()

    def objective(a_: np.ndarray, s_: np.ndarray) -> float:
        return cnmf_objective(a_, s_, y_lo, y_m, d, cfg.lambda1, cfg.lambda2, blur)

    trace: list[TraceEntry] = []
    current = objective(a, s)

    def record(sweep: int, half_step: str, value: float) -> None:
        nonlocal current
        if not np.isfinite(value):
            raise NumericalError(
                f"non-finite objective at sweep {sweep} ({half_step}); trace has "
                f"{len(trace)} entries"
            )
        if value > current + MONOTONE_SLACK * max(1.0, abs(current)):
            raise ContractViolation(
                f"objective increased at sweep {sweep} ({half_step}): "
                f"{current:.12g} -> {value:.12g}"
            )
        trace.append(TraceEntry(sweep, half_step, value))
        current = value

    record(0, "init", current)
    for sweep in range(1, cfg.outer_max + 1):
        sweep_start = current
        a = a_step(a, s, y_lo, y_m, d, cfg.lambda1, blur, cfg.inner_max, cfg.inner_tol, cfg.seed)
        record(sweep, "A", objective(a, s))
        a, s, revived = _revive_dead_columns(a, s, y_lo, blur)
        if revived:
            warnings.warn(f"solve_cnmf: revived dead endmember column(s) at sweep {sweep}",
                          stacklevel=2)
        s = s_step(s, a, y_lo, y_m, d, cfg.lambda2, blur, cfg.inner_max, cfg.inner_tol, cfg.seed)
        record(sweep, "S", objective(a, s))
        if abs(sweep_start - current) <= cfg.outer_tol * max(1.0, abs(sweep_start)):
            break
    return Factorization(a, s), trace


def reconstruct(
    fac: Factorization, *, height: int, width: int, wavelengths_nm: np.ndarray
) -> HyperCube:
    """Multiply the factors back into a cube on the fine grid."""

    return HyperCube.from_matrix(fac.a @ fac.s, height, width, wavelengths_nm)
