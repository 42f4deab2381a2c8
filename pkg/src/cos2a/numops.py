"""Shared numerical operators.

The uniform block-averaging map is the workhorse: with pixels grouped into
aligned ``r x r`` blocks it acts as right-multiplication by
``B = I kron (1/r^2)`` under block-major pixel ordering, i.e. column ``j`` of
``X @ B`` is the mean of block ``j``'s ``r^2`` pixel columns. All identities
involving ``B`` in this module assume that ordering; production code never
materializes ``B`` (or the induced quadratic form ``B B^T kron I``), it
applies the blur spatially. :func:`block_major_permutation` exposes the
canonical ordering so tests can compare against dense constructions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputError, NumericalError

__all__ = [
    "BlurOperator",
    "apply_blur",
    "blur_adjoint",
    "block_major_permutation",
    "volume_surrogate",
    "volume_gradient",
    "q_norm_sq",
    "prox_l1_nonneg",
    "project_nonneg",
    "spa_select",
    "estimate_lipschitz",
    "woodbury_solve",
    "accelerated_projected_gradient",
]


@dataclass(frozen=True)
class BlurOperator:
    """Uniform blur on a fine grid whose dimensions divide by ``factor``."""

    height: int
    width: int
    factor: int = 2

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise InputError("grid dimensions must be positive")
        if self.factor < 1:
            raise InputError("factor must be >= 1")
        if self.height % self.factor or self.width % self.factor:
            raise InputError(
                f"grid {self.height}x{self.width} not divisible by factor {self.factor}"
            )

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    @property
    def n_blocks(self) -> int:
        return (self.height // self.factor) * (self.width // self.factor)


def apply_blur(x: np.ndarray, op: BlurOperator) -> np.ndarray:
    """Blur a (bands, pixels) matrix to (bands, blocks); blocks run row-major."""

    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != op.n_pixels:
        raise InputError(f"expected (bands, {op.n_pixels}) matrix, got {x.shape}")
    r = op.factor
    m = x.shape[0]
    grid = x.reshape(m, op.height // r, r, op.width // r, r)
    return grid.mean(axis=(2, 4)).reshape(m, op.n_blocks)


def blur_adjoint(x_lo: np.ndarray, op: BlurOperator) -> np.ndarray:
    """Adjoint of :func:`apply_blur`: replicate each block value, scaled by 1/r^2."""

    x_lo = np.asarray(x_lo, dtype=np.float64)
    if x_lo.ndim != 2 or x_lo.shape[1] != op.n_blocks:
        raise InputError(f"expected (bands, {op.n_blocks}) matrix, got {x_lo.shape}")
    r = op.factor
    m = x_lo.shape[0]
    grid = x_lo.reshape(m, op.height // r, op.width // r)
    fine = np.repeat(np.repeat(grid, r, axis=1), r, axis=2)
    return fine.reshape(m, op.n_pixels) / (r * r)


def block_major_permutation(op: BlurOperator) -> np.ndarray:
    """Pixel indices reordered block-major: blocks row-major, row-major inside.

    ``x[:, perm]`` has each block's ``r^2`` pixel columns contiguous, which is
    the ordering under which the blur is right-multiplication by
    ``I kron (1/r^2)``.
    """

    r = op.factor
    idx = np.arange(op.n_pixels).reshape(op.height, op.width)
    blocks = idx.reshape(op.height // r, r, op.width // r, r)
    return blocks.transpose(0, 2, 1, 3).reshape(-1)


def volume_surrogate(a: np.ndarray) -> float:
    """Half the sum of squared distances between all column pairs of ``a``.

    Evaluated through the trace form ``0.5 * tr(A (N I - 11^T) A^T)``.
    """

    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] < 1:
        raise InputError("expected a matrix with at least one column")
    n = a.shape[1]
    col_sum = a.sum(axis=1)
    return 0.5 * float(n * np.sum(a * a) - col_sum @ col_sum)


def volume_gradient(a: np.ndarray) -> np.ndarray:
    """Gradient of :func:`volume_surrogate`: ``A (N I - 11^T)``."""

    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] < 1:
        raise InputError("expected a matrix with at least one column")
    n = a.shape[1]
    return n * a - a.sum(axis=1, keepdims=True)


def q_norm_sq(x: np.ndarray, anchor: np.ndarray, op: BlurOperator) -> float:
    """Squared blur seminorm of ``x - anchor``: ``||(x - anchor) B||_F^2``.

    Never materializes the induced (M L) x (M L) quadratic form; the value is
    computed by blurring the difference spatially.
    """

    x = np.asarray(x, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    if x.shape != anchor.shape:
        raise InputError(f"shape mismatch: {x.shape} vs {anchor.shape}")
    diff_lo = apply_blur(x - anchor, op)
    return float(np.sum(diff_lo * diff_lo))


def prox_l1_nonneg(x: np.ndarray, threshold: float) -> np.ndarray:
    """Proximal map of ``threshold * ||.||_1`` plus a nonnegativity constraint."""

    if threshold < 0:
        raise InputError("threshold must be >= 0")
    return np.maximum(np.asarray(x, dtype=np.float64) - threshold, 0.0)


def project_nonneg(x: np.ndarray) -> np.ndarray:
    """Elementwise projection onto the nonnegative orthant."""

    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


#: Residual columns with norm below this fraction of the initial maximum are
#: treated as numerically rank-deficient by :func:`spa_select`.
SPA_RANK_TOL = 1e-8


def spa_select(pixels: np.ndarray, k: int) -> list[int]:
    """Greedy successive-projection selection of ``k`` distinct columns.

    Repeatedly picks the residual column of maximal Euclidean norm (ties to
    the lowest index) and projects all columns onto the orthogonal complement
    of the pick. Returns fewer indices, with a warning, once the residual
    drops below the numerical-rank threshold.
    """

    x = np.asarray(pixels, dtype=np.float64)
    if x.ndim != 2:
        raise InputError("pixels must be a 2-D matrix")
    n_cols = x.shape[1]
    if not 1 <= k <= n_cols:
        raise InputError(f"k must be in [1, {n_cols}], got {k}")
    if not np.any(x):
        raise InputError("pixel matrix must be nonzero")
    residual = x.copy()
    threshold = SPA_RANK_TOL * float(np.linalg.norm(residual, axis=0).max())
    selected: list[int] = []
    for _ in range(k):
        norms = np.linalg.norm(residual, axis=0)
        j = int(np.argmax(norms))
        if norms[j] <= threshold:
            warnings.warn(
                f"spa_select: numerical rank exhausted after {len(selected)} of {k} picks",
                stacklevel=2,
            )
            break
        selected.append(j)
        u = residual[:, j] / norms[j]
        residual -= np.outer(u, u @ residual)
    return selected


def estimate_lipschitz(
    apply: Callable[[np.ndarray], np.ndarray],
    adjoint: Callable[[np.ndarray], np.ndarray],
    dim: int,
    iters: int = 30,
    seed: int = 0,
) -> float:
    """Power-iteration estimate of the top eigenvalue of ``adjoint o apply``.

    For a linear operator ``T`` this is ``sigma_1(T)^2``, the gradient
    Lipschitz constant of ``x -> 0.5 ||T x - b||^2``. The estimate carries a
    1.05 safety factor; a zero operator yields 0 and callers must handle it.
    """

    if iters < 1:
        raise InputError("iters must be >= 1")
    if dim < 1:
        raise InputError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    top = 0.0
    for _ in range(iters):
        w = np.asarray(adjoint(apply(v)), dtype=np.float64).ravel()
        top = float(np.linalg.norm(w))
        if top == 0.0:
            return 0.0
        v = w / top
    return 1.05 * top


def woodbury_solve(d: np.ndarray, rho: float, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(2 D^T D + rho I) X = RHS`` through the small Gram system.

    Only the ``m x m`` matrix ``I + (2/rho) D D^T`` is factorized, so the cost
    stays linear in the tall dimension:
    ``X = (1/rho) (RHS - (2/rho) D^T (I + (2/rho) D D^T)^{-1} D RHS)``.
    """

    if rho <= 0:
        raise InputError("rho must be positive")
    d = np.asarray(d, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if d.ndim != 2 or rhs.shape[0] != d.shape[1]:
        raise InputError(f"incompatible shapes: D {d.shape}, RHS {rhs.shape}")
    gram = np.eye(d.shape[0]) + (2.0 / rho) * (d @ d.T)
    t = np.linalg.solve(gram, d @ rhs)
    return (rhs - (2.0 / rho) * (d.T @ t)) / rho


def accelerated_projected_gradient(
    x0: np.ndarray,
    grad: Callable[[np.ndarray], np.ndarray],
    prox: Callable[[np.ndarray], np.ndarray],
    objective: Callable[[np.ndarray], float],
    lipschitz: float,
    max_iters: int,
    tol: float,
    stop: Callable[[np.ndarray], bool] | None = None,
) -> tuple[np.ndarray, float, int]:
    """Monotone accelerated proximal gradient with step ``1/lipschitz``.

    ``prox`` must evaluate the proximal map of the nonsmooth part already
    scaled to step size ``1/lipschitz``. Momentum steps that would increase
    the objective are discarded and replaced by a plain proximal-gradient
    step from the current iterate (which cannot increase it), so the sequence
    of accepted objective values is non-increasing. Stops when the relative
    objective change drops below ``tol``, when the optional ``stop`` predicate
    holds on an accepted iterate, or after ``max_iters`` iterations.

    Returns ``(x, objective(x), iterations)``.
    """

    if lipschitz <= 0:
        raise NumericalError("Lipschitz constant must be positive")
    if max_iters < 0:
        raise InputError("max_iters must be >= 0")
    step = 1.0 / lipschitz
    x = np.asarray(x0, dtype=np.float64).copy()
    y = x.copy()
    t = 1.0
    f_x = float(objective(x))
    iterations = 0
    for iterations in range(1, max_iters + 1):
        z = prox(y - step * grad(y))
        f_z = float(objective(z))
        if f_z > f_x:
            # Momentum overshoot: restart from the last accepted iterate.
            z = prox(x - step * grad(x))
            f_z = float(objective(z))
            t = 1.0
            if f_z > f_x:
                z, f_z = x, f_x
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = z + ((t - 1.0) / t_next) * (z - x)
        t = t_next
        change = abs(f_x - f_z)
        x, f_x = z, f_z
        if stop is not None and stop(x):
            break
        if change <= tol * max(1.0, abs(f_x)):
            break
    return x, f_x, iterations
