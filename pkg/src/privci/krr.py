"""Gaussian-kernel ridge regression with bounded residual sensitivity.

The fitted function minimises

    (lam / 2) * ||w||^2 + (1 / n) * sum_i (u_i - <w, phi(z_i)>)^2

over the RKHS of a Gaussian kernel. Stationarity gives the dual system
``(K + (n * lam / 2) I) alpha = u``. Since ``k(v, v) = 1`` and ``|u_i| <= 1``
the primal norm is at most ``sqrt(2 / lam)`` and a replace-one neighbour moves
every prediction by at most ``8 sqrt(2) / (lam^1.5 n) + 8 / (lam n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist

from .errors import (
    BoundViolation,
    DimensionMismatch,
    EmptyGrid,
    LambdaBelowFloor,
    NonPositiveLambda,
    SolveFailure,
)

DEFAULT_LAMBDA_FLOOR = 10.0
BANDWIDTH_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)
LAMBDA_MULTIPLIERS = (1.0, 3.0, 10.0)
# Conjugate gradients replace the dense factorisation above CG_THRESHOLD rows,
# and from CG_MIN_N rows when lam >= CG_MIN_LAMBDA: the eigenvalues of K lie in
# [0, n], so the condition number is at most 1 + 2 / lam.
CG_THRESHOLD = 3000
CG_MIN_N = 200
CG_MIN_LAMBDA = 0.5
_JITTER = 1e-10


@dataclass(frozen=True)
class KernelConfig:
    bandwidth: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class KrrModel:
    dual_weights: np.ndarray
    train_z: np.ndarray
    kernel: KernelConfig
    lam: float

    @property
    def n(self) -> int:
        return self.dual_weights.shape[0]

    def rkhs_norm(self, gram: np.ndarray | None = None) -> float:
        """``sqrt(alpha' K alpha)``, the norm of the fitted function."""
        if gram is None:
            gram = gaussian_gram(self.train_z, self.train_z, self.kernel)
        a = self.dual_weights
        return math.sqrt(max(float(a @ gram @ a), 0.0))

    def predict(self, z: np.ndarray) -> np.ndarray:
        z = _as_matrix(z)
        if z.shape[1] != self.train_z.shape[1]:
            raise DimensionMismatch(
                f"expected {self.train_z.shape[1]} columns, got {z.shape[1]}"
            )
        return gaussian_gram(z, self.train_z, self.kernel) @ self.dual_weights


def _as_matrix(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z.reshape(-1, 1)
    return z


def gaussian_kernel(v, v2, cfg: KernelConfig) -> float:
    """``exp(-||v - v2||^2 / (2 h^2))``."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    v2 = np.atleast_1d(np.asarray(v2, dtype=float))
    if v.shape != v2.shape:
        raise DimensionMismatch(f"{v.shape} vs {v2.shape}")
    sq = float(np.sum((v - v2) ** 2))
    return math.exp(-sq / (2.0 * cfg.bandwidth**2))


def gaussian_gram(a: np.ndarray, b: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"{a.shape[1]} vs {b.shape[1]} columns")
    out = cdist(a, b, "sqeuclidean")
    np.multiply(out, -0.5 / cfg.bandwidth**2, out=out)
    np.exp(out, out=out)
    return out


def _cg_shifted(gram, shift, rhs, tol=1e-13, max_iter=500):
    """Column-wise conjugate gradients for ``(gram + shift I) X = rhs``."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rs = np.einsum("ij,ij->j", r, r)
    target = (tol**2) * np.maximum(rs, np.finfo(float).tiny)
    for _ in range(max_iter):
        if np.all(rs <= target):
            return x
        ap = gram @ p + shift * p
        pap = np.einsum("ij,ij->j", p, ap)
        step = np.where(rs > target, rs / np.where(pap > 0, pap, 1.0), 0.0)
        x += p * step
        r -= ap * step
        rs_new = np.einsum("ij,ij->j", r, r)
        beta = np.where(rs > target, rs_new / np.where(rs > 0, rs, 1.0), 0.0)
        p = r + p * beta
        rs = rs_new
    if np.all(rs <= target * 1e4):
        return x
    raise SolveFailure("conjugate gradients did not converge")


def solve_dual(gram: np.ndarray, u: np.ndarray, lam: float) -> np.ndarray:
    """Solve ``(gram + (n lam / 2) I) alpha = u`` for one or more targets."""
    n = gram.shape[0]
    shift = n * lam / 2.0
    rhs = u.reshape(n, -1)
    if n > CG_THRESHOLD or (n >= CG_MIN_N and lam >= CG_MIN_LAMBDA):
        try:
            return _cg_shifted(gram, shift, rhs).reshape(u.shape)
        except SolveFailure:
            pass
    a = gram + shift * np.eye(n)
    try:
        fac = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        a[np.diag_indices(n)] += _JITTER
        try:
            fac = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SolveFailure(str(exc)) from exc
    sol = scipy.linalg.cho_solve(fac, rhs, check_finite=False)
    if not np.all(np.isfinite(sol)):
        raise SolveFailure("non-finite dual weights")
    return sol.reshape(u.shape)


def krr_fit(z, u, lam: float, cfg: KernelConfig, gram: np.ndarray | None = None) -> KrrModel:
    """Fit the regression of ``u`` on ``z``; ``gram`` may be passed to reuse it."""
    z = _as_matrix(z)
    u = np.asarray(u, dtype=float).reshape(-1)
    if lam <= 0:
        raise NonPositiveLambda(f"lambda must be positive, got {lam}")
    if z.shape[0] != u.shape[0]:
        raise DimensionMismatch(f"{z.shape[0]} rows in z, {u.shape[0]} targets")
    bad = np.flatnonzero(np.abs(u) > 1.0)
    if bad.size:
        i = int(bad[0])
        raise BoundViolation(i, float(u[i]), 1.0)
    if gram is None:
        gram = gaussian_gram(z, z, cfg)
    alpha = solve_dual(gram, u, lam)
    return KrrModel(alpha, z, cfg, float(lam))


def krr_predict(model: KrrModel, z) -> float:
    """Prediction at a single point ``z``."""
    v = np.atleast_1d(np.asarray(z, dtype=float))
    if v.ndim != 1 or v.shape[0] != model.train_z.shape[1]:
        raise DimensionMismatch(
            f"expected a vector of length {model.train_z.shape[1]}"
        )
    return float(model.predict(v.reshape(1, -1))[0])


def residuals(model: KrrModel, z, u, gram: np.ndarray | None = None) -> np.ndarray:
    """``u_i - f(z_i)``. ``gram`` is the kernel between ``z`` and the training inputs."""
    u = np.asarray(u, dtype=float).reshape(-1)
    z = _as_matrix(z)
    if z.shape[0] != u.shape[0]:
        raise DimensionMismatch(f"{z.shape[0]} rows in z, {u.shape[0]} targets")
    if gram is None:
        pred = model.predict(z)
    else:
        pred = gram @ model.dual_weights
    return u - pred


def _check_lambda(lam: float) -> float:
    if not lam > 0:
        raise NonPositiveLambda(f"lambda must be positive, got {lam}")
    return float(lam)


def prediction_sensitivity(lam: float, n: int) -> float:
    """Largest change of any prediction under a replace-one neighbour."""
    lam = _check_lambda(lam)
    return 8.0 * math.sqrt(2.0) / (lam**1.5 * n) + 8.0 / (lam * n)


def sensitivity_gcm(lam: float) -> float:
    """l1 bound on the change of the residual-product vector (both columns in [-1, 1])."""
    lam = _check_lambda(lam)
    r = math.sqrt(2.0) / math.sqrt(lam)
    return 4.0 * (1.0 + r) * (1.0 + r + 4.0 * math.sqrt(2.0) / lam**1.5 + 4.0 / lam)


def sensitivity_crt(lam: float) -> float:
    """Bound on the change of a summed residual-product statistic with exact, [-1, 1] x-residuals."""
    lam = _check_lambda(lam)
    r = math.sqrt(2.0) / math.sqrt(lam)
    return 4.0 * (1.0 + r + 2.0 * math.sqrt(2.0) / lam**1.5 + 2.0 / lam)


@dataclass(frozen=True)
class SensitivityConstants:
    c1: float
    c2: float
    gcm_delta: float
    crt_delta: float

    @classmethod
    def at(cls, lam: float) -> "SensitivityConstants":
        lam = _check_lambda(lam)
        c1 = 2.0 + 2.0 * math.sqrt(2.0) / math.sqrt(lam)
        c2 = 8.0 * math.sqrt(2.0) / lam**1.5 + 8.0 / lam
        return cls(c1, c2, sensitivity_gcm(lam), sensitivity_crt(lam))


def median_distance(z, max_points: int = 1000) -> float:
    """Median pairwise Euclidean distance over the first ``max_points`` rows."""
    z = _as_matrix(z)[:max_points]
    if z.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(z)))
    return med if med > 0 else 1.0


def default_bandwidth_grid(z) -> tuple[float, ...]:
    med = median_distance(z)
    return tuple(med * m for m in BANDWIDTH_MULTIPLIERS)


def default_lambda_grid(floor: float = DEFAULT_LAMBDA_FLOOR) -> tuple[float, ...]:
    return tuple(floor * m for m in LAMBDA_MULTIPLIERS)


def fold_indices(n: int, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Contiguous blocks of a seeded permutation."""
    perm = rng.permutation(n)
    return [np.sort(block) for block in np.array_split(perm, folds)]


def cv_errors(z, targets, lambda_grid, bandwidth_grid, folds, rng) -> np.ndarray:
    """Held-out mean squared error, shape ``(len(lambda_grid), len(bandwidth_grid), k)``.

    ``targets`` is an ``(n, k)`` matrix; all columns share the fold split.
    """
    z = _as_matrix(z)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
    n = z.shape[0]
    blocks = fold_indices(n, folds, rng)
    err = np.zeros((len(lambda_grid), len(bandwidth_grid), targets.shape[1]))
    for j, h in enumerate(bandwidth_grid):
        full = gaussian_gram(z, z, KernelConfig(h))
        for held in blocks:
            train = np.setdiff1d(np.arange(n), held, assume_unique=True)
            k_tt = full[np.ix_(train, train)]
            k_ht = full[np.ix_(held, train)]
            for i, lam in enumerate(lambda_grid):
                alpha = solve_dual(k_tt, targets[train], lam)
                resid = targets[held] - k_ht @ alpha
                err[i, j] += np.sum(resid**2, axis=0)
    return err / n


def _check_grids(lambda_grid, bandwidth_grid, folds, lambda_floor):
    if len(lambda_grid) == 0 or len(bandwidth_grid) == 0:
        raise EmptyGrid("hyper-parameter grids must be non-empty")
    for lam in lambda_grid:
        if lam < lambda_floor:
            raise LambdaBelowFloor(lam, lambda_floor)
    if folds < 2:
        raise ValueError("need at least two folds")


def cv_select_many(
    z,
    targets,
    lambda_grid: Sequence[float] | None = None,
    bandwidth_grid: Sequence[float] | None = None,
    folds: int = 5,
    rng: np.random.Generator | None = None,
    lambda_floor: float = DEFAULT_LAMBDA_FLOOR,
) -> list[tuple[float, KernelConfig]]:
    """Grid-search cross-validation for each column of ``targets``.

    Ties go to the first grid point in (lambda, bandwidth) order.
    """
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(lambda_floor)
    if bandwidth_grid is None:
        bandwidth_grid = default_bandwidth_grid(z)
    lambda_grid = list(lambda_grid)
    bandwidth_grid = list(bandwidth_grid)
    _check_grids(lambda_grid, bandwidth_grid, folds, lambda_floor)
    if rng is None:
        rng = np.random.default_rng(0)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
    if len(lambda_grid) == 1 and len(bandwidth_grid) == 1:
        return [(float(lambda_grid[0]), KernelConfig(float(bandwidth_grid[0])))] * targets.shape[1]
    err = cv_errors(z, targets, lambda_grid, bandwidth_grid, folds, rng)
    picks = []
    for col in range(targets.shape[1]):
        i, j = np.unravel_index(int(np.argmin(err[:, :, col])), err.shape[:2])
        picks.append((float(lambda_grid[i]), KernelConfig(float(bandwidth_grid[j]))))
    return picks


def cv_select(
    z,
    u,
    lambda_grid: Sequence[float] | None = None,
    bandwidth_grid: Sequence[float] | None = None,
    folds: int = 5,
    rng: np.random.Generator | None = None,
    lambda_floor: float = DEFAULT_LAMBDA_FLOOR,
) -> tuple[float, KernelConfig]:
    """Pick ``(lambda, kernel)`` minimising the mean held-out squared error."""
    u = np.asarray(u, dtype=float).reshape(-1)
    return cv_select_many(z, u, lambda_grid, bandwidth_grid, folds, rng, lambda_floor)[0]
