"""Model-X conditional randomization test and its private variant."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .dataset import BoundedDataset
from .errors import DimensionMismatch
from .gcm import FitConfig, fit_regressions
from .krr import sensitivity_crt
from .mechanisms import private_rank


class ConditionalModel(Protocol):
    """Known law of X given Z, evaluated row-wise on an ``(n, d)`` matrix.

    ``|x - mean(z)| <= residual_bound`` must hold for every draw of ``sample``.
    """

    residual_bound: float

    def sample(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...

    def mean(self, z: np.ndarray) -> np.ndarray: ...


def x_residuals(x, cond: ConditionalModel, z) -> np.ndarray:
    """Exact x-residuals divided by the model's bound and clipped to [-1, 1].

    ``x`` may hold several copies, one per row.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(cond.mean(z), dtype=float)
    if x.shape[-1] != mean.shape[0]:
        raise DimensionMismatch(f"{x.shape[-1]} samples vs {mean.shape[0]} rows of z")
    return np.clip((x - mean) / cond.residual_bound, -1.0, 1.0)


def crt_statistic(x, cond: ConditionalModel, y_residuals, z) -> float:
    """Sum of products of exact x-residuals and fitted y-residuals."""
    ry = np.asarray(y_residuals, dtype=float).reshape(-1)
    rx = x_residuals(np.asarray(x, dtype=float).reshape(-1), cond, z)
    if rx.shape != ry.shape:
        raise DimensionMismatch(f"{rx.shape} vs {ry.shape}")
    return float(rx @ ry)


@dataclass(frozen=True)
class CrtResult:
    p_value: float
    rank: int
    m: int
    statistics: np.ndarray | None = None
    delta_t: float | None = None
    epsilon: float | None = None
    lambda_y: float | None = None

    @property
    def statistic(self) -> float | None:
        return None if self.statistics is None else float(self.statistics[0])


def exact_rank(statistics) -> int:
    """Number of resampled statistics at least as large as the observed one."""
    t = np.asarray(statistics, dtype=float)
    return int(np.count_nonzero(t[1:] >= t[0]))


def crt_statistics(ds: BoundedDataset, cond: ConditionalModel, m: int, rng, fit: FitConfig):
    """Observed statistic followed by ``m`` resampled ones.

    The y-regression is fitted once, on ``(z, y)`` only, and shared by all
    copies. Each copy draws from its own child generator.
    Returns ``(statistics, lambda_y)``.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    ((mg, gram),) = fit_regressions(ds.z, ds.y, fit, rng, (fit.fixed_y,))
    ry = ds.y - gram @ mg.dual_weights
    children = rng.spawn(m)
    copies = np.empty((m + 1, ds.n))
    copies[0] = ds.x
    for j, child in enumerate(children, start=1):
        copies[j] = cond.sample(ds.z, child)
    stats = x_residuals(copies, cond, ds.z) @ ry
    return stats, mg.lam


def crt_test(
    ds: BoundedDataset,
    cond: ConditionalModel,
    m: int = 19,
    rng=None,
    fit: FitConfig | None = None,
) -> CrtResult:
    """Non-private CRT with p-value ``(1 + c*) / (m + 1)``."""
    fit = fit or FitConfig()
    rng = rng if rng is not None else np.random.default_rng()
    stats, lam_y = crt_statistics(ds, cond, m, rng, fit)
    c = exact_rank(stats)
    return CrtResult((1 + c) / (m + 1), c, m, stats, lambda_y=lam_y)


def priv_crt_test(
    ds: BoundedDataset,
    cond: ConditionalModel,
    m: int = 19,
    epsilon: float = 1.0,
    rng=None,
    fit: FitConfig | None = None,
    retain_statistics: bool = False,
) -> CrtResult:
    """epsilon-DP CRT: the rank of the observed statistic is chosen by Report Noisy Max."""
    fit = fit or FitConfig()
    rng = rng if rng is not None else np.random.default_rng()
    delta_t = sensitivity_crt(fit.lambda_floor)
    stats, lam_y = crt_statistics(ds, cond, m, rng, fit)
    c = private_rank(stats, 0, delta_t, epsilon, rng)
    return CrtResult(
        (1 + c) / (m + 1),
        c,
        m,
        stats if retain_statistics else None,
        delta_t=delta_t,
        epsilon=epsilon,
        lambda_y=lam_y,
    )


def accuracy_gamma(delta_t: float, m: int, delta: float, epsilon: float) -> float:
    """``gamma = 4 delta_t ln(m / delta) / epsilon``."""
    return 4.0 * delta_t * math.log(m / delta) / epsilon


def g_gamma(statistics, gamma: float) -> int:
    """Count of resampled statistics within ``gamma`` of the observed one."""
    t = np.asarray(statistics, dtype=float)
    return int(np.count_nonzero(np.abs(t[1:] - t[0]) <= gamma))
