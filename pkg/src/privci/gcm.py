"""Generalised covariance measure: non-private test and the Laplace-noised version."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import BoundedDataset
from .errors import DegenerateVariance, LambdaBelowFloor
from .krr import (
    DEFAULT_LAMBDA_FLOOR,
    KernelConfig,
    KrrModel,
    cv_select_many,
    gaussian_gram,
    krr_fit,
    sensitivity_gcm,
)
from .mechanisms import PrivacyParams, laplace_mechanism

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """How the two regressions on ``z`` are fitted.

    Without ``fixed_x``/``fixed_y`` the hyper-parameters are picked by
    ``folds``-fold cross-validation over the grids (``None`` means the default
    grids). Sensitivity constants always use ``lambda_floor``.
    """

    lambda_floor: float = DEFAULT_LAMBDA_FLOOR
    lambda_grid: tuple[float, ...] | None = None
    bandwidth_grid: tuple[float, ...] | None = None
    folds: int = 5
    fixed_x: tuple[float, float] | None = None
    fixed_y: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.lambda_floor > 0:
            raise ValueError("lambda_floor must be positive")
        for fixed in (self.fixed_x, self.fixed_y):
            if fixed is not None and fixed[0] < self.lambda_floor:
                raise LambdaBelowFloor(fixed[0], self.lambda_floor)


def fit_regressions(z, targets, fit: FitConfig, rng, fixed) -> list[tuple[KrrModel, np.ndarray]]:
    """Fit one model per column of ``targets``.

    ``fixed`` holds a ``(lambda, bandwidth)`` pair or ``None`` per column;
    the ``None`` columns are cross-validated together. Returns each model with
    its training Gram matrix so in-sample predictions need no recomputation.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
    hypers: list[tuple[float, KernelConfig] | None] = [
        None if f is None else (float(f[0]), KernelConfig(float(f[1]))) for f in fixed
    ]
    todo = [j for j, h in enumerate(hypers) if h is None]
    if todo:
        picks = cv_select_many(
            z,
            targets[:, todo],
            fit.lambda_grid,
            fit.bandwidth_grid,
            fit.folds,
            rng,
            fit.lambda_floor,
        )
        for j, pick in zip(todo, picks):
            hypers[j] = pick
    grams: dict[float, np.ndarray] = {}
    out = []
    for j, (lam, cfg) in enumerate(hypers):
        if cfg.bandwidth not in grams:
            grams[cfg.bandwidth] = gaussian_gram(z, z, cfg)
        gram = grams[cfg.bandwidth]
        out.append((krr_fit(z, targets[:, j], lam, cfg, gram=gram), gram))
    return out


def residual_products(ds: BoundedDataset, fit: FitConfig, rng, split: bool = False):
    """Products of the x-on-z and y-on-z residuals.

    In split mode the regressions are fitted on the first half of the rows and
    the products are computed on the second half.
    Returns ``(R, model_f, model_g)``.
    """
    z, x, y = ds.z, ds.x, ds.y
    if split:
        half = ds.n // 2
        if half < 2 or ds.n - half < 2:
            raise ValueError("split mode needs at least 4 rows")
        (mf, _), (mg, _) = fit_regressions(
            z[:half], np.column_stack([x[:half], y[:half]]), fit, rng, (fit.fixed_x, fit.fixed_y)
        )
        zt = z[half:]
        rx = x[half:] - mf.predict(zt)
        ry = y[half:] - mg.predict(zt)
    else:
        (mf, gf), (mg, gg) = fit_regressions(
            z, np.column_stack([x, y]), fit, rng, (fit.fixed_x, fit.fixed_y)
        )
        rx = x - gf @ mf.dual_weights
        ry = y - gg @ mg.dual_weights
    return rx * ry, mf, mg


def normal_cdf(t: float) -> float:
    """Standard normal CDF."""
    return 0.5 * math.erfc(-t / math.sqrt(2.0))


def two_sided_p_value(t: float) -> float:
    """``2 (1 - Phi(|t|))``, evaluated through erfc to keep tail precision."""
    p = math.erfc(abs(t) / math.sqrt(2.0))
    return min(max(p, 0.0), 1.0)


def gcm_statistic(r) -> float:
    """Normalised mean of residual products.

    ``T = n^{-1/2} sum R_i / sqrt(mean(R^2) - mean(R)^2)``. Raises
    :class:`DegenerateVariance` when the denominator is below ``1e-12`` times
    the root mean square of ``r``.
    """
    r = np.asarray(r, dtype=float).reshape(-1)
    n = r.size
    if n < 2:
        raise ValueError("need at least two residual products")
    mean = r.mean()
    rms = math.sqrt(float(np.mean(r * r)))
    sd = math.sqrt(float(np.mean((r - mean) ** 2)))
    if rms == 0.0 or sd <= DEGENERATE_TOL * rms:
        raise DegenerateVariance(f"residual products have (near) zero variance: sd={sd}")
    return float(math.sqrt(n) * mean / sd)


@dataclass(frozen=True)
class GcmResult:
    statistic: float
    p_value: float
    noise_scale: float
    lambda_used: float
    n: int
    lambda_x: float
    lambda_y: float
    private: bool


def _result(stat, noise_scale, fit, n, mf, mg, private) -> GcmResult:
    return GcmResult(
        statistic=stat,
        p_value=two_sided_p_value(stat),
        noise_scale=noise_scale,
        lambda_used=fit.lambda_floor,
        n=n,
        lambda_x=mf.lam,
        lambda_y=mg.lam,
        private=private,
    )


def gcm_test(ds: BoundedDataset, fit: FitConfig | None = None, rng=None, split: bool = False) -> GcmResult:
    """Non-private GCM test with a two-sided Gaussian p-value."""
    fit = fit or FitConfig()
    rng = rng if rng is not None else np.random.default_rng()
    r, mf, mg = residual_products(ds, fit, rng, split)
    return _result(gcm_statistic(r), 0.0, fit, r.size, mf, mg, private=False)


def priv_gcm_test(
    ds: BoundedDataset,
    epsilon: float,
    fit: FitConfig | None = None,
    rng=None,
    split: bool = False,
) -> GcmResult:
    """epsilon-DP GCM test.

    Laplace noise of scale ``sensitivity_gcm(lambda_floor) / epsilon`` is added
    to every residual product; the statistic and p-value are post-processing.
    ``ds`` must already be rescaled to the unit box.
    """
    fit = fit or FitConfig()
    rng = rng if rng is not None else np.random.default_rng()
    pp = PrivacyParams(epsilon, sensitivity_gcm(fit.lambda_floor))
    r, mf, mg = residual_products(ds, fit, rng, split)
    noisy = laplace_mechanism(r, pp, rng)
    return _result(gcm_statistic(noisy), pp.scale, fit, r.size, mf, mg, private=True)


def noisy_sigma(sigma: float, epsilon: float, a: float, b: float, lam: float) -> float:
    """``sqrt(sigma^2 + (sqrt(2) a b Delta / epsilon)^2)`` with ``Delta = sensitivity_gcm(lam)``."""
    priv = math.sqrt(2.0) * a * b * sensitivity_gcm(lam) / epsilon
    return math.sqrt(sigma**2 + priv**2)


def power_shift(gt, n: int, epsilon: float, a: float, b: float, lam: float) -> float:
    """Predicted mean of the private statistic under an alternative.

    ``gt`` supplies the signal ``rho`` and noise ``sigma`` of the true
    residual product on the original (unrescaled) scale.
    """
    if gt.rho == 0:
        return 0.0
    return math.sqrt(n) * gt.rho / noisy_sigma(gt.sigma, epsilon, a, b, lam)
