"""Synthetic sine model with known conditional means.

    Z_1..Z_d ~ N(0, var_z),  X = f_s(Z_1) + N_X,  Y = -f_s(Z_1) + N_Y + beta N_X

with standard normal ``N_X``, ``N_Y``. X and Y are independent given Z iff
``beta == 0``. The true residual product ``N_X (N_Y + beta N_X)`` has mean
``beta`` and variance ``1 + 2 beta^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import BoundedDataset, Dataset, infer_bound, rescale
from .krr import KrrModel

DEFAULT_BOUND_C = 4.0


def f_s(z, s: float):
    """``exp(-s^2 / 2) sin(s z)``."""
    return np.exp(-(s**2) / 2.0) * np.sin(s * np.asarray(z, dtype=float))


@dataclass(frozen=True)
class SynthParams:
    n: int
    d: int = 1
    s: float = 2.0
    beta: float = 0.0
    var_z: float = 4.0
    bound_c: float = DEFAULT_BOUND_C
    clip: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.s < 0 or self.beta < 0:
            raise ValueError("s and beta must be non-negative")
        if not self.var_z > 0:
            raise ValueError("var_z must be positive")


@dataclass(frozen=True)
class GroundTruth:
    """Oracle quantities; ``rho`` and ``sigma`` are on the original scale."""

    s: float
    beta: float
    scale_x: float
    scale_y: float
    cond_var_x: float
    cond_var_y: float
    rho: float
    sigma: float
    bound_c: float = DEFAULT_BOUND_C

    @classmethod
    def for_params(cls, s, beta, scale_x, scale_y, bound_c=DEFAULT_BOUND_C) -> "GroundTruth":
        return cls(
            s=float(s),
            beta=float(beta),
            scale_x=float(scale_x),
            scale_y=float(scale_y),
            cond_var_x=1.0,
            cond_var_y=1.0 + beta**2,
            rho=float(beta),
            sigma=math.sqrt(1.0 + 2.0 * beta**2),
            bound_c=float(bound_c),
        )

    def f_P(self, z) -> np.ndarray:
        """E[X | Z] on the rescaled scale."""
        return f_s(np.asarray(z, dtype=float).reshape(len(z), -1)[:, 0], self.s) / self.scale_x

    def g_P(self, z) -> np.ndarray:
        """E[Y | Z] on the rescaled scale (``beta N_X`` has mean zero)."""
        return -f_s(np.asarray(z, dtype=float).reshape(len(z), -1)[:, 0], self.s) / self.scale_y

    @property
    def rho_rescaled(self) -> float:
        return self.rho / (self.scale_x * self.scale_y)

    @property
    def sigma_rescaled(self) -> float:
        return self.sigma / (self.scale_x * self.scale_y)


def generate(p: SynthParams, rng: np.random.Generator) -> tuple[BoundedDataset, GroundTruth]:
    """Draw ``p.n`` samples and rescale x and y by ``sqrt(bound_c ln n)``."""
    z = rng.normal(0.0, math.sqrt(p.var_z), size=(p.n, p.d))
    nx = rng.normal(size=p.n)
    ny = rng.normal(size=p.n)
    fz = f_s(z[:, 0], p.s)
    x = fz + nx
    y = -fz + ny + p.beta * nx
    a = b = infer_bound(p.n, p.bound_c)
    ds = rescale(Dataset(x, y, z), a, b, clip=p.clip)
    return ds, GroundTruth.for_params(p.s, p.beta, a, b, p.bound_c)


@dataclass(frozen=True)
class SynthConditionalModel:
    """X | Z for the sine model, on the scale of a generated dataset.

    Draws are rescaled and clipped exactly as :func:`generate` treats the
    observed column, so observed and resampled copies are exchangeable under
    the null.
    """

    s: float
    scale_x: float
    residual_bound: float = 1.0

    def mean(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(len(z), -1)
        return f_s(z[:, 0], self.s) / self.scale_x

    def sample(self, z, rng: np.random.Generator) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(len(z), -1)
        draw = (f_s(z[:, 0], self.s) + rng.normal(size=z.shape[0])) / self.scale_x
        return np.clip(draw, -1.0, 1.0)


def make_conditional_model(gt: GroundTruth, n: int | None = None) -> SynthConditionalModel:
    """Conditional model matching ``gt``.

    The residual bound is ``sqrt(C ln n)`` in original units, i.e.
    ``sqrt(C ln n) / scale_x`` after rescaling; with the default rescaling
    both equal the same number and the bound is exactly 1.
    """
    if n is None:
        bound = 1.0
    else:
        bound = infer_bound(n, gt.bound_c) / gt.scale_x
    return SynthConditionalModel(gt.s, gt.scale_x, bound)


@dataclass(frozen=True)
class FitDiagnostics:
    a_f: float
    a_g: float
    b_f: float
    b_g: float


def fit_diagnostics(model_f: KrrModel, model_g: KrrModel, gt: GroundTruth, z) -> FitDiagnostics:
    """Mean squared errors of both regressions against the true conditional means.

    Computed on the rescaled scale: ``B_f`` weights by ``Var(Y | Z) / scale_y^2``
    and ``B_g`` by ``Var(X | Z) / scale_x^2``.
    """
    z = np.asarray(z, dtype=float).reshape(len(z), -1)
    ef = (gt.f_P(z) - model_f.predict(z)) ** 2
    eg = (gt.g_P(z) - model_g.predict(z)) ** 2
    u = gt.cond_var_x / gt.scale_x**2
    v = gt.cond_var_y / gt.scale_y**2
    a_f = float(ef.mean())
    a_g = float(eg.mean())
    return FitDiagnostics(a_f=a_f, a_g=a_g, b_f=a_f * v, b_g=a_g * u)
