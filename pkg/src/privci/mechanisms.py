"""Differential-privacy primitives.

All functions draw randomness only from the generator they are given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyScores, IndexOutOfRange


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    sensitivity: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.sensitivity > 0:
            raise ValueError("sensitivity must be positive")

    @property
    def scale(self) -> float:
        """Laplace scale ``sensitivity / epsilon``; 0 when epsilon is infinite."""
        return self.sensitivity / self.epsilon


def laplace_noise(scale: float, size, rng: np.random.Generator) -> np.ndarray:
    """Laplace(0, scale) draws by inverting the CDF of one uniform per draw."""
    u = rng.random(size)
    # u == 0 would map to an infinite draw
    u = np.maximum(u, np.finfo(float).tiny)
    w = u - 0.5
    return -scale * np.sign(w) * np.log1p(-2.0 * np.abs(w))


def laplace_cdf(x, scale: float):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 0.5 * np.exp(x / scale), 1.0 - 0.5 * np.exp(-x / scale))


def laplace_mechanism(values, pp: PrivacyParams, rng: np.random.Generator) -> np.ndarray:
    """Return ``values + W`` with i.i.d. ``W_i ~ Laplace(0, sensitivity / epsilon)``."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    return values + laplace_noise(pp.scale, values.shape, rng)


def report_noisy_max(scores, epsilon: float, rng: np.random.Generator) -> int:
    """Index of ``max_i (scores_i + E_i)`` with ``E_i`` exponential of mean ``2 / epsilon``.

    The scores must come from a score function of sensitivity at most one.
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if scores.size == 0:
        raise EmptyScores("no candidates")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    noise = rng.exponential(2.0 / epsilon, size=scores.size)
    return int(np.argmax(scores + noise))


@dataclass(frozen=True)
class RankScores:
    scores: np.ndarray
    target_index: int
    delta_t: float
    sorted_values: np.ndarray


def rank_scores(values, k: int, delta_t: float) -> RankScores:
    """Score of each candidate rank ``c`` for the query ``values[k]``.

    ``score_c = -|Q_c - values[k]| / (2 delta_t)`` where ``Q`` is ``values``
    sorted in decreasing order (stable on the original index).
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if not 0 <= k < values.size:
        raise IndexOutOfRange(f"k={k} outside [0, {values.size - 1}]")
    if not delta_t > 0:
        raise ValueError("delta_t must be positive")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    order = np.argsort(-values, kind="stable")
    q = values[order]
    scores = -np.abs(q - values[k]) / (2.0 * delta_t)
    return RankScores(scores, int(k), float(delta_t), q)


def private_rank(values, k: int, delta_t: float, epsilon: float, rng: np.random.Generator) -> int:
    """Differentially private estimate of the rank of ``values[k]`` in decreasing order."""
    rs = rank_scores(values, k, delta_t)
    return report_noisy_max(rs.scores, epsilon, rng)


def rnm_utility_margin(num_candidates: int, epsilon: float, delta: float) -> float:
    """Score loss ``2 ln(B / delta) / epsilon`` exceeded with probability at most ``delta``."""
    return 2.0 * math.log(num_candidates / delta) / epsilon
