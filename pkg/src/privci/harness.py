"""Monte Carlo experiment runner, rejection-rate summaries and sensitivity audit."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .crt import crt_test, priv_crt_test
from .errors import EmptyInput, InvalidConfig, OffLatticeValue, PrivCIError
from .gcm import FitConfig, gcm_test, priv_gcm_test
from .krr import (
    DEFAULT_LAMBDA_FLOOR,
    KernelConfig,
    cv_select_many,
    gaussian_gram,
    krr_fit,
    prediction_sensitivity,
    sensitivity_crt,
    sensitivity_gcm,
)
from .rng import derive_rng
from .synth import SynthParams, generate, make_conditional_model

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TESTS = ("gcm", "priv_gcm", "crt", "priv_crt")
PRIVATE_TESTS = ("priv_gcm", "priv_crt")
CRT_TESTS = ("crt", "priv_crt")
# hyper-parameters for --fixed-hyperparams come from one pilot dataset of at most this size
PILOT_MAX_N = 2000
Z_95 = 1.959963984540054

CSV_FIELDS = (
    "schema_version",
    "test",
    "n",
    "d",
    "s",
    "beta",
    "epsilon",
    "m",
    "trials",
    "failures",
    "rejections",
    "rejection_rate",
    "ci_low",
    "ci_high",
    "mean_statistic",
    "var_statistic",
    "lambda_x",
    "bandwidth_x",
    "lambda_y",
    "bandwidth_y",
)


def wilson_interval(k: int, n: int, z: float = Z_95) -> tuple[float, float]:
    if n <= 0:
        raise EmptyInput("no trials")
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def rejection_rate(p_values: Sequence[float], alpha: float) -> tuple[float, float, float]:
    """Fraction of p-values at or below ``alpha`` with its Wilson 95% interval."""
    p = np.asarray(p_values, dtype=float).reshape(-1)
    if p.size == 0:
        raise EmptyInput("no p-values")
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    k = int(np.count_nonzero(p <= alpha))
    lo, hi = wilson_interval(k, p.size)
    rate = k / p.size
    return rate, min(lo, rate), max(hi, rate)


@dataclass(frozen=True)
class UniformityResult:
    statistic: float
    p_value: float
    passed: bool
    counts: tuple[int, ...]


def uniformity_check(p_values: Sequence[float], m: int, level: float = 0.01) -> UniformityResult:
    """Chi-square goodness of fit of CRT p-values to the uniform law on ``{1/(m+1), ..., 1}``."""
    p = np.asarray(p_values, dtype=float).reshape(-1)
    if p.size == 0:
        raise EmptyInput("no p-values")
    pos = p * (m + 1) - 1
    idx = np.rint(pos).astype(int)
    for value, i, raw in zip(p, idx, pos):
        if not (0 <= i <= m) or abs(raw - i) > 1e-6:
            raise OffLatticeValue(float(value), m)
    counts = np.bincount(idx, minlength=m + 1)
    res = stats.chisquare(counts)
    stat = float(res.statistic)
    pval = float(res.pvalue)
    return UniformityResult(stat, pval, pval > level, tuple(int(c) for c in counts))


@dataclass(frozen=True)
class Cell:
    test: str
    n: int
    d: int
    s: float
    beta: float
    epsilon: float | None
    m: int | None

    def key(self) -> tuple:
        return (self.test, self.n, self.d, float(self.s), float(self.beta),
                None if self.epsilon is None else float(self.epsilon), self.m)


@dataclass
class ExperimentConfig:
    test: str
    n: Sequence[int] = (1000,)
    d: Sequence[int] = (1,)
    s: Sequence[float] = (2.0,)
    beta: Sequence[float] = (0.0,)
    epsilon: Sequence[float] | None = None
    m: Sequence[int] | None = None
    trials: int = 100
    alpha: float = 0.05
    seed: int = 0
    lambda_floor: float = DEFAULT_LAMBDA_FLOOR
    split_mode: bool = False
    bound_c: float = 4.0
    clip: bool = True
    fixed_hyperparams: bool = False
    exclude_failures: bool = False
    retain_p_values: bool = False
    output: str | Path | None = None
    format: str = "json"

    def validate(self) -> None:
        if self.test not in TESTS:
            raise InvalidConfig(f"unknown test {self.test!r}; choose from {TESTS}")
        if self.trials < 1:
            raise InvalidConfig("trials must be at least 1")
        if not 0 < self.alpha < 1:
            raise InvalidConfig("alpha must lie in (0, 1)")
        if self.format not in ("json", "csv"):
            raise InvalidConfig("format must be json or csv")
        private = self.test in PRIVATE_TESTS
        if private and not self.epsilon:
            raise InvalidConfig(f"{self.test} needs at least one epsilon")
        if not private and self.epsilon:
            raise InvalidConfig(f"{self.test} takes no epsilon")
        if self.test in CRT_TESTS and not self.m:
            raise InvalidConfig(f"{self.test} needs at least one m")
        if self.test not in CRT_TESTS and self.m:
            raise InvalidConfig(f"{self.test} takes no m")
        if self.split_mode and self.test in CRT_TESTS:
            raise InvalidConfig("split mode applies to the GCM tests only")
        for name in ("n", "d", "s", "beta"):
            if not list(getattr(self, name)):
                raise InvalidConfig(f"empty grid for {name}")
        if any(n < 2 for n in self.n) or any(d < 1 for d in self.d):
            raise InvalidConfig("n must be >= 2 and d >= 1")
        if self.epsilon and any(not e > 0 for e in self.epsilon):
            raise InvalidConfig("epsilon must be positive")
        if self.m and any(m < 1 for m in self.m):
            raise InvalidConfig("m must be >= 1")
        if not self.lambda_floor > 0:
            raise InvalidConfig("lambda floor must be positive")

    def cells(self) -> list[Cell]:
        eps = list(self.epsilon) if self.epsilon else [None]
        ms = list(self.m) if self.m else [None]
        return [
            Cell(self.test, int(n), int(d), float(s), float(b), e, m)
            for n, d, s, b, e, m in itertools.product(self.n, self.d, self.s, self.beta, eps, ms)
        ]


@dataclass
class CellResult:
    test: str
    n: int
    d: int
    s: float
    beta: float
    epsilon: float | None
    m: int | None
    trials: int
    failures: int
    rejections: int
    rejection_rate: float
    ci_low: float
    ci_high: float
    mean_statistic: float | None
    var_statistic: float | None
    lambda_x: float | None = None
    bandwidth_x: float | None = None
    lambda_y: float | None = None
    bandwidth_y: float | None = None
    p_values: list[float | None] | None = None
    statistics: list[float | None] | None = None
    schema_version: int = field(default=SCHEMA_VERSION)

    def to_dict(self) -> dict:
        out = {"schema_version": self.schema_version}
        for k, v in asdict(self).items():
            if k == "schema_version" or (k in ("p_values", "statistics") and v is None):
                continue
            out[k] = v
        return out


@dataclass(frozen=True)
class TrialOutcome:
    p_value: float | None
    statistic: float | None
    error: str | None = None


def _pilot_fit(cell: Cell, cfg: ExperimentConfig) -> FitConfig:
    """Cross-validate once on a pilot dataset and freeze the hyper-parameters."""
    rng = derive_rng(cfg.seed, "pilot", cell.key())
    params = SynthParams(min(cell.n, PILOT_MAX_N), cell.d, cell.s, cell.beta,
                         bound_c=cfg.bound_c, clip=cfg.clip)
    ds, _ = generate(params, rng)
    if cell.test in CRT_TESTS:
        ((lam_y, k_y),) = cv_select_many(ds.z, ds.y, rng=rng, lambda_floor=cfg.lambda_floor)
        return FitConfig(lambda_floor=cfg.lambda_floor, fixed_y=(lam_y, k_y.bandwidth))
    (lam_x, k_x), (lam_y, k_y) = cv_select_many(
        ds.z, np.column_stack([ds.x, ds.y]), rng=rng, lambda_floor=cfg.lambda_floor
    )
    return FitConfig(
        lambda_floor=cfg.lambda_floor,
        fixed_x=(lam_x, k_x.bandwidth),
        fixed_y=(lam_y, k_y.bandwidth),
    )


def run_trial(cell: Cell, cfg: ExperimentConfig, trial: int, fit: FitConfig) -> TrialOutcome:
    """One synthetic dataset and one test; test errors are reported, not raised."""
    rng = derive_rng(cfg.seed, "trial", cell.key(), trial)
    params = SynthParams(cell.n, cell.d, cell.s, cell.beta, bound_c=cfg.bound_c, clip=cfg.clip)
    try:
        ds, gt = generate(params, rng)
        if cell.test == "gcm":
            res = gcm_test(ds, fit, rng, split=cfg.split_mode)
            return TrialOutcome(res.p_value, res.statistic)
        if cell.test == "priv_gcm":
            res = priv_gcm_test(ds, cell.epsilon, fit, rng, split=cfg.split_mode)
            return TrialOutcome(res.p_value, res.statistic)
        cond = make_conditional_model(gt, cell.n)
        if cell.test == "crt":
            res = crt_test(ds, cond, cell.m, rng, fit)
        else:
            res = priv_crt_test(ds, cond, cell.m, cell.epsilon, rng, fit, retain_statistics=True)
        return TrialOutcome(res.p_value, res.statistic)
    except PrivCIError as exc:
        log.warning("trial %d of %s failed: %s", trial, cell, exc)
        return TrialOutcome(None, None, f"{type(exc).__name__}: {exc}")


def run_cell(cell: Cell, cfg: ExperimentConfig) -> CellResult:
    fit = _pilot_fit(cell, cfg) if cfg.fixed_hyperparams else FitConfig(lambda_floor=cfg.lambda_floor)
    outcomes = [run_trial(cell, cfg, t, fit) for t in range(cfg.trials)]
    ok = [o for o in outcomes if o.error is None]
    failures = len(outcomes) - len(ok)
    rejections = sum(1 for o in ok if o.p_value <= cfg.alpha)
    denom = len(ok) if cfg.exclude_failures else len(outcomes)
    if denom == 0:
        rate, lo, hi = 0.0, 0.0, 1.0
    else:
        rate = rejections / denom
        lo, hi = wilson_interval(rejections, denom)
        lo, hi = min(lo, rate), max(hi, rate)
    stat = np.array([o.statistic for o in ok], dtype=float)
    mean = float(stat.mean()) if stat.size else None
    var = float(stat.var(ddof=1)) if stat.size > 1 else None
    fx = fit.fixed_x or (None, None)
    fy = fit.fixed_y or (None, None)
    return CellResult(
        test=cell.test,
        n=cell.n,
        d=cell.d,
        s=cell.s,
        beta=cell.beta,
        epsilon=cell.epsilon,
        m=cell.m,
        trials=len(outcomes),
        failures=failures,
        rejections=rejections,
        rejection_rate=rate,
        ci_low=lo,
        ci_high=hi,
        mean_statistic=mean,
        var_statistic=var,
        lambda_x=fx[0],
        bandwidth_x=fx[1],
        lambda_y=fy[0],
        bandwidth_y=fy[1],
        p_values=[o.p_value for o in outcomes] if cfg.retain_p_values else None,
        statistics=[o.statistic for o in outcomes] if cfg.retain_p_values else None,
    )


def run_experiment(cfg: ExperimentConfig) -> list[CellResult]:
    """Run every grid cell and write the results if ``cfg.output`` is set."""
    cfg.validate()
    results = []
    for cell in cfg.cells():
        log.info("running %s", cell)
        results.append(run_cell(cell, cfg))
    if cfg.output is not None:
        write_results(results, cfg.output, cfg.format)
    return results


def dumps_results(results: Sequence[CellResult], fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps([r.to_dict() for r in results], indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in results:
            row = r.to_dict()
            writer.writerow({k: "" if row.get(k) is None else row[k] for k in CSV_FIELDS})
        return buf.getvalue()
    raise InvalidConfig(f"unknown format {fmt!r}")


def write_results(results: Sequence[CellResult], path: str | Path, fmt: str = "json") -> None:
    Path(path).write_text(dumps_results(results, fmt), encoding="utf-8")


@dataclass(frozen=True)
class AuditRow:
    n: int
    lam: float
    pairs: int
    gcm_bound: float
    max_gcm: float
    gcm_violations: int
    crt_bound: float
    max_crt: float
    crt_violations: int
    pred_bound: float
    max_pred: float
    pred_violations: int

    @property
    def gcm_ratio(self) -> float:
        return self.max_gcm / self.gcm_bound

    @property
    def crt_ratio(self) -> float:
        return self.max_crt / self.crt_bound

    @property
    def pred_ratio(self) -> float:
        return self.max_pred / self.pred_bound

    @property
    def violations(self) -> int:
        return self.gcm_violations + self.crt_violations + self.pred_violations


def _audit_base(n, d, rng):
    z = rng.normal(size=(n, d))
    if rng.random() < 1 / 3:
        x = rng.choice([-1.0, 1.0], size=n)
        y = rng.choice([-1.0, 1.0], size=n)
        rx = rng.choice([-1.0, 1.0], size=n)
    else:
        x = rng.uniform(-1, 1, n)
        y = rng.uniform(-1, 1, n)
        rx = rng.uniform(-1, 1, n)
    return z, x, y, rx


def _audit_neighbour(z, x, y, rx, rng):
    """Replace one row, either by a fresh draw or by its sign-flipped extreme."""
    z2, x2, y2, rx2 = z.copy(), x.copy(), y.copy(), rx.copy()
    i = int(rng.integers(z.shape[0]))
    if rng.random() < 0.5:
        z2[i] = rng.normal(size=z.shape[1])
        x2[i], y2[i], rx2[i] = rng.uniform(-1, 1, 3)
    else:
        z2[i] = z[i] + rng.normal(scale=0.1, size=z.shape[1])
        x2[i] = -1.0 if x[i] >= 0 else 1.0
        y2[i] = -1.0 if y[i] >= 0 else 1.0
        rx2[i] = -1.0 if rx[i] >= 0 else 1.0
    return z2, x2, y2, rx2


def _fit_xy(z, x, y, lam, cfg):
    gram = gaussian_gram(z, z, cfg)
    return krr_fit(z, x, lam, cfg, gram), krr_fit(z, y, lam, cfg, gram), gram


def sensitivity_audit(
    lambdas: Sequence[float],
    n_list: Sequence[int],
    trials: int,
    rng: np.random.Generator,
    d: int = 1,
    bandwidths: Sequence[float] = (0.25, 1.0, 4.0),
) -> list[AuditRow]:
    """Compare observed neighbour changes with the analytic sensitivity bounds.

    For every ``(n, lambda)`` it draws ``trials`` random bounded datasets and
    replace-one-row neighbours, refits both regressions and records the
    residual-product l1 change, the change of the summed CRT statistic (with
    exact x-residuals in [-1, 1]) and the largest prediction change.
    """
    rows = []
    tol = 1e-12
    for n in n_list:
        for lam in lambdas:
            gb, cb, pb = sensitivity_gcm(lam), sensitivity_crt(lam), prediction_sensitivity(lam, n)
            gmax = cmax = pmax = 0.0
            gv = cv = pv = 0
            for _ in range(trials):
                cfg = KernelConfig(float(rng.choice(bandwidths)))
                z, x, y, rx = _audit_base(n, d, rng)
                z2, x2, y2, rx2 = _audit_neighbour(z, x, y, rx, rng)
                f1, g1, k1 = _fit_xy(z, x, y, lam, cfg)
                f2, g2, k2 = _fit_xy(z2, x2, y2, lam, cfg)
                ry1 = y - k1 @ g1.dual_weights
                ry2 = y2 - k2 @ g2.dual_weights
                r1 = (x - k1 @ f1.dual_weights) * ry1
                r2 = (x2 - k2 @ f2.dual_weights) * ry2
                dg = float(np.abs(r1 - r2).sum())
                dc = abs(float(rx @ ry1) - float(rx2 @ ry2))
                pts = np.vstack([z, z2])
                dp = max(
                    float(np.max(np.abs(f1.predict(pts) - f2.predict(pts)))),
                    float(np.max(np.abs(g1.predict(pts) - g2.predict(pts)))),
                )
                gmax, cmax, pmax = max(gmax, dg), max(cmax, dc), max(pmax, dp)
                gv += dg > gb * (1 + tol)
                cv += dc > cb * (1 + tol)
                pv += dp > pb * (1 + tol)
            rows.append(AuditRow(n, float(lam), trials, gb, gmax, gv, cb, cmax, cv, pb, pmax, pv))
    return rows


def audit_to_dicts(rows: Sequence[AuditRow]) -> list[dict]:
    out = []
    for r in rows:
        d = {"schema_version": SCHEMA_VERSION}
        d.update(asdict(r))
        d.update(gcm_ratio=r.gcm_ratio, crt_ratio=r.crt_ratio, pred_ratio=r.pred_ratio)
        out.append(d)
    return out
