import math

import numpy as np
import pytest

from privci.crt import (
    CrtResult,
    accuracy_gamma,
    crt_statistic,
    crt_statistics,
    crt_test,
    exact_rank,
    g_gamma,
    priv_crt_test,
)
from privci.errors import DimensionMismatch
from privci.gcm import FitConfig
from privci.krr import sensitivity_crt
from privci.synth import SynthParams, generate, make_conditional_model


class Identity:
    residual_bound = 1.0

    def mean(self, z):
        return np.zeros(len(z))

    def sample(self, z, rng):
        return rng.uniform(-1, 1, len(z))


class Scripted:
    """Returns pre-set copies in order so the ranking can be controlled."""

    residual_bound = 1.0

    def __init__(self, copies):
        self.copies = list(copies)

    def mean(self, z):
        return np.zeros(len(z))

    def sample(self, z, rng):
        return self.copies.pop(0)


FIT = FitConfig(lambda_floor=1e9, fixed_y=(1e9, 1.0))


def test_statistic_examples():
    z = np.zeros((2, 1))
    assert crt_statistic([1.0, -1.0], Identity(), [0.5, 0.5], z) == 0.0
    assert crt_statistic([1.0, 1.0], Identity(), [0.5, 0.5], z) == 1.0
    assert crt_statistic([0.0, 0.0], Identity(), [0.3, -0.9], z) == 0.0
    assert crt_statistic([0.4, 0.9], Identity(), [0.0, 0.0], z) == 0.0
    with pytest.raises(DimensionMismatch):
        crt_statistic([1.0, 1.0, 1.0], Identity(), [0.5, 0.5], np.zeros((3, 1)))


def test_exact_rank():
    assert exact_rank([5.0, 1.0, 2.0]) == 0
    assert exact_rank([0.0, 1.0, 2.0]) == 2
    assert exact_rank([1.0, 1.0, 0.0]) == 1


def _data(n=20, y=1.0):
    from privci.dataset import BoundedDataset, Dataset

    return BoundedDataset(Dataset(np.full(n, 0.5), np.full(n, y), np.zeros((n, 1))), 1.0, 1.0)


def test_top_and_bottom_rank():
    m = 4
    top = crt_test(_data(), Scripted([np.zeros(20)] * m), m, np.random.default_rng(0), FIT)
    assert top.rank == 0 and top.p_value == 1 / (m + 1)
    bottom = crt_test(_data(), Scripted([np.ones(20)] * m), m, np.random.default_rng(0), FIT)
    assert bottom.rank == m and bottom.p_value == 1.0
    assert len(bottom.statistics) == m + 1


def test_private_infinite_epsilon_matches_exact():
    ds, gt = generate(SynthParams(300, beta=0.5), np.random.default_rng(1))
    cond = make_conditional_model(gt, 300)
    for seed in range(10):
        a = crt_test(ds, cond, 19, np.random.default_rng(seed))
        b = priv_crt_test(ds, cond, 19, math.inf, np.random.default_rng(seed), retain_statistics=True)
        np.testing.assert_array_equal(a.statistics, b.statistics)
        assert a.p_value == b.p_value


def test_private_lattice_and_delta():
    ds, gt = generate(SynthParams(200), np.random.default_rng(1))
    cond = make_conditional_model(gt, 200)
    for seed in range(20):
        res = priv_crt_test(ds, cond, 9, 1.0, np.random.default_rng(seed), FitConfig(lambda_floor=20.0))
        assert res.delta_t == sensitivity_crt(20.0)
        assert res.statistics is None
        assert 0 <= res.rank <= 9
        assert res.p_value == (1 + res.rank) / 10


def test_g_fitted_once(monkeypatch):
    import privci.crt as crt_mod

    calls = []
    real = crt_mod.fit_regressions

    def spy(*args, **kwargs):
        calls.append(1)
        return real(*args, **kwargs)

    monkeypatch.setattr(crt_mod, "fit_regressions", spy)
    ds, gt = generate(SynthParams(100), np.random.default_rng(1))
    crt_statistics(ds, make_conditional_model(gt, 100), 49, np.random.default_rng(0), FitConfig())
    assert len(calls) == 1


def test_copies_independent_of_schedule():
    ds, gt = generate(SynthParams(100), np.random.default_rng(1))
    cond = make_conditional_model(gt, 100)
    a, _ = crt_statistics(ds, cond, 5, np.random.default_rng(3), FIT)
    b, _ = crt_statistics(ds, cond, 5, np.random.default_rng(3), FIT)
    np.testing.assert_array_equal(a, b)


def test_accuracy_helpers():
    assert accuracy_gamma(2.0, 19, 0.05, 2.0) == pytest.approx(4 * math.log(380))
    assert g_gamma([0.0, 0.5, -0.5, 3.0], 0.5) == 2
    r = CrtResult(0.5, 1, 1, np.array([2.0, 3.0]))
    assert r.statistic == 2.0
