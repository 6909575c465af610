import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flagquer.estimate import (
    Estimate,
    EstimationError,
    Moments,
    accumulate,
    combined_se,
    resolve_threads,
    sphere_average,
)
from flagquer.sampling import block_rng


def _normal_kernel(seed, scale=1.0, loc=5.0):
    def kernel(block, size):
        x = loc + scale * block_rng(seed, 99, block).standard_normal(size)
        return x, np.ones(size, dtype=bool)

    return kernel


def test_moments_match_numpy():
    x = np.random.default_rng(0).exponential(size=(10_000, 2))
    m = Moments(2, x[:100].mean(axis=0))
    m.add(x[:5000], np.ones(5000, dtype=bool))
    m.add(x[5000:], np.ones(5000, dtype=bool))
    assert np.allclose(m.mean, x.mean(axis=0))
    assert np.allclose(m.cov, np.cov(x.T))
    k = ((x - x.mean(0)) ** 4).mean(0) / x.var(0) ** 2
    assert np.allclose(m.kurtosis(), k)


def test_invalid_rows_are_counted_not_averaged():
    m = Moments(1, np.zeros(1))
    vals = np.array([[1.0], [1e300], [3.0]])
    m.add(vals, np.array([True, False, True]))
    assert m.count == 2 and m.rejected == 1 and m.mean[0] == pytest.approx(2.0)


@given(st.floats(-3.0, 3.0).filter(lambda p: abs(p) > 0.05))
def test_delta_method_power(p):
    mom = accumulate(_normal_kernel(1), 10_000, threads=1)
    est = mom.estimate("q", 1, power=p)
    m, se = mom.mean[0], mom.std_error[0]
    assert est.mean == pytest.approx(m**p)
    assert est.std_error == pytest.approx(abs(p) * m ** (p - 1) * se)
    assert est.raw_mean == pytest.approx(m) and "delta-method" in est.transform_note


def test_delta_gradient_matches_power():
    mom = accumulate(_normal_kernel(2), 8192, threads=1)
    p = 1 / 6
    m = mom.mean[0]
    assert mom.delta(m**p, [p * m ** (p - 1)]) == pytest.approx(mom.estimate("q", 2, power=p).std_error)


def test_root_of_nonpositive_mean_rejected():
    mom = accumulate(_normal_kernel(3, loc=-5.0), 100, threads=1)
    with pytest.raises(EstimationError, match="non-positive"):
        mom.estimate("q", 3, power=0.5)


def test_thread_count_does_not_change_results():
    a = accumulate(_normal_kernel(4), 50_000, threads=1).estimate("q", 4)
    b = accumulate(_normal_kernel(4), 50_000, threads=3).estimate("q", 4)
    assert a == b


def test_se_shrinks_like_root_n():
    a = accumulate(_normal_kernel(5, scale=2.0), 40_000, threads=1).estimate("q", 5)
    b = accumulate(_normal_kernel(6, scale=2.0), 160_000, threads=1).estimate("q", 6)
    assert a.std_error / b.std_error == pytest.approx(2.0, rel=0.05)
    assert a.std_error == pytest.approx(2.0 / math.sqrt(40_000), rel=0.05)


def test_too_many_rejections_raise():
    def kernel(block, size):
        ok = np.ones(size, dtype=bool)
        ok[:5] = False
        return np.ones(size), ok

    with pytest.raises(EstimationError, match="degenerate"):
        accumulate(kernel, 10_000, threads=1)
    with pytest.raises(EstimationError, match="at least 2"):
        accumulate(kernel, 1)


def test_heavy_tails_are_flagged():
    def kernel(block, size):
        x = np.ones(size)
        if block == 0:
            x[0] = 1e6
        return x, np.ones(size, dtype=bool)

    est = accumulate(kernel, 8192, threads=1).estimate("q", 0)
    assert est.unstable
    assert not accumulate(_normal_kernel(7), 8192, threads=1).estimate("q", 0).unstable


def test_sphere_average_of_coordinate_square():
    est = sphere_average(lambda th: th[:, 0] ** 2, 3, 100_000, seed=1)
    assert abs(est.mean - 1 / 3) < 4 * est.std_error


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv("FLAGQUER_THREADS", "3")
    assert resolve_threads() == 3
    assert resolve_threads(2) == 2
    monkeypatch.delenv("FLAGQUER_THREADS")
    assert resolve_threads() >= 1


def test_estimate_serialisation():
    e = Estimate("q", 1.5, 0.1, 100, 7, params={"body": {"type": "cube"}})
    d = e.to_dict()
    assert d["mean"] == 1.5 and d["body"] == {"type": "cube"}
    assert "+/-" in str(e) and "seed=7" in str(e)
    assert combined_se(e, e) == pytest.approx(0.1 * math.sqrt(2))
