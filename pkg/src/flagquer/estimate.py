"""Monte Carlo accumulation and the :class:`Estimate` result type.

Samples are processed in fixed-size blocks (see :mod:`flagquer.sampling`).
Each block returns a ``(size, q)`` array of statistics and a validity mask;
blocks are reduced in index order, so the result does not depend on how many
threads evaluated them.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np

from .sampling import BLOCK, blocks, sphere_batch

REJECT_FRACTION = 1e-4
DEGENERATE_VOLUME = 1e-12
DEFAULT_SAMPLES = 200_000

Kernel = Callable[[int, int], tuple[np.ndarray, np.ndarray]]


class EstimationError(RuntimeError):
    """A Monte Carlo run could not produce a trustworthy estimate."""


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("FLAGQUER_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate with its standard error.

    ``transform_note`` records any power applied after averaging; in that case
    ``std_error`` is propagated by the delta method and ``raw_mean`` /
    ``raw_std_error`` describe the plain sample mean.
    """

    quantity: str
    mean: float
    std_error: float
    samples: int
    seed: int
    transform_note: str = ""
    raw_mean: float | None = None
    raw_std_error: float | None = None
    rejected: int = 0
    kurtosis: float | None = None
    unstable: bool = False
    params: dict[str, Any] = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        params = d.pop("params")
        return {**params, **d}

    def __str__(self):
        return f"{self.quantity} = {self.mean:.10g} +/- {self.std_error:.3g} (samples={self.samples}, seed={self.seed})"


class Moments:
    """Shifted power sums of a vector statistic, reduced in block order."""

    def __init__(self, q: int, shift: np.ndarray):
        self.q = q
        self.shift = shift
        self.count = 0
        self.rejected = 0
        self.s1 = np.zeros(q)
        self.s2 = np.zeros((q, q))
        self.s3 = np.zeros(q)
        self.s4 = np.zeros(q)

    def add(self, values: np.ndarray, valid: np.ndarray):
        x = values[valid] - self.shift
        self.count += len(x)
        self.rejected += int((~valid).sum())
        self.s1 += x.sum(axis=0)
        self.s2 += x.T @ x
        self.s3 += (x**3).sum(axis=0)
        self.s4 += (x**4).sum(axis=0)

    @property
    def mean(self) -> np.ndarray:
        return self.shift + self.s1 / self.count

    @property
    def cov(self) -> np.ndarray:
        N = self.count
        if N < 2:
            return np.full((self.q, self.q), np.nan)
        c = (self.s2 - np.outer(self.s1, self.s1) / N) / (N - 1)
        d = np.clip(np.diag(c), 0.0, None)
        np.fill_diagonal(c, d)
        return c

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov) / self.count)

    def kurtosis(self) -> np.ndarray:
        """Pearson kurtosis ``mu_4 / mu_2^2`` of each column (nan if constant)."""
        N = self.count
        m1 = self.s1 / N
        m2 = np.diag(self.s2) / N - m1**2
        m4 = self.s4 / N - 4 * m1 * self.s3 / N + 6 * m1**2 * np.diag(self.s2) / N - 3 * m1**4
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(m2 > 1e-300, m4 / m2**2, np.nan)

    def unstable(self, col: int = 0) -> bool:
        """True when the variance itself is too noisy to trust the standard error.

        The relative variance of the sample variance is about ``(kappa - 1) / N``;
        runs where that exceeds 1/4 are flagged.
        """
        k = self.kurtosis()[col]
        return bool(np.isfinite(k) and (k - 1.0) / self.count > 0.25)

    def estimate(
        self,
        quantity: str,
        seed: int,
        col: int = 0,
        power: float | None = None,
        params: dict | None = None,
    ) -> Estimate:
        m = float(self.mean[col])
        se = float(self.std_error[col])
        kurt = self.kurtosis()[col]
        kurt = None if not np.isfinite(kurt) else float(kurt)
        if power is None:
            value, value_se, note = m, se, ""
        else:
            if m <= 0:
                raise EstimationError(f"{quantity}: non-positive mean {m} cannot be rooted")
            value = m**power
            value_se = abs(power) * m ** (power - 1.0) * se
            note = f"power {power:.12g} applied after averaging; delta-method standard error"
        return Estimate(
            quantity=quantity,
            mean=value,
            std_error=value_se,
            samples=self.count,
            seed=seed,
            transform_note=note,
            raw_mean=m,
            raw_std_error=se,
            rejected=self.rejected,
            kurtosis=kurt,
            unstable=self.unstable(col),
            params=dict(params or {}),
        )

    def delta(self, value: float, gradient: np.ndarray) -> float:
        """Delta-method standard error of ``g(mean)`` given ``grad g``."""
        g = np.asarray(gradient, dtype=float)
        return float(math.sqrt(max(g @ self.cov @ g, 0.0) / self.count))


def accumulate(kernel: Kernel, samples: int, threads: int | None = None, label: str = "estimate") -> Moments:
    """Evaluate ``kernel`` on every block and reduce the results in order."""
    if samples < 2:
        raise EstimationError("need at least 2 samples")
    plan = blocks(samples, BLOCK)
    first_vals, first_ok = kernel(*plan[0])
    first_vals = _as_2d(first_vals)
    shift = first_vals[first_ok].mean(axis=0) if first_ok.any() else np.zeros(first_vals.shape[1])
    mom = Moments(first_vals.shape[1], shift)
    mom.add(first_vals, first_ok)
    rest = plan[1:]
    nthreads = min(resolve_threads(threads), max(1, len(rest)))
    if nthreads == 1:
        results = (kernel(b, size) for b, size in rest)
    else:
        pool = ThreadPoolExecutor(max_workers=nthreads)
        results = pool.map(lambda bs: kernel(*bs), rest)
    try:
        for vals, ok in results:
            mom.add(_as_2d(vals), ok)
    finally:
        if nthreads > 1:
            pool.shutdown()
    if mom.rejected > REJECT_FRACTION * samples:
        raise EstimationError(
            f"{label}: {mom.rejected} of {samples} samples hit degenerate volumes (< {DEGENERATE_VOLUME:g})"
        )
    return mom


def _as_2d(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values[:, None] if values.ndim == 1 else values


def sphere_average(
    fn: Callable[[np.ndarray], np.ndarray],
    n: int,
    samples: int,
    seed: int,
    threads: int | None = None,
    quantity: str = "sphere_average",
    params: dict | None = None,
) -> Estimate:
    """Average of ``fn`` over the uniform probability measure on ``S^{n-1}``."""

    def kernel(block, size):
        th = sphere_batch(n, seed, block, size)
        vals = _as_2d(fn(th))
        return vals, np.isfinite(vals).all(axis=1)

    mom = accumulate(kernel, samples, threads, quantity)
    return mom.estimate(quantity, seed, params=params)


def combined_se(*estimates: Estimate) -> float:
    return math.sqrt(sum(e.std_error**2 for e in estimates))
