"""Monte Carlo estimators and closed-form oracles for flag quermassintegrals.

Dual quantities average products of section volumes ``|L cap F_j|`` over Haar
flags; primal quantities use projection volumes ``|P_{F_j} L|`` with the
opposite exponents.  Each estimator averages the product statistic first and
then applies the outer power, propagating the standard error by the delta
method.

All estimators take ``samples`` and ``seed``; two calls with the same seed and
the same flag shape see the same flags (common random numbers).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bodies import Body, Ellipsoid, GeometryError, unit_ball_volume
from .estimate import (
    DEFAULT_SAMPLES,
    DEGENERATE_VOLUME,
    Estimate,
    EstimationError,
    accumulate,
    sphere_average,
)
from .sampling import (
    IndexSeq,
    complete_flag_batch,
    nested_flag_batch,
    partial_flag_batch,
)

SAMPLERS = ("partial", "complete", "nested")


@dataclass(frozen=True)
class Permutation:
    """A permutation ``omega`` of ``{1, ..., n}`` given by its values."""

    values: tuple[int, ...]

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if sorted(vals) != list(range(1, len(vals) + 1)):
            raise ValueError(f"{vals} is not a permutation of 1..{len(vals)}")
        if len(vals) < 2:
            raise ValueError("permutation must act on at least 2 elements")

    @classmethod
    def parse(cls, text: str | Sequence[int]) -> "Permutation":
        if isinstance(text, str):
            text = [int(t) for t in text.replace(" ", "").split(",") if t]
        return cls(tuple(text))

    @classmethod
    def reversal(cls, n: int) -> "Permutation":
        return cls(tuple(range(n, 0, -1)))

    @classmethod
    def from_index_seq(cls, seq: IndexSeq) -> "Permutation":
        """The permutation whose flag quantities reduce to those of ``seq``."""
        n = seq.n
        pad = seq.padded()
        jumps = {pad[j]: pad[j + 1] - pad[j - 1] for j in range(1, seq.r + 1)}
        w = [n - seq.indices[0] + 1]
        for t in range(1, n):
            w.append(w[-1] + 1 - jumps.get(t, 0))
        return cls(tuple(w))

    @property
    def n(self) -> int:
        return len(self.values)

    def delta(self) -> tuple[int, ...]:
        """``delta(j) = omega(j) - omega(j+1) + 1`` for ``j = 1..n-1``."""
        w = self.values
        return tuple(w[j] - w[j + 1] + 1 for j in range(self.n - 1))

    @property
    def last(self) -> int:
        return self.values[-1]

    def homogeneity(self) -> int:
        """``sum_j j * delta(j)``, equal to ``n (n - omega(n))``."""
        return sum((j + 1) * d for j, d in enumerate(self.delta()))

    def __str__(self):
        return ",".join(map(str, self.values))


# ---------------------------------------------------------------------------
# flag streams


def _frames_kernel(n: int, top: int, seed: int, sampler: str) -> Callable[[int, int], np.ndarray]:
    if sampler == "partial":
        return lambda block, size: partial_flag_batch(n, top, seed, block, size)
    if sampler == "complete":
        return lambda block, size: complete_flag_batch(n, seed, block, size)
    if sampler == "nested":
        return lambda block, size: nested_flag_batch(n, seed, block, size)
    raise ValueError(f"unknown sampler {sampler!r}; expected one of {SAMPLERS}")


def flag_statistic(
    body: Body,
    dims: Sequence[int],
    exponents: Sequence[float],
    kind: str,
    samples: int,
    seed: int,
    sampler: str = "partial",
    threads: int | None = None,
    label: str = "flag_statistic",
):
    """Moments of ``prod_j vol_j^{e_j}`` over Haar flags.

    ``vol_j`` is the section (``kind='section'``) or projection
    (``kind='projection'``) volume of ``body`` on the ``dims[j]``-dimensional
    member of the flag.  Samples whose volume with a negative exponent falls
    below the degeneracy floor are rejected.
    """
    n = body.n
    dims = tuple(int(d) for d in dims)
    exps = tuple(float(e) for e in exponents)
    top = max(dims)
    frames = _frames_kernel(n, top, seed, sampler)
    measure = body.section_volumes if kind == "section" else body.projection_volumes

    def kernel(block, size):
        U = frames(block, size)
        stat = np.ones(size)
        ok = np.ones(size, dtype=bool)
        for d, e in zip(dims, exps):
            if e == 0:
                continue
            v = measure(U[:, :, :d])
            if e < 0:
                bad = v < DEGENERATE_VOLUME
                ok &= ~bad
                v = np.where(bad, 1.0, v)
            stat *= v**e
        return stat, ok

    return accumulate(kernel, samples, threads, label)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        est = fn(*args, **kwargs)
        target = getattr(est, "estimate", est)
        target.params["wall_time_ms"] = round(1000 * (time.perf_counter() - t0), 3)
        return est

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


def _seq_params(name, body, seq, seed):
    return {"quantity": name, "body": body.to_dict(), "indices": list(seq.indices)}


@_timed
def psi_r(
    body: Body,
    seq: IndexSeq,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
    sampler: str = "partial",
) -> Estimate:
    """Dual flag quermassintegral ``(E prod |L cap F_j|^{i_{j+1}-i_{j-1}})^{1/(i_r n)}``."""
    _check_seq(body, seq)
    mom = flag_statistic(
        body, seq.indices, seq.dual_exponents(), "section", samples, seed, sampler, threads, "psi_r"
    )
    return mom.estimate("psi_r", seed, power=1.0 / (seq.top * seq.n), params=_seq_params("psi_r", body, seq, seed))


@_timed
def phi_r(
    body: Body,
    seq: IndexSeq,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
    sampler: str = "partial",
) -> Estimate:
    """Flag quermassintegral ``(E prod |P_{F_j} L|^{i_{j-1}-i_{j+1}})^{-1/(i_r n)}``."""
    _check_seq(body, seq)
    exps = [-e for e in seq.dual_exponents()]
    mom = flag_statistic(body, seq.indices, exps, "projection", samples, seed, sampler, threads, "phi_r")
    return mom.estimate("phi_r", seed, power=-1.0 / (seq.top * seq.n), params=_seq_params("phi_r", body, seq, seed))


def _check_seq(body: Body, seq: IndexSeq):
    if seq.n != body.n:
        raise GeometryError(f"index sequence is for R^{seq.n}, body lives in R^{body.n}")


def _omega_outer_power(omega: Permutation) -> float | None:
    if omega.last == omega.n:
        return None
    return 1.0 / (omega.n * (omega.n - omega.last))


@_timed
def psi_omega(
    body: Body,
    omega: Permutation,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
    sampler: str = "complete",
) -> Estimate:
    """Permutation-indexed dual quantity over the complete flag manifold.

    Raw flag average when ``omega(n) = n`` (scale invariant), otherwise the
    ``1 / (n (n - omega(n)))`` power of it.
    """
    if omega.n != body.n:
        raise GeometryError("permutation size must equal the body dimension")
    delta = omega.delta()
    if min(delta) < 0 and body.origin_margin() <= 0:
        raise GeometryError("interior required: negative section exponents need 0 in the interior")
    mom = flag_statistic(body, range(1, body.n), delta, "section", samples, seed, sampler, threads, "psi_omega")
    params = {"quantity": "psi_omega", "body": body.to_dict(), "permutation": list(omega.values)}
    return mom.estimate("psi_omega", seed, power=_omega_outer_power(omega), params=params)


@_timed
def phi_omega(
    body: Body,
    omega: Permutation,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
    sampler: str = "complete",
) -> Estimate:
    """Permutation-indexed projection quantity with exponents ``-delta(j)``."""
    if omega.n != body.n:
        raise GeometryError("permutation size must equal the body dimension")
    exps = [-d for d in omega.delta()]
    mom = flag_statistic(body, range(1, body.n), exps, "projection", samples, seed, sampler, threads, "phi_omega")
    power = _omega_outer_power(omega)
    params = {"quantity": "phi_omega", "body": body.to_dict(), "permutation": list(omega.values)}
    return mom.estimate("phi_omega", seed, power=None if power is None else -power, params=params)


def psi_full(body: Body, samples: int = DEFAULT_SAMPLES, seed: int = 0, threads: int | None = None) -> Estimate:
    """Complete-flag dual quantity: exponent 2 on every section."""
    est = psi_omega(body, Permutation.reversal(body.n), samples, seed, threads)
    return _rename(est, "psi_full")


def phi_full(body: Body, samples: int = DEFAULT_SAMPLES, seed: int = 0, threads: int | None = None) -> Estimate:
    """Complete-flag projection quantity: exponent -2 on every projection."""
    est = phi_omega(body, Permutation.reversal(body.n), samples, seed, threads)
    return _rename(est, "phi_full")


def _rename(est: Estimate, name: str) -> Estimate:
    from dataclasses import replace

    params = dict(est.params)
    params["quantity"] = name
    params.pop("permutation", None)
    return replace(est, quantity=name, params=params)


# ---------------------------------------------------------------------------
# closed forms


def ball_closed_form(profile, n: int | None = None, radius: float = 1.0) -> float:
    """Exact value of the flag quantities of a centered ball.

    ``profile`` is an :class:`IndexSeq` or a mapping ``dimension -> exponent``.
    The value is ``radius * (prod_d omega_d^{e_d})^{1 / sum_d d e_d}``.
    Sections and projections of a centered ball coincide, so the primal and
    dual quantities share this value.
    """
    if isinstance(profile, IndexSeq):
        n = profile.n
        profile = dict(zip(profile.indices, profile.dual_exponents()))
    profile = {int(d): e for d, e in profile.items() if e != 0}
    weight = sum(d * e for d, e in profile.items())
    if weight == 0:
        raise ValueError("profile is scale invariant; use ball_flag_average")
    log_prod = sum(e * math.log(unit_ball_volume(d)) for d, e in profile.items())
    return radius * math.exp(log_prod / weight)


def ball_flag_average(profile: dict[int, float], radius: float = 1.0) -> float:
    """``prod_d |rho B cap F_d|^{e_d}`` (constant over flags) for a centered ball."""
    return math.exp(sum(e * (math.log(unit_ball_volume(d)) + d * math.log(radius)) for d, e in profile.items()))


def ball_omega(omega: Permutation, radius: float = 1.0) -> float:
    """Exact permutation quantity of a centered ball (dual and primal agree)."""
    profile = {j + 1: d for j, d in enumerate(omega.delta())}
    if omega.last == omega.n:
        return ball_flag_average(profile, radius)
    return radius * ball_flag_average(profile) ** _omega_outer_power(omega)


def ellipsoid_oracle_psi(E: Ellipsoid, seq: IndexSeq) -> float:
    """Exact flag quantity of a centered ellipsoid: its volume radius times the ball value."""
    if np.any(E.center):
        raise GeometryError("oracle requires a centered ellipsoid")
    return E.volume_radius() * ball_closed_form(seq)


# ---------------------------------------------------------------------------
# the three-dimensional counterexample


def _check_diag(d: Sequence[float]) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.shape != (3,) or np.any(d <= 0):
        raise ValueError("need three positive diagonal entries")
    if abs(np.prod(d) - 1.0) > 1e-9:
        raise ValueError(f"diagonal entries must multiply to 1, got {np.prod(d)}")
    return d


def example2_integrand(phi: np.ndarray, d: Sequence[float]) -> np.ndarray:
    """``sum_i d_i sqrt(1 - phi_i^2) / (sum_j |phi_j| / d_j)^2`` on unit vectors."""
    d = np.asarray(d, dtype=float)
    num = (d * np.sqrt(np.clip(1.0 - phi**2, 0.0, None))).sum(axis=-1)
    den = (np.abs(phi) / d).sum(axis=-1) ** 2
    return num / den


@_timed
def example2_A(
    d1: float,
    d2: float,
    d3: float,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
) -> Estimate:
    """Sphere average of :func:`example2_integrand` for ``diag(d1, d2, d3)``."""
    d = _check_diag((d1, d2, d3))
    return sphere_average(
        lambda th: example2_integrand(th, d),
        3,
        samples,
        seed,
        threads,
        quantity="example2_A",
        params={"quantity": "example2_A", "d": d.tolist()},
    )


def example2_A_quadrature(d: Sequence[float], nodes: int = 1200) -> float:
    """Deterministic value of the same integral by tensor Gauss-Legendre quadrature.

    The integrand depends only on ``|phi_i|`` and is smooth inside each
    octant, so one octant is integrated in spherical coordinates with
    ``nodes x nodes`` points and the result is normalised by the octant area
    ``pi / 2``.
    """
    d = _check_diag(d)
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.25 * math.pi * (x + 1.0)  # polar angle and azimuth both in [0, pi/2]
    wt = 0.25 * math.pi * w
    theta, az = np.meshgrid(t, t, indexing="ij")
    W = np.outer(wt, wt) * np.sin(theta)
    phi = np.stack([np.sin(theta) * np.cos(az), np.sin(theta) * np.sin(az), np.cos(theta)], axis=-1)
    vals = example2_integrand(phi, d)
    return float((W * vals).sum() / (0.5 * math.pi))


def sphere_projection_integral(
    body: Body,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
) -> Estimate:
    """Sphere average of ``W(P_{u^perp} L) / |P_{u^perp} L|^2`` in ``R^3``.

    ``W`` is the support function averaged over the unit circle of
    ``u^perp``, i.e. perimeter / (2 pi) for a planar convex set.
    """
    if body.n != 3:
        raise GeometryError("the sphere identity is three-dimensional")

    def fn(th):
        U = _complement_frames(th)
        area = body.projection_volumes(U)
        per = body.projection_perimeters(U)
        return per / (2.0 * math.pi) / area**2

    return sphere_average(fn, 3, samples, seed, threads, quantity="sphere_projection_integral",
                          params={"quantity": "sphere_projection_integral", "body": body.to_dict()})


def _complement_frames(th: np.ndarray) -> np.ndarray:
    # orthonormal bases of u^perp for a batch of unit vectors u
    a = np.where(np.abs(th[:, :1]) < 0.9, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    v = np.cross(th, a)
    v /= np.linalg.norm(v, axis=1)[:, None]
    w = np.cross(th, v)
    return np.stack([v, w], axis=2)


IDENTITY_PERMUTATION = Permutation((1, 3, 2))


def phi_omega_sphere_identity(
    body: Body,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
) -> tuple[Estimate, Estimate]:
    """Two routes to the ``omega = (1, 3, 2)`` projection average in ``R^3``.

    Returns the complete-flag estimate of
    ``E |P_{F_1} L| / |P_{F_2} L|^2`` and the sphere-integral estimate of
    ``E_u W(P_{u^perp} L) / |P_{u^perp} L|^2``.  Averaging the width of a
    planar set over lines gives twice its normalised mean width, so the flag
    value equals twice the sphere value.
    """
    if body.n != 3:
        raise GeometryError("the sphere identity is three-dimensional")
    mom = flag_statistic(body, (1, 2), (1, -2), "projection", samples, seed, "complete", threads, "phi_omega")
    flag = mom.estimate("phi_omega_inverse_cube", seed, params={"quantity": "phi_omega_inverse_cube",
                                                                 "permutation": [1, 3, 2]})
    sphere = sphere_projection_integral(body, samples, seed + 1, threads)
    return flag, sphere


# ---------------------------------------------------------------------------
# negative control


def unbalanced_psi(
    body: Body,
    seq: IndexSeq,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
) -> Estimate:
    """Section average with every exponent set to 1 (root ``1 / sum i_j``).

    This is homogeneous of degree one but violates the exponent balance that
    makes the dual quantity volume-preserving invariant; it is used to check
    that invariance tests have power.
    """
    _check_seq(body, seq)
    ones = [1] * seq.r
    mom = flag_statistic(body, seq.indices, ones, "section", samples, seed, "partial", threads, "unbalanced_psi")
    return mom.estimate("unbalanced_psi", seed, power=1.0 / sum(seq.indices),
                        params={"quantity": "unbalanced_psi", "indices": list(seq.indices)})
