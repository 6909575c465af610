"""Functional counterparts of the flag quantities.

Test functions come in two flavours, both with exact restriction norms on
subspaces so that the only random error is the flag average:

* :class:`GaussianFn`, ``a * exp(-x^T M x)``;
* :class:`LevelStack`, a finite layer-cake ``sum_i (t_i - t_{i-1}) 1_{K_i}``
  over nested convex bodies ``K_1 ⊇ K_2 ⊇ ...`` at heights ``t_1 < t_2 < ...``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .bodies import Ball, Body, Ellipsoid, GeometryError, Polytope, body_from_dict, unit_ball_volume
from .estimate import DEFAULT_SAMPLES, DEGENERATE_VOLUME, Estimate, EstimationError, Moments, accumulate
from .quermass import _frames_kernel, _timed
from .sampling import Frame, IndexSeq, block_rng

MAX_LEVELS = 64
NEST_POINTS = 1000
STREAM_NESTING = 5


class GaussianFn:
    """``f(x) = amplitude * exp(-x^T M x)`` with ``M`` symmetric positive definite."""

    kind = "gaussian"

    def __init__(self, matrix, amplitude: float = 1.0):
        M = np.array(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise GeometryError("gaussian matrix must be square")
        if np.abs(M - M.T).max() > 1e-10 * max(1.0, np.abs(M).max()):
            raise GeometryError("gaussian matrix is not symmetric")
        if np.linalg.eigvalsh(M).min() <= 0:
            raise GeometryError("gaussian matrix is not positive definite")
        if not amplitude > 0:
            raise GeometryError("amplitude must be positive")
        self.n = M.shape[0]
        self.matrix = 0.5 * (M + M.T)
        self.amplitude = float(amplitude)
        self.matrix.setflags(write=False)

    @classmethod
    def standard(cls, n: int) -> "GaussianFn":
        return cls(np.eye(n))

    def restriction_l1(self, bases: np.ndarray) -> np.ndarray:
        k = bases.shape[2]
        G = np.einsum("bik,ij,bjl->bkl", bases, self.matrix, bases)
        return self.amplitude * math.pi ** (0.5 * k) / np.sqrt(np.linalg.det(G))

    def restriction_sup(self, bases: np.ndarray) -> np.ndarray:
        return np.full(bases.shape[0], self.amplitude)

    def l1_norm(self) -> float:
        return self.amplitude * math.pi ** (0.5 * self.n) / math.sqrt(np.linalg.det(self.matrix))

    def sup_norm(self) -> float:
        return self.amplitude

    def compose_linear(self, g) -> "GaussianFn":
        """``x -> f(g^{-1} x)``."""
        gi = np.linalg.inv(np.asarray(g, dtype=float))
        return GaussianFn(gi.T @ self.matrix @ gi, self.amplitude)

    def scale(self, c: float) -> "GaussianFn":
        return GaussianFn(self.matrix, self.amplitude * c)

    def to_level_stack(self, levels: int = 32) -> "LevelStack":
        """Lower step approximation at heights ``a * i / (levels + 1)``.

        Each level set ``{f >= t}`` is the ellipsoid ``x^T M x <= log(a / t)``.
        The L1 gap to the Gaussian is stored as the stack's discretization error.
        """
        if not 1 <= levels <= MAX_LEVELS:
            raise ValueError(f"levels must be in [1, {MAX_LEVELS}]")
        a = self.amplitude
        ts = a * np.arange(1, levels + 1) / (levels + 1)
        bodies = [Ellipsoid(self.matrix / math.log(a / t)) for t in ts]
        stack = LevelStack(ts, bodies, check=False)
        stack.discretization_error = self.l1_norm() - stack.l1_norm()
        return stack

    def to_dict(self) -> dict[str, Any]:
        d = {"type": "gaussian", "n": self.n, "matrix": self.matrix.reshape(-1).tolist()}
        if self.amplitude != 1.0:
            d["amplitude"] = self.amplitude
        return d


class LevelStack:
    """Quasi-concave step function given by nested level sets.

    Parameters
    ----------
    heights : sequence of float
        Strictly increasing positive heights ``t_1 < ... < t_m``.
    bodies : sequence of Body
        ``K_i = {f >= t_i}``; must be nested, ``K_{i+1} ⊆ K_i``.
    check : bool
        Verify nesting on sampled points (skipped for stacks built from
        closed-form level sets).
    """

    kind = "level_stack"

    def __init__(self, heights, bodies: Sequence[Body], check: bool = True, seed: int = 0):
        t = np.array(heights, dtype=float)
        bodies = list(bodies)
        if t.ndim != 1 or len(t) != len(bodies) or not len(t):
            raise GeometryError("need one height per level body")
        if len(t) > MAX_LEVELS:
            raise GeometryError(f"level stacks are capped at {MAX_LEVELS} levels")
        if t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise GeometryError("heights must be positive and strictly increasing")
        n = bodies[0].n
        if any(b.n != n for b in bodies):
            raise GeometryError("level bodies live in different dimensions")
        self.n = n
        self.heights = t
        self.bodies = tuple(bodies)
        self.discretization_error = 0.0
        t.setflags(write=False)
        if check:
            self.check_nesting(seed)

    @classmethod
    def indicator(cls, body: Body) -> "LevelStack":
        return cls([1.0], [body], check=False)

    @property
    def weights(self) -> np.ndarray:
        return np.diff(self.heights, prepend=0.0)

    def check_nesting(self, seed: int = 0):
        rng = block_rng(seed, STREAM_NESTING, 0)
        for i in range(len(self.bodies) - 1):
            pts = sample_points(self.bodies[i + 1], NEST_POINTS, rng)
            bad = int((~self.bodies[i].contains(pts)).sum())
            if bad:
                raise GeometryError(f"level {i + 2} is not contained in level {i + 1} ({bad} points outside)")

    def restriction_l1(self, bases: np.ndarray) -> np.ndarray:
        out = np.zeros(bases.shape[0])
        for w, K in zip(self.weights, self.bodies):
            out += w * K.section_volumes(bases)
        return out

    def restriction_sup(self, bases: np.ndarray) -> np.ndarray:
        out = np.zeros(bases.shape[0])
        origin = np.zeros(self.n)
        for t, K in zip(self.heights, self.bodies):
            meets = (K.section_volumes(bases) > 0) | bool(K.contains(origin)[0])
            out = np.where(meets, t, out)
        return out

    def l1_norm(self) -> float:
        return float(sum(w * K.volume() for w, K in zip(self.weights, self.bodies)))

    def sup_norm(self) -> float:
        return float(self.heights[-1])

    def compose_linear(self, g) -> "LevelStack":
        """``x -> f(g^{-1} x)``: every level set is mapped by ``g``."""
        return self._with([K.apply_linear(g) for K in self.bodies])

    def translate(self, x) -> "LevelStack":
        return self._with([K.translate(x) for K in self.bodies])

    def dilate(self, lam: float) -> "LevelStack":
        """``x -> f(x / lam)``."""
        return self._with([K.scale(lam) for K in self.bodies])

    def scale(self, c: float) -> "LevelStack":
        if not c > 0:
            raise GeometryError("scale factor must be positive")
        return LevelStack(self.heights * c, self.bodies, check=False)

    def _with(self, bodies):
        out = LevelStack(self.heights, bodies, check=False)
        out.discretization_error = self.discretization_error
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "level_stack",
            "n": self.n,
            "levels": [{"t": float(t), "body": K.to_dict()} for t, K in zip(self.heights, self.bodies)],
        }


def sample_points(body: Body, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` points of ``body``: uniform for ellipsoids, random convex combinations of vertices for polytopes."""
    if isinstance(body, Ellipsoid):
        u = rng.standard_normal((m, body.n))
        u /= np.linalg.norm(u, axis=1)[:, None]
        u *= rng.random(m)[:, None] ** (1.0 / body.n)
        L = np.linalg.cholesky(body.inverse)
        return body.center + u @ L.T
    if isinstance(body, Polytope):
        V = body.vertices
        w = rng.dirichlet(np.full(len(V), 0.3), size=m)
        return np.vstack([V, w @ V])
    raise GeometryError(f"cannot sample points of {type(body).__name__}")


def function_from_dict(d: dict[str, Any]):
    if not isinstance(d, dict):
        raise GeometryError("function must be a JSON object")
    kind = d.get("type")
    if kind == "gaussian":
        if "matrix" not in d:
            raise GeometryError("gaussian function is missing 'matrix'")
        M = np.asarray(d["matrix"], dtype=float)
        n = d.get("n") or int(round(math.sqrt(M.size)))
        if M.size != n * n:
            raise GeometryError(f"gaussian matrix must have {n * n} entries")
        return GaussianFn(M.reshape(n, n), float(d.get("amplitude", 1.0)))
    if kind == "level_stack":
        levels = d.get("levels")
        if not levels:
            raise GeometryError("level_stack function is missing 'levels'")
        try:
            ts = [float(lv["t"]) for lv in levels]
            bodies = [body_from_dict(lv["body"]) for lv in levels]
        except KeyError as exc:
            raise GeometryError(f"level is missing {exc}") from None
        return LevelStack(ts, bodies)
    raise GeometryError(f"unknown function type {kind!r}")


def function_to_dict(f) -> dict[str, Any]:
    return f.to_dict()


def _bases(frame) -> np.ndarray:
    U = frame.basis if isinstance(frame, Frame) else Frame(frame).basis
    return U[None]


def restriction_l1(f, frame) -> float:
    """Integral of ``f`` over the subspace spanned by ``frame``."""
    v = float(f.restriction_l1(_bases(frame))[0])
    if not math.isfinite(v):
        raise GeometryError("restriction is not integrable")
    return v


def restriction_sup(f, frame) -> float:
    """Supremum of ``f`` on the subspace spanned by ``frame``."""
    return float(f.restriction_sup(_bases(frame))[0])


# ---------------------------------------------------------------------------
# flag statistics


@dataclass(frozen=True)
class BoundReport:
    """Comparison of a flag average with its upper bound."""

    estimate: Estimate
    bound: float

    @property
    def ratio(self) -> float:
        return self.estimate.mean / self.bound

    @property
    def margin_se(self) -> float:
        """``(bound - mean) / SE``; infinite when the estimate is exact."""
        gap = self.bound - self.estimate.mean
        if self.estimate.std_error == 0:
            return math.copysign(math.inf, gap) if gap else 0.0
        return gap / self.estimate.std_error

    def to_dict(self):
        return {**self.estimate.to_dict(), "bound": self.bound, "ratio": self.ratio}


def mixed_norm_moments(
    functions: Sequence,
    seq: IndexSeq,
    l1_exponents: Sequence[Sequence[float]],
    sup_exponents: Sequence[Sequence[float]],
    samples: int,
    seed: int,
    threads: int | None = None,
    label: str = "mixed_norm",
) -> Moments:
    """Moments of ``prod_k prod_j ||f_k|F_j||_1^{a_kj} / ||f_k|F_j||_inf^{b_kj}`` over Haar flags."""
    n = seq.n
    for f in functions:
        if f.n != n:
            raise GeometryError(f"function lives in R^{f.n}, index sequence in R^{n}")
    frames = _frames_kernel(n, seq.top, seed, "partial")

    def kernel(block, size):
        U = frames(block, size)
        stat = np.ones(size)
        ok = np.ones(size, dtype=bool)
        for f, a_row, b_row in zip(functions, l1_exponents, sup_exponents):
            for d, a, b in zip(seq.indices, a_row, b_row):
                V = U[:, :, :d]
                if a:
                    l1 = f.restriction_l1(V)
                    if a < 0:
                        ok &= l1 >= DEGENERATE_VOLUME
                    stat *= np.where(l1 > 0, l1, 1.0) ** a
                if b:
                    sup = f.restriction_sup(V)
                    ok &= sup > 0
                    stat /= np.where(sup > 0, sup, 1.0) ** b
        return stat, ok

    return accumulate(kernel, samples, threads, label)


def mixed_norm_statistic(
    f,
    seq: IndexSeq,
    l1_exponents: Sequence[float],
    sup_exponents: Sequence[float] | None = None,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
) -> Estimate:
    """Flag average of ``prod_j ||f|F_j||_1^{a_j} / ||f|F_j||_inf^{b_j}`` for a single function.

    The average is invariant under volume-preserving linear maps of ``f``
    whenever ``a_j = i_{j+1} - i_{j-1}`` for every ``j``; the sup-norm
    exponents are free.
    """
    b = [0.0] * seq.r if sup_exponents is None else list(sup_exponents)
    mom = mixed_norm_moments([f], seq, [list(l1_exponents)], [b], samples, seed, threads, "mixed_norm")
    return mom.estimate("mixed_norm", seed, params={"quantity": "mixed_norm", "indices": list(seq.indices)})


@_timed
def functional_I(
    f,
    seq: IndexSeq,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
) -> Estimate:
    """``E prod_j ||f|F_j||_1^{i_{j+1} - i_{j-1}}`` over Haar flags (no outer root)."""
    mom = mixed_norm_moments([f], seq, [seq.dual_exponents()], [[0] * seq.r], samples, seed, threads, "functional_I")
    return mom.estimate(
        "functional_i", seed, params={"quantity": "functional_i", "function": f.to_dict(), "indices": list(seq.indices)}
    )


def dpp_bound(seq: IndexSeq, l1_norm: float) -> float:
    """``prod_j omega_{i_j}^{i_{j+1}} / omega_{i_{j+1}}^{i_j} * ||f||_1^{i_r}``."""
    p = seq.padded()
    log_c = sum(
        p[j + 1] * math.log(unit_ball_volume(p[j])) - p[j] * math.log(unit_ball_volume(p[j + 1]))
        for j in range(1, seq.r + 1)
    )
    return math.exp(log_c) * l1_norm**seq.top


@_timed
def dpp_flag_ratio(
    f,
    seq: IndexSeq,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
) -> BoundReport:
    """Flag average of ``prod_j ||f|F_j||_1^{i_{j+1}-i_{j-1}} / ||f|F_j||_inf^{i_{j+1}-i_j}`` and its bound.

    Balls (indicator of a centered ball) give equality.
    """
    p = seq.padded()
    b = [p[j + 1] - p[j] for j in range(1, seq.r + 1)]
    mom = mixed_norm_moments([f], seq, [seq.dual_exponents()], [b], samples, seed, threads, "dpp_ratio")
    est = mom.estimate(
        "dpp_ratio", seed, params={"quantity": "dpp_ratio", "function": f.to_dict(), "indices": list(seq.indices)}
    )
    return BoundReport(est, dpp_bound(seq, f.l1_norm()))


def ext_exponents(seq: IndexSeq) -> tuple[list[float], list[float]]:
    """L1 and sup exponents of the q-function inequality for one function."""
    p = seq.padded()
    a = [p[2] / p[1]]
    b = [(p[2] - p[1]) / p[1]]
    for j in range(2, seq.r + 1):
        e = (p[j + 1] - p[j]) / p[j]
        a.append(e)
        b.append(e)
    return a, b


def ext_bound(seq: IndexSeq, l1_norms: Sequence[float]) -> float:
    """``(prod_j omega_{i_j}^{i_{j+1}/i_j} / omega_{i_{j+1}})^q * prod_k ||f_k||_1``."""
    p = seq.padded()
    log_c = sum(
        p[j + 1] / p[j] * math.log(unit_ball_volume(p[j])) - math.log(unit_ball_volume(p[j + 1]))
        for j in range(1, seq.r + 1)
    )
    return math.exp(len(l1_norms) * log_c) * math.prod(l1_norms)


def multi_function_ratio(
    functions: Sequence,
    seq: IndexSeq,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
) -> BoundReport:
    """Flag average of the q-function mixed statistic, ``1 <= q <= i_1``, with its bound."""
    q = len(functions)
    if not 1 <= q <= seq.indices[0]:
        raise ValueError(f"number of functions must lie in [1, {seq.indices[0]}], got {q}")
    a, b = ext_exponents(seq)
    mom = mixed_norm_moments(functions, seq, [a] * q, [b] * q, samples, seed, threads, "multi_function")
    est = mom.estimate("multi_function_ratio", seed,
                       params={"quantity": "multi_function_ratio", "indices": list(seq.indices), "q": q})
    return BoundReport(est, ext_bound(seq, [f.l1_norm() for f in functions]))


# ---------------------------------------------------------------------------
# level-set quantities


def project_function(f: LevelStack, frame: Frame) -> LevelStack:
    """Level stack on the subspace whose level sets are the projected level sets."""
    if not isinstance(f, LevelStack):
        raise GeometryError("projection needs a level-stack function")
    out = LevelStack(f.heights, [K.project(frame) for K in f.bodies], check=False)
    out.discretization_error = f.discretization_error
    return out


@_timed
def phi_r_of_function(
    f: LevelStack,
    seq: IndexSeq,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    threads: int | None = None,
) -> Estimate:
    """Layer-cake sum ``sum_i (t_i - t_{i-1}) phi_r(K_i)`` with one flag stream for all levels.

    The standard error accounts for the correlation between levels.
    """
    if not isinstance(f, LevelStack):
        raise GeometryError("phi_r of a function needs a level-stack representation")
    if f.n != seq.n:
        raise GeometryError(f"function lives in R^{f.n}, index sequence in R^{seq.n}")
    exps = [-e for e in seq.dual_exponents()]
    frames = _frames_kernel(seq.n, seq.top, seed, "partial")

    def kernel(block, size):
        U = frames(block, size)
        cols = np.ones((size, len(f.bodies)))
        ok = np.ones(size, dtype=bool)
        for c, K in enumerate(f.bodies):
            for d, e in zip(seq.indices, exps):
                v = K.projection_volumes(U[:, :, :d])
                bad = v < DEGENERATE_VOLUME
                ok &= ~bad
                cols[:, c] *= np.where(bad, 1.0, v) ** e
        return cols, ok

    mom = accumulate(kernel, samples, threads, "phi_r_function")
    power = -1.0 / (seq.top * seq.n)
    m = mom.mean
    if np.any(m <= 0):
        raise EstimationError("phi_r_function: non-positive level average")
    w = f.weights
    value = float(w @ m**power)
    grad = w * power * m ** (power - 1.0)
    se = mom.delta(value, grad)
    return Estimate(
        quantity="phi_r_function",
        mean=value,
        std_error=se,
        samples=mom.count,
        seed=seed,
        transform_note=f"power {power:.12g} applied per level after averaging; delta-method standard error",
        rejected=mom.rejected,
        params={
            "quantity": "phi_r_function",
            "function": f.to_dict(),
            "indices": list(seq.indices),
            "discretization_error": f.discretization_error,
        },
    )


def rearrange(f: LevelStack) -> LevelStack:
    """Symmetric decreasing rearrangement: each level set becomes the centered ball of equal volume."""
    if not isinstance(f, LevelStack):
        raise GeometryError("rearrangement needs a level-stack representation")
    heights, bodies = [], []
    for t, K in zip(f.heights, f.bodies):
        vol = K.volume()
        if vol <= 0:
            warnings.warn(f"dropping level t={t:g} with zero volume", stacklevel=2)
            continue
        if isinstance(K, Ball) and not np.any(K.center):
            ball = K
        else:
            ball = Ball(f.n, K.volume_radius())
        heights.append(t)
        bodies.append(ball)
    if not bodies:
        raise GeometryError("every level has zero volume")
    out = LevelStack(heights, bodies, check=False)
    out.discretization_error = f.discretization_error
    return out
