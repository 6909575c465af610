"""Named, reproducible verification checks with statistical verdicts.

Each check runs a handful of estimators and turns them into
:class:`Comparison` rows.  A comparison is one of

``equal``
    ``|lhs - rhs| <= 3 * sqrt(se_l^2 + se_r^2)`` (plus a tiny relative floor so
    that exact, zero-variance estimates can still match closed forms);
``less``
    ``rhs - lhs > 3 * se``: a strict inequality with margin;
``leq``
    ``lhs <= rhs + 3 * se``: an inequality allowing statistical slack;
``drift``
    ``|lhs - rhs| > 5 * se``: a negative control that must detect a change;
``exact``
    ``|lhs - rhs| <= tol`` with an absolute tolerance;
``report``
    recorded, never fails.

A check passes when all its non-report comparisons pass.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import cache
from importlib import resources
from typing import Callable, Iterable

import numpy as np
from scipy.linalg import expm

from . import functional as fn
from .bodies import Ball, Cube, Ellipsoid, cross_polytope, mean_width, random_polytope, simplex
from .estimate import DEFAULT_SAMPLES, Estimate
from .quermass import (
    Permutation,
    ball_closed_form,
    ellipsoid_oracle_psi,
    example2_A,
    phi_omega_sphere_identity,
    phi_r,
    psi_full,
    psi_omega,
    psi_r,
    unbalanced_psi,
)
from .sampling import IndexSeq, all_index_seqs

EQUAL_BAND = 3.0
MARGIN = 3.0
DRIFT = 5.0
EXACT_FLOOR = 1e-12

KINDS = ("equality", "one-sided", "report-only")
OPS = ("equal", "less", "leq", "drift", "exact", "report")


class CheckError(RuntimeError):
    """An estimator failed inside a named check."""


@dataclass(frozen=True)
class Comparison:
    label: str
    op: str
    lhs: float
    rhs: float
    lhs_se: float = 0.0
    rhs_se: float = 0.0
    tol: float = 0.0

    @property
    def se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def margin(self) -> float:
        """Distance to the decision boundary in SE units (positive = pass side)."""
        se = self.se
        diff = self.rhs - self.lhs
        if self.op == "equal":
            band = EQUAL_BAND * se + EXACT_FLOOR * max(abs(self.lhs), abs(self.rhs), 1.0)
            return _ratio(band - abs(diff), se)
        if self.op == "less":
            return _ratio(diff, se) - MARGIN if se else _ratio(diff, se)
        if self.op == "leq":
            return _ratio(diff, se) + MARGIN if se else _ratio(diff + EXACT_FLOOR * abs(self.rhs), se)
        if self.op == "drift":
            return _ratio(abs(diff), se) - DRIFT
        if self.op == "exact":
            return self.tol - abs(diff)
        return math.nan

    @property
    def passed(self) -> bool | None:
        if self.op == "report":
            return None
        return bool(self.margin >= 0) if self.op in ("equal", "leq", "exact") else bool(self.margin > 0)

    def to_dict(self):
        d = asdict(self)
        d["margin"] = _finite(self.margin)
        d["passed"] = self.passed
        return d


def _ratio(x: float, se: float) -> float:
    if se > 0:
        return x / se
    return math.copysign(math.inf, x) if x else 0.0


def _finite(x: float):
    return x if math.isfinite(x) else (None if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def eq(label, a, b, **kw) -> Comparison:
    return _cmp(label, "equal", a, b, **kw)


def lt(label, a, b, **kw) -> Comparison:
    return _cmp(label, "less", a, b, **kw)


def le(label, a, b, **kw) -> Comparison:
    return _cmp(label, "leq", a, b, **kw)


def _cmp(label, op, a, b, tol=0.0):
    la, sa = _value(a)
    lb, sb = _value(b)
    return Comparison(label, op, la, lb, sa, sb, tol)


def _value(x) -> tuple[float, float]:
    if isinstance(x, Estimate):
        return float(x.mean), float(x.std_error)
    if isinstance(x, tuple):
        return float(x[0]), float(x[1])
    return float(x), 0.0


def product(a: Estimate, b: Estimate) -> tuple[float, float]:
    """Value and delta-method SE of the product of two independent estimates."""
    return a.mean * b.mean, math.hypot(a.mean * b.std_error, b.mean * a.std_error)


def quotient(a, b) -> tuple[float, float]:
    (ma, sa), (mb, sb) = _value(a), _value(b)
    return ma / mb, abs(ma / mb) * math.hypot(sa / ma, sb / mb)


@dataclass(frozen=True)
class CheckSpec:
    """A registered check.

    ``run(samples, seed, threads)`` returns the comparisons.  The assertion
    kind is fixed per check; report-only checks can never fail.
    """

    name: str
    criterion: int
    kind: str
    claim: str
    run: Callable[[int, int, int | None], list[Comparison]] = field(repr=False, compare=False)
    samples: int = DEFAULT_SAMPLES
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown assertion kind {self.kind!r}")


@dataclass(frozen=True)
class CheckReport:
    name: str
    criterion: int
    kind: str
    claim: str
    samples: int
    seed: int
    comparisons: tuple[Comparison, ...]
    verdict: str
    error: str = ""
    runtime_s: float | None = None

    @property
    def failed(self) -> bool:
        return self.verdict == "fail"

    def to_dict(self, timing: bool = False):
        d = {
            "name": self.name,
            "criterion": self.criterion,
            "kind": self.kind,
            "claim": self.claim,
            "samples": self.samples,
            "seed": self.seed,
            "verdict": self.verdict,
            "comparisons": [c.to_dict() for c in self.comparisons],
        }
        if self.error:
            d["error"] = self.error
        if timing and self.runtime_s is not None:
            d["runtime_s"] = round(self.runtime_s, 3)
        return d

    def summary_line(self) -> str:
        worst = min((c.margin for c in self.comparisons if c.passed is not None), default=math.nan)
        extra = f"  error: {self.error}" if self.error else ""
        return f"[{self.verdict.upper():6s}] #{self.criterion:<2d} {self.name:34s} min margin {worst:+.3g}{extra}"


# ---------------------------------------------------------------------------
# check bodies


def _derive(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0])


def _sl3(rng: np.random.Generator, scale: float = 0.35) -> np.ndarray:
    A = scale * rng.standard_normal((3, 3))
    A -= np.trace(A) / 3 * np.eye(3)
    return expm(A)


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


TRANSFORMS = {
    "diag(2,1,1/2)": np.diag([2.0, 1.0, 0.5]),
    "shear": np.array([[1.0, 0.7, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
    "rotation*diag": _rotation(0.6) @ np.diag([1.5, 1.0, 1 / 1.5]),
}
SEQ3 = IndexSeq(3, (1, 2))


def _symmetric_polytope():
    return random_polytope(3, 8, seed=2024, symmetric=True)


def check_ball_closed_form(samples, seed, threads):
    out = []
    for n in (3, 4, 5):
        for seq in all_index_seqs(n, max_r=3):
            exact = ball_closed_form(seq)
            out.append(eq(f"psi_r ball n={n} seq=({seq})", psi_r(Ball(n), seq, samples, seed, threads), exact))
            out.append(eq(f"phi_r ball n={n} seq=({seq})", phi_r(Ball(n), seq, samples, seed, threads), exact))
    return out


def check_sln_invariance(samples, seed, threads):
    out = []
    for bname, body in (("cube", Cube(3)), ("cross-polytope", cross_polytope(3))):
        base = psi_r(body, SEQ3, samples, seed, threads)
        for tname, T in TRANSFORMS.items():
            T = T / abs(np.linalg.det(T)) ** (1 / 3)
            out.append(eq(f"psi_r {bname} vs {tname}", psi_r(body.apply_linear(T), SEQ3, samples, seed, threads), base))
        base_phi = phi_r(body, SEQ3, samples, seed, threads)
        T = TRANSFORMS["shear"]
        moved = body.apply_linear(T).translate([0.3, -0.2, 0.25])
        out.append(eq(f"phi_r {bname} vs shear+translation", phi_r(moved, SEQ3, samples, seed, threads), base_phi))
    return out


def check_negative_control(samples, seed, threads):
    body = Cube(3)
    T = np.diag([4.0, 0.25, 1.0])
    a = unbalanced_psi(body, SEQ3, samples, seed, threads)
    b = unbalanced_psi(body.apply_linear(T), SEQ3, samples, seed, threads)
    return [_cmp("unbalanced statistic cube vs diag(4,1/4,1)", "drift", b, a)]


def check_busemann_straus(samples, seed, threads):
    cube = Cube(3)
    ball_value = ball_closed_form(SEQ3, radius=cube.volume_radius())
    return [lt("psi_r(cube) < psi_r(ball of equal volume)", psi_r(cube, SEQ3, samples, seed, threads), ball_value)]


def check_busemann_straus_equality(samples, seed, threads):
    E = Ellipsoid(np.diag([4.0, 0.25, 1.0]))
    return [eq("psi_r(det-1 ellipsoid) = ball value", psi_r(E, SEQ3, samples, seed, threads), ellipsoid_oracle_psi(E, SEQ3))]


def check_example1(samples, seed, threads):
    omega = Permutation((2, 1, 3))
    return [
        eq("psi_omega(cube) = 4/pi", psi_omega(Cube(3), omega, samples, seed, threads), 4 / math.pi),
        eq("psi_omega(random symmetric polytope) = 4/pi",
           psi_omega(_symmetric_polytope(), omega, samples, seed, threads), 4 / math.pi),
    ]


@cache
def example2_reference() -> dict:
    text = resources.files("flagquer").joinpath("data/example2_reference.json").read_text()
    return json.loads(text)


def check_example2(samples, seed, threads):
    ref = example2_reference()
    a_round = example2_A(1, 1, 1, samples, _derive(seed, 1), threads)
    a_flat = example2_A(1, 2, 0.5, samples, _derive(seed, 2), threads)
    a_perm = example2_A(2, 0.5, 1, samples, _derive(seed, 3), threads)
    gap = Comparison("A(1,2,1/2) < A(1,1,1) by more than 5 SE", "drift",
                     a_flat.mean, a_round.mean, a_flat.std_error, a_round.std_error)
    return [
        lt("A(1,2,1/2) < A(1,1,1)", a_flat, a_round),
        gap,
        eq("A(1,1,1) = quadrature fixture", a_round, ref["value"]),
        eq("A(2,1/2,1) = A(1,2,1/2)", a_perm, a_flat),
    ]


def check_sphere_identity(samples, seed, threads):
    flag, sphere = phi_omega_sphere_identity(Cube(3), samples, seed, threads)
    bflag, bsphere = phi_omega_sphere_identity(Ball(3), samples, seed, threads)
    twice = (2 * sphere.mean, 2 * sphere.std_error)
    return [
        eq("cube: flag average = 2 x sphere integral", flag, twice),
        eq("ball: sphere integral = 1/pi^2", bsphere, 1 / math.pi**2),
        eq("ball: flag average = 2/pi^2", bflag, 2 / math.pi**2),
    ]


def check_partial_vs_full(samples, seed, threads):
    out = []
    cube = Cube(3)
    for seq in (SEQ3, IndexSeq(3, (2,))):
        out.append(eq(f"cube seq=({seq}) partial vs complete",
                      psi_r(cube, seq, samples, _derive(seed, 1), threads, sampler="partial"),
                      psi_r(cube, seq, samples, _derive(seed, 2), threads, sampler="complete")))
    E = Ellipsoid(np.diag([3.0, 1.0, 0.5, 2.0]))
    seq = IndexSeq(4, (1, 3))
    out.append(eq("ellipsoid n=4 seq=(1,3) partial vs nested",
                  psi_r(E, seq, samples, _derive(seed, 3), threads, sampler="partial"),
                  psi_r(E, seq, samples, _derive(seed, 4), threads, sampler="nested")))
    return out


def _santalo_rows(samples, seed, threads):
    ball2 = ball_closed_form(SEQ3) ** 2
    rows = []
    for name, L in (("cube", Cube(3)), ("cross-polytope", cross_polytope(3)),
                    ("ellipsoid", Ellipsoid(np.diag([4.0, 0.25, 1.0])))):
        prod = product(phi_r(L.polar(), SEQ3, samples, seed, threads), psi_r(L, SEQ3, samples, seed, threads))
        rows.append((name, prod, ball2))
    return rows


def check_santalo(samples, seed, threads):
    out = []
    for name, prod, ball2 in _santalo_rows(samples, seed, threads):
        if name == "ellipsoid":
            out.append(eq("ellipsoid: phi_r(polar)*psi_r = ball value", prod, ball2))
        else:
            out.append(le(f"{name}: phi_r(polar)*psi_r <= ball value", prod, ball2))
    return out


def check_santalo_reverse(samples, seed, threads):
    rows = _santalo_rows(samples, seed, threads)
    return [_cmp(f"{name}: product / ball value", "report", quotient(prod, ball2), 1.0)
            for name, prod, ball2 in rows if name != "ellipsoid"]


def _sandwich_bodies():
    return (("cube", Cube(3)), ("centered simplex", simplex(3)), ("random polytope", random_polytope(3, 12, seed=7)))


def check_sandwich(samples, seed, threads):
    ball = ball_closed_form(SEQ3)
    out = []
    for name, L in _sandwich_bodies():
        ratio = quotient(phi_r(L, SEQ3, samples, seed, threads), ball)
        out.append(le(f"{name}: phi_r / phi_r(ball) <= mean width", ratio,
                      mean_width(L, samples, _derive(seed, 9), threads)))
    return out


def check_sandwich_lower(samples, seed, threads):
    ball = ball_closed_form(SEQ3)
    out = []
    for name, L in _sandwich_bodies():
        ratio = quotient(phi_r(L, SEQ3, samples, seed, threads), ball * L.volume_radius())
        out.append(_cmp(f"{name}: phi_r / phi_r(ball of equal volume)", "report", ratio, 1.0))
    return out


def check_functional_invariance(samples, seed, threads):
    G = fn.GaussianFn.standard(3)
    exact = math.pi ** (SEQ3.top * SEQ3.n / 2)
    out = [eq("standard Gaussian I(f) = pi^(i_r n/2)", fn.functional_I(G, SEQ3, samples, seed, threads), exact)]
    rng = np.random.default_rng(_derive(seed, 10))
    for k in range(10):
        g = _sl3(rng)
        out.append(eq(f"I(g.f) = I(f), g #{k + 1}", fn.functional_I(G.compose_linear(g), SEQ3, samples, seed, threads),
                      exact))
    return out


def check_functional_balance(samples, seed, threads):
    G = fn.GaussianFn(np.diag([1.0, 2.0, 0.5]))
    T = np.diag([4.0, 0.25, 1.0])
    balanced = list(SEQ3.dual_exponents())
    sup = [1.0, 3.0]
    a = fn.mixed_norm_statistic(G, SEQ3, balanced, sup, samples, seed, threads)
    b = fn.mixed_norm_statistic(G.compose_linear(T), SEQ3, balanced, sup, samples, seed, threads)
    c = fn.mixed_norm_statistic(G, SEQ3, [1.0, 1.0], sup, samples, seed, threads)
    d = fn.mixed_norm_statistic(G.compose_linear(T), SEQ3, [1.0, 1.0], sup, samples, seed, threads)
    return [eq("balanced profile invariant under diag(4,1/4,1)", b, a),
            _cmp("unbalanced profile drifts under diag(4,1/4,1)", "drift", d, c)]


def _bound_row(label, report: fn.BoundReport, equality=False) -> Comparison:
    if equality:
        return eq(label, report.estimate, report.bound)
    return lt(label, report.estimate, report.bound)


def check_dpp(samples, seed, threads):
    seq = SEQ3
    cases = [
        ("standard Gaussian", fn.GaussianFn.standard(3), False),
        ("Gaussian diag(1,2,1/2)", fn.GaussianFn(np.diag([1.0, 2.0, 0.5])), False),
        ("cube indicator", fn.LevelStack.indicator(Cube(3)), False),
        ("simplex indicator", fn.LevelStack.indicator(simplex(3)), False),
        ("cube/simplex stack", fn.LevelStack([0.5, 1.0], [Cube(3), simplex(3)]), False),
        ("ball indicator", fn.LevelStack.indicator(Ball(3)), True),
    ]
    return [_bound_row(f"{name}: flag average vs bound", fn.dpp_flag_ratio(f, seq, samples, seed, threads), eqty)
            for name, f, eqty in cases]


def check_ext(samples, seed, threads):
    seq = IndexSeq(4, (2, 3))
    g1 = fn.GaussianFn(np.diag([1.0, 2.0, 0.5, 1.0]))
    g2 = fn.GaussianFn.standard(4)
    ball = fn.LevelStack.indicator(Ball(4))
    return [
        _bound_row("q=2 Gaussians: flag average vs bound", fn.multi_function_ratio([g1, g2], seq, samples, seed, threads)),
        _bound_row("q=2 ball indicators: equality", fn.multi_function_ratio([ball, ball], seq, samples, seed, threads), True),
    ]


def check_determinism(samples, seed, threads):
    a = psi_r(Cube(3), SEQ3, samples, seed, threads=1)
    b = psi_r(Cube(3), SEQ3, samples, seed, threads=4)
    return [
        Comparison("mean, 1 vs 4 threads", "exact", a.mean, b.mean),
        Comparison("std_error, 1 vs 4 threads", "exact", a.std_error, b.std_error),
    ]


def check_se_scaling(samples, seed, threads):
    a = psi_r(Cube(3), SEQ3, samples, seed, threads)
    b = psi_r(Cube(3), SEQ3, 2 * samples, _derive(seed, 12), threads)
    ratio = a.std_error / b.std_error
    return [Comparison("SE(N) / SE(2N) = sqrt(2) +/- 20%", "exact", ratio, math.sqrt(2), tol=0.2 * math.sqrt(2))]


def check_homogeneity(samples, seed, threads):
    cube, big = Cube(3), Cube(3, 2.0)
    rel = 1e-12
    out = []
    a, b = psi_r(cube, SEQ3, samples, seed, threads), psi_r(big, SEQ3, samples, seed, threads)
    out.append(Comparison("psi_r(2L) = 2 psi_r(L)", "exact", b.mean, 2 * a.mean, tol=rel * b.mean))
    a, b = phi_r(cube, SEQ3, samples, seed, threads), phi_r(big, SEQ3, samples, seed, threads)
    out.append(Comparison("phi_r(2L) = 2 phi_r(L)", "exact", b.mean, 2 * a.mean, tol=rel * b.mean))
    a, b = psi_full(cube, samples, seed, threads), psi_full(big, samples, seed, threads)
    out.append(Comparison("psi_full(2L) = 2 psi_full(L)", "exact", b.mean, 2 * a.mean, tol=rel * b.mean))
    c = psi_omega(cube, Permutation.reversal(3), samples, seed, threads)
    out.append(Comparison("psi_full = psi_omega(reversal)", "exact", c.mean, a.mean, tol=rel * a.mean))
    omega = Permutation((2, 1, 3))
    a, b = psi_omega(cube, omega, samples, seed, threads), psi_omega(big, omega, samples, seed, threads)
    out.append(Comparison("psi_omega(2L) = psi_omega(L) when omega(n) = n", "exact", b.mean, a.mean, tol=rel * a.mean))
    return out


def check_identities(samples, seed, threads):
    from itertools import permutations

    bad_seq = sum(seq.homogeneity() != seq.top * seq.n for n in range(2, 9) for seq in all_index_seqs(n))
    bad_perm = 0
    for n in range(2, 7):
        for vals in permutations(range(1, n + 1)):
            w = Permutation(vals)
            d = w.delta()
            bad_perm += sum(d) != n - w.last + w.values[0] - 1
            bad_perm += w.homogeneity() != n * (n - w.last)
    return [
        Comparison("index-sequence identity failures (n <= 8)", "exact", bad_seq, 0),
        Comparison("permutation identity failures (n <= 6)", "exact", bad_perm, 0),
    ]


REGISTRY: dict[str, CheckSpec] = {}


def register(name, criterion, kind, claim, run, samples=DEFAULT_SAMPLES):
    REGISTRY[name] = CheckSpec(name, criterion, kind, claim, run, samples)


register("ball-closed-form", 1, "equality",
         "flag quantities of the unit ball match the closed form for every index sequence with r <= 3, n = 3..5",
         check_ball_closed_form)
register("sln-invariance", 2, "equality",
         "psi_r is unchanged by volume-preserving linear maps; phi_r also by translations", check_sln_invariance)
register("sln-invariance-negative-control", 2, "one-sided",
         "a section average violating the exponent balance changes under diag(4,1/4,1)", check_negative_control)
register("busemann-straus-cube", 3, "one-sided",
         "psi_r of the cube is strictly below that of the ball of equal volume", check_busemann_straus)
register("busemann-straus-ellipsoid", 3, "equality",
         "volume-one ellipsoids attain the ball value", check_busemann_straus_equality)
register("example1-4-over-pi", 4, "equality",
         "for omega = (2,1,3) the flag average of |L cap F1|^2 / |L cap F2| is 4/pi for symmetric bodies",
         check_example1)
register("example2-deformed-cube", 5, "one-sided",
         "the sphere functional A drops when the cube is deformed by diag(1,2,1/2)", check_example2)
register("sphere-identity", 6, "equality",
         "the omega = (1,3,2) projection average equals a sphere integral of mean width over projection-body support",
         check_sphere_identity)
register("partial-vs-full-flag", 7, "equality",
         "sampling partial flags directly agrees with reading them off complete flags", check_partial_vs_full)
register("santalo-pair", 8, "one-sided",
         "phi_r(polar L) psi_r(L) is at most its ball value, with equality for ellipsoids", check_santalo)
register("santalo-reverse-ratio", 8, "report-only",
         "ratio to the ball value (reverse inequality has no explicit constant)", check_santalo_reverse)
register("sandwich-upper", 9, "one-sided",
         "phi_r(L) / phi_r(B) is at most the mean width of L", check_sandwich)
register("sandwich-lower-ratio", 9, "report-only",
         "phi_r(L) relative to the ball of equal volume (lower constant unspecified)", check_sandwich_lower)
register("functional-invariance", 10, "equality",
         "I(f) for Gaussians exp(-x^T g^T g x), g in SL_3, equals the standard Gaussian value", check_functional_invariance)
register("functional-balance", 10, "equality",
         "mixed-norm statistics are invariant iff the L1 exponents are balanced", check_functional_balance)
register("flag-dpp-bound", 11, "one-sided",
         "flag average of restriction-norm ratios is below its bound; equality for the ball indicator", check_dpp)
register("flag-dpp-multi", 11, "one-sided",
         "the q-function extension holds for q = i_1 = 2; equality for ball indicators", check_ext)
register("determinism-threads", 12, "equality",
         "results are bit-identical across thread counts", check_determinism)
register("se-scaling", 12, "equality",
         "doubling the samples divides the standard error by about sqrt(2)", check_se_scaling)
register("homogeneity", 12, "equality",
         "scaling identities hold to 1e-12 under common random numbers", check_homogeneity)
register("combinatorial-identities", 12, "equality",
         "index-sequence and permutation identities hold exactly", check_identities)


def names() -> list[str]:
    return list(REGISTRY)


def run_check(spec: CheckSpec | str, samples: int | None = None, seed: int | None = None,
              threads: int | None = None) -> CheckReport:
    """Run one check; estimator errors become a failing report carrying the check name."""
    if isinstance(spec, str):
        if spec not in REGISTRY:
            raise KeyError(f"unknown check {spec!r}")
        spec = REGISTRY[spec]
    samples = spec.samples if samples is None else int(samples)
    seed = spec.seed if seed is None else int(seed)
    t0 = time.perf_counter()
    try:
        comps = tuple(spec.run(samples, seed, threads))
        error = ""
    except Exception as exc:  # noqa: BLE001 - reported with the check name
        comps = ()
        error = f"{spec.name}: {type(exc).__name__}: {exc}"
    runtime = time.perf_counter() - t0
    if spec.kind == "report-only":
        verdict = "report"
    elif error or any(c.passed is False for c in comps):
        verdict = "fail"
    else:
        verdict = "pass"
    return CheckReport(spec.name, spec.criterion, spec.kind, spec.claim, samples, seed, comps, verdict, error, runtime)


@dataclass
class SuiteResult:
    reports: list[CheckReport]

    @property
    def counts(self) -> dict[str, int]:
        out = {"pass": 0, "fail": 0, "report": 0}
        for r in self.reports:
            out[r.verdict] += 1
        return out

    @property
    def exit_code(self) -> int:
        return 1 if any(r.failed for r in self.reports) else 0


def run_suite(selection: Iterable[str] | str = "all", seed: int | None = None, samples: int | None = None,
              threads: int | None = None) -> SuiteResult:
    """Run checks in registry order.  An empty selection yields an empty result."""
    if selection == "all":
        chosen = names()
    else:
        chosen = list(selection)
        unknown = [c for c in chosen if c not in REGISTRY]
        if unknown:
            raise KeyError(f"unknown check(s): {', '.join(unknown)}")
        chosen = [n for n in names() if n in chosen]
    return SuiteResult([run_check(REGISTRY[n], samples, seed, threads) for n in chosen])


# ---------------------------------------------------------------------------
# output


def format_text(result: SuiteResult, detail: bool = True) -> str:
    lines = []
    for r in result.reports:
        lines.append(r.summary_line())
        if detail:
            for c in r.comparisons:
                status = {True: "ok", False: "FAIL", None: "--"}[c.passed]
                lines.append(f"    {status:4s} {c.label}: {c.lhs:.10g} +/- {c.lhs_se:.3g}  vs  "
                             f"{c.rhs:.10g} +/- {c.rhs_se:.3g}  ({c.op}, margin {c.margin:+.3g})")
    k = result.counts
    lines.append(f"{k['pass']} passed, {k['fail']} failed, {k['report']} report-only")
    return "\n".join(lines) + "\n"


def format_json(result: SuiteResult, timing: bool = False) -> str:
    return json.dumps([r.to_dict(timing) for r in result.reports], indent=2, sort_keys=True) + "\n"


CSV_COLUMNS = ("name", "criterion", "kind", "verdict", "comparison", "op", "lhs", "lhs_se", "rhs", "rhs_se", "margin")


def format_csv(result: SuiteResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in result.reports:
        for c in r.comparisons or (None,):
            if c is None:
                w.writerow([r.name, r.criterion, r.kind, r.verdict, "", "", "", "", "", "", ""])
                continue
            w.writerow([r.name, r.criterion, r.kind, r.verdict, c.label, c.op,
                        repr(c.lhs), repr(c.lhs_se), repr(c.rhs), repr(c.rhs_se), _finite(c.margin)])
    return buf.getvalue()
