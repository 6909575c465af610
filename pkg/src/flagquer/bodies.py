"""Convex bodies and the geometric primitives the estimators consume.

Five representations are supported: :class:`Ball`, :class:`Ellipsoid`,
:class:`Cube`, :class:`PolytopeV` and :class:`PolytopeH`.  Bodies are
immutable; both vertex and facet descriptions of polytopes are computed once
at construction.

The batch methods ``section_volumes`` and ``projection_volumes`` take a stack
of frames with shape ``(B, n, k)`` and return ``B`` volumes; they are what the
Monte Carlo estimators call.  The module-level functions wrap them for a
single :class:`~flagquer.sampling.Frame`.
"""
from __future__ import annotations

import math
from typing import Any

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError
from scipy.special import ellipe, gammaln

from . import _kernels
from .sampling import Frame

MAX_DIM_CLOSED = 8
MAX_DIM_POLYTOPE = 6
INTERIOR_MARGIN = 1e-9
SYM_TOL = 1e-10
DET_TOL = 1e-12


class GeometryError(ValueError):
    """Invalid body description or an operation undefined for the body."""


def unit_ball_volume(k: int) -> float:
    """Volume of the Euclidean unit ball in ``R^k`` (1 for ``k = 0``)."""
    return math.exp(0.5 * k * math.log(math.pi) - gammaln(0.5 * k + 1.0))


def _as_bases(frames) -> np.ndarray:
    if isinstance(frames, Frame):
        return frames.basis[None]
    U = np.asarray(frames, dtype=float)
    return U[None] if U.ndim == 2 else U


class Body:
    kind = "body"
    n: int

    # batch interface -------------------------------------------------
    def section_volumes(self, bases: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def projection_volumes(self, bases: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def support(self, directions: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # scalar interface ------------------------------------------------
    def volume(self) -> float:
        raise NotImplementedError

    def contains(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def origin_margin(self) -> float:
        """Distance from the origin to the complement (negative if outside)."""
        raise NotImplementedError

    def polar(self) -> "Body":
        raise NotImplementedError

    def apply_linear(self, T) -> "Body":
        raise NotImplementedError

    def translate(self, x) -> "Body":
        raise NotImplementedError

    def project(self, frame: Frame) -> "Body":
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def projection_perimeters(self, bases: np.ndarray) -> np.ndarray:
        """Perimeters of planar projections (``k = 2`` only)."""
        raise NotImplementedError

    def scale(self, lam: float) -> "Body":
        return self.apply_linear(lam * np.eye(self.n))

    def volume_radius(self) -> float:
        return (self.volume() / unit_ball_volume(self.n)) ** (1.0 / self.n)

    def _check_bases(self, U: np.ndarray) -> np.ndarray:
        if U.shape[1] != self.n:
            raise GeometryError(f"frame lives in R^{U.shape[1]}, body in R^{self.n}")
        if U.shape[2] > self.n:
            raise GeometryError("subspace dimension exceeds ambient dimension")
        return U

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"


def _check_linear(T, n: int) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if T.shape != (n, n):
        raise GeometryError(f"linear map must be {n} x {n}")
    if abs(np.linalg.det(T)) <= DET_TOL:
        raise GeometryError("linear map is singular")
    return T


def _check_dim(n: int, cap: int):
    if n < 1:
        raise GeometryError("dimension must be >= 1")
    if n > cap:
        raise GeometryError(f"dimension {n} exceeds the supported maximum {cap}")


# ---------------------------------------------------------------------------
# quadrics


class Ellipsoid(Body):
    """``{x : (x - c)^T M (x - c) <= 1}`` for symmetric positive-definite ``M``."""

    kind = "ellipsoid"

    def __init__(self, matrix, center=None):
        M = np.array(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise GeometryError("ellipsoid matrix must be square")
        _check_dim(M.shape[0], MAX_DIM_CLOSED)
        if np.abs(M - M.T).max() > SYM_TOL * max(1.0, np.abs(M).max()):
            raise GeometryError("ellipsoid matrix is not symmetric")
        M = 0.5 * (M + M.T)
        eig = np.linalg.eigvalsh(M)
        if eig.min() <= 0:
            raise GeometryError("ellipsoid matrix is not positive definite")
        self.n = M.shape[0]
        self.matrix = M
        self.center = np.zeros(self.n) if center is None else np.array(center, dtype=float)
        if self.center.shape != (self.n,):
            raise GeometryError("center has the wrong dimension")
        self.inverse = np.linalg.inv(M)
        self._det = float(np.prod(eig))
        self._min_eig = float(eig.min())
        for a in (self.matrix, self.center, self.inverse):
            a.setflags(write=False)

    def volume(self):
        return unit_ball_volume(self.n) / math.sqrt(self._det)

    def _centered(self):
        return not np.any(self.center)

    def section_volumes(self, bases):
        U = self._check_bases(_as_bases(bases))
        k = U.shape[2]
        G = np.einsum("bik,ij,bjl->bkl", U, self.matrix, U)
        det = np.linalg.det(G)
        if self._centered():
            return unit_ball_volume(k) / np.sqrt(det)
        w = np.einsum("bik,i->bk", U, self.matrix @ self.center)
        y0 = np.linalg.solve(G, w[..., None])[..., 0]
        level = 1.0 - self.center @ self.matrix @ self.center + np.einsum("bk,bk->b", w, y0)
        vol = unit_ball_volume(k) * np.clip(level, 0.0, None) ** (0.5 * k) / np.sqrt(det)
        return vol

    def _projected_shape(self, U):
        return np.einsum("bik,ij,bjl->bkl", U, self.inverse, U)

    def projection_volumes(self, bases):
        U = self._check_bases(_as_bases(bases))
        return unit_ball_volume(U.shape[2]) * np.sqrt(np.linalg.det(self._projected_shape(U)))

    def projection_perimeters(self, bases):
        U = self._check_bases(_as_bases(bases))
        if U.shape[2] != 2:
            raise GeometryError("perimeters are only defined for planar projections")
        ev = np.linalg.eigvalsh(self._projected_shape(U))
        a = np.sqrt(ev[:, 1])
        b = np.sqrt(ev[:, 0])
        return 4.0 * a * ellipe(1.0 - (b / a) ** 2)

    def support(self, directions):
        th = np.atleast_2d(directions)
        out = np.sqrt(np.einsum("bi,ij,bj->b", th, self.inverse, th)) + th @ self.center
        return out if np.ndim(directions) == 2 else float(out[0])

    def contains(self, points):
        d = np.atleast_2d(points) - self.center
        return np.einsum("bi,ij,bj->b", d, self.matrix, d) <= 1.0 + 1e-12

    def origin_margin(self):
        # lower bound (1 - |c|_M) / sqrt(lambda_max); exact when centered
        q = float(self.center @ self.matrix @ self.center)
        if q >= 1.0:
            return -1.0
        return (1.0 - math.sqrt(q)) / math.sqrt(np.linalg.eigvalsh(self.matrix).max())

    def polar(self):
        if self.origin_margin() <= INTERIOR_MARGIN:
            raise GeometryError("polar undefined: origin is not interior")
        c = self.center
        if self._centered():
            return Ellipsoid(self.inverse)
        N = self.inverse - np.outer(c, c)
        Ninv_c = np.linalg.solve(N, c)
        return Ellipsoid(N / (1.0 + c @ Ninv_c), center=-Ninv_c)

    def apply_linear(self, T):
        T = _check_linear(T, self.n)
        Ti = np.linalg.inv(T)
        return Ellipsoid(Ti.T @ self.matrix @ Ti, center=T @ self.center)

    def translate(self, x):
        return Ellipsoid(self.matrix, center=self.center + np.asarray(x, dtype=float))

    def project(self, frame):
        U = frame.basis
        if U.shape[1] == self.n and np.allclose(U, np.eye(self.n)):
            return self
        S = U.T @ self.inverse @ U
        return Ellipsoid(np.linalg.inv(S), center=U.T @ self.center)

    def to_dict(self):
        d = {"type": "ellipsoid", "n": self.n, "matrix": self.matrix.reshape(-1).tolist()}
        if not self._centered():
            d["center"] = self.center.tolist()
        return d


class Ball(Ellipsoid):
    """Euclidean ball; a special case of :class:`Ellipsoid` with exact formulas."""

    kind = "ball"

    def __init__(self, n: int, radius: float = 1.0, center=None):
        if radius <= 0:
            raise GeometryError("radius must be positive")
        _check_dim(n, MAX_DIM_CLOSED)
        self.radius = float(radius)
        super().__init__(np.eye(n) / self.radius**2, center=center)

    def volume(self):
        return unit_ball_volume(self.n) * self.radius**self.n

    def section_volumes(self, bases):
        U = self._check_bases(_as_bases(bases))
        k = U.shape[2]
        if self._centered():
            return np.full(U.shape[0], unit_ball_volume(k) * self.radius**k)
        inside = np.einsum("bik,i->bk", U, self.center)
        d2 = self.center @ self.center - np.einsum("bk,bk->b", inside, inside)
        rho2 = np.clip(self.radius**2 - d2, 0.0, None)
        return unit_ball_volume(k) * rho2 ** (0.5 * k)

    def projection_volumes(self, bases):
        U = self._check_bases(_as_bases(bases))
        k = U.shape[2]
        return np.full(U.shape[0], unit_ball_volume(k) * self.radius**k)

    def projection_perimeters(self, bases):
        U = self._check_bases(_as_bases(bases))
        return np.full(U.shape[0], 2.0 * math.pi * self.radius)

    def support(self, directions):
        th = np.atleast_2d(directions)
        out = self.radius * np.linalg.norm(th, axis=1) + th @ self.center
        return out if np.ndim(directions) == 2 else float(out[0])

    def origin_margin(self):
        return self.radius - float(np.linalg.norm(self.center))

    def polar(self):
        if self._centered():
            return Ball(self.n, 1.0 / self.radius)
        return super().polar()

    def apply_linear(self, T):
        T = _check_linear(T, self.n)
        TT = T @ T.T
        s2 = TT[0, 0]
        if np.allclose(TT, s2 * np.eye(self.n), rtol=0, atol=1e-12 * s2):
            return Ball(self.n, self.radius * math.sqrt(s2), center=T @ self.center)
        return super().apply_linear(T)

    def translate(self, x):
        return Ball(self.n, self.radius, center=self.center + np.asarray(x, dtype=float))

    def project(self, frame):
        U = frame.basis
        if U.shape[1] == self.n and np.allclose(U, np.eye(self.n)):
            return self
        return Ball(U.shape[1], self.radius, center=U.T @ self.center)

    def to_dict(self):
        d = {"type": "ball", "n": self.n, "radius": self.radius}
        if not self._centered():
            d["center"] = self.center.tolist()
        return d


# ---------------------------------------------------------------------------
# polytopes


def _interval_lengths(C: np.ndarray, b: np.ndarray) -> np.ndarray:
    # C: (B, m) slopes of the constraints c t <= b along a line through 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = b / C
    hi = np.where(C > 0, ratio, np.inf).min(axis=1)
    lo = np.where(C < 0, ratio, -np.inf).max(axis=1)
    flat_ok = np.all(np.where(C == 0, b >= 0, True), axis=1)
    return np.where(flat_ok, np.clip(hi - lo, 0.0, None), 0.0)


def _hrep_from_vertices(V: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = V.shape[1]
    if n == 1:
        lo, hi = V.min(), V.max()
        return np.array([[lo], [hi]]), np.array([[1.0], [-1.0]]), np.array([hi, -lo])
    try:
        hull = ConvexHull(V)
    except QhullError as exc:
        raise GeometryError("degenerate: vertices are not full-dimensional") from exc
    eq = hull.equations
    keys = np.round(eq / 1e-10).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    eq = eq[np.sort(first)]
    return V[hull.vertices], eq[:, :-1], -eq[:, -1]


class Polytope(Body):
    """Shared machinery for polytopes stored with both V- and H-descriptions."""

    def _setup(self, vertices: np.ndarray, A: np.ndarray, b: np.ndarray):
        self.n = vertices.shape[1]
        self.vertices = vertices
        self.A = A
        self.b = b
        self._radius = float(np.linalg.norm(vertices, axis=1).max())
        self._volume = _kernels.fan_volume(vertices) if self.n > 1 else float(vertices.max() - vertices.min())
        if self._volume <= 0:
            raise GeometryError("degenerate: polytope has empty interior")
        for a in (self.vertices, self.A, self.b):
            a.setflags(write=False)

    def volume(self):
        return self._volume

    def section_volumes(self, bases):
        U = self._check_bases(_as_bases(bases))
        B, _, k = U.shape
        if k == self.n:
            return np.full(B, self.volume())
        C = np.einsum("mi,bik->bmk", self.A, U)
        if k == 1:
            return _interval_lengths(C[..., 0], self.b)
        if k == 2:
            return _kernels.clip_areas(np.ascontiguousarray(C), self.b, 2.0 * self._radius + 1.0)
        return np.array([_kernels.hpoly_volume(C[s], self.b) for s in range(B)])

    def projection_volumes(self, bases):
        U = self._check_bases(_as_bases(bases))
        B, _, k = U.shape
        if k == self.n:
            return np.full(B, self.volume())
        P = np.einsum("pi,bik->bpk", self.vertices, U)
        if k == 1:
            return P[..., 0].max(axis=1) - P[..., 0].min(axis=1)
        if k == 2:
            return _kernels.hull_areas(np.ascontiguousarray(P))[0]
        return np.array([_kernels.fan_volume(P[s]) for s in range(B)])

    def projection_perimeters(self, bases):
        U = self._check_bases(_as_bases(bases))
        if U.shape[2] != 2:
            raise GeometryError("perimeters are only defined for planar projections")
        P = np.einsum("pi,bik->bpk", self.vertices, U)
        return _kernels.hull_areas(np.ascontiguousarray(P))[1]

    def support(self, directions):
        th = np.atleast_2d(directions)
        out = (th @ self.vertices.T).max(axis=1)
        return out if np.ndim(directions) == 2 else float(out[0])

    def contains(self, points):
        x = np.atleast_2d(points)
        scale = np.linalg.norm(self.A, axis=1)
        return np.all(x @ self.A.T <= self.b + 1e-12 * scale, axis=1)

    def origin_margin(self):
        return float((self.b / np.linalg.norm(self.A, axis=1)).min())

    def polar(self):
        if self.origin_margin() <= INTERIOR_MARGIN:
            raise GeometryError("polar undefined: origin is not interior")
        return PolytopeH(self.vertices, np.ones(len(self.vertices)))

    def apply_linear(self, T):
        T = _check_linear(T, self.n)
        return PolytopeV(self.vertices @ T.T)

    def translate(self, x):
        return PolytopeV(self.vertices + np.asarray(x, dtype=float))

    def project(self, frame):
        U = frame.basis
        if U.shape[1] == self.n and np.allclose(U, np.eye(self.n)):
            return self
        return PolytopeV(self.vertices @ U)


class PolytopeV(Polytope):
    """Convex hull of a finite point set."""

    kind = "polytope_v"

    def __init__(self, vertices):
        V = np.array(vertices, dtype=float)
        if V.ndim != 2:
            raise GeometryError("vertices must be a list of n-vectors")
        n = V.shape[1]
        _check_dim(n, MAX_DIM_POLYTOPE)
        if len(V) < n + 1:
            raise GeometryError("degenerate: need at least n + 1 vertices")
        rank = np.linalg.matrix_rank(V[1:] - V[0], tol=1e-10 * max(1.0, np.abs(V).max()))
        if rank < n:
            raise GeometryError("degenerate: vertices are not affinely independent")
        self._setup(*_hrep_from_vertices(V))

    def to_dict(self):
        return {"type": "polytope_v", "n": self.n, "vertices": self.vertices.tolist()}


class PolytopeH(Polytope):
    """``{x : A x <= b}``; must be bounded with nonempty interior."""

    kind = "polytope_h"

    def __init__(self, A, b):
        A = np.array(A, dtype=float)
        b = np.array(b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != b.shape[0]:
            raise GeometryError("A must be m x n and b an m-vector")
        n = A.shape[1]
        _check_dim(n, MAX_DIM_POLYTOPE)
        if np.any(np.linalg.norm(A, axis=1) == 0):
            raise GeometryError("A has a zero row")
        _check_bounded(A, b)
        _check_interior(A, b)
        V = _kernels.enumerate_vertices(A, b)
        self._given = (A.copy(), b.copy())
        self._setup(V, A, b)

    def to_dict(self):
        A, b = self._given
        return {"type": "polytope_h", "n": self.n, "A": A.tolist(), "b": b.tolist()}

    def apply_linear(self, T):
        T = _check_linear(T, self.n)
        A, b = self._given
        return PolytopeH(A @ np.linalg.inv(T), b)

    def translate(self, x):
        A, b = self._given
        return PolytopeH(A, b + A @ np.asarray(x, dtype=float))


def _check_bounded(A, b):
    n = A.shape[1]
    for i in range(n):
        for sgn in (1.0, -1.0):
            c = np.zeros(n)
            c[i] = -sgn
            res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
            if res.status == 3:
                raise GeometryError("unbounded")
            if res.status == 2:
                raise GeometryError("degenerate: polytope is empty")


def _check_interior(A, b):
    # Chebyshev centre: maximise t subject to a_i x + |a_i| t <= b_i
    m, n = A.shape
    norms = np.linalg.norm(A, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = linprog(
        c,
        A_ub=np.column_stack([A, norms]),
        b_ub=b,
        bounds=[(None, None)] * n + [(0, None)],
        method="highs",
    )
    if res.status != 0 or -res.fun <= 1e-12:
        raise GeometryError("degenerate: polytope has empty interior")


class Cube(Polytope):
    """Centered cube ``[-h, h]^n``."""

    kind = "cube"

    def __init__(self, n: int, half_width: float = 1.0):
        _check_dim(n, MAX_DIM_CLOSED)
        if half_width <= 0:
            raise GeometryError("half_width must be positive")
        self.half_width = float(half_width)
        h = self.half_width
        signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * n, indexing="ij")).reshape(n, -1).T
        A = np.vstack([np.eye(n), -np.eye(n)])
        self.n = n
        self.vertices = h * signs
        self.A = A
        self.b = np.full(2 * n, h)
        self._radius = h * math.sqrt(n)
        self._volume = (2.0 * h) ** n
        for a in (self.vertices, self.A, self.b):
            a.setflags(write=False)

    def support(self, directions):
        th = np.atleast_2d(directions)
        out = self.half_width * np.abs(th).sum(axis=1)
        return out if np.ndim(directions) == 2 else float(out[0])

    def origin_margin(self):
        return self.half_width

    def polar(self):
        n = self.n
        return PolytopeV(np.vstack([np.eye(n), -np.eye(n)]) / self.half_width)

    def apply_linear(self, T):
        T = _check_linear(T, self.n)
        s = T[0, 0]
        if np.allclose(T, s * np.eye(self.n), rtol=0, atol=1e-15):
            return Cube(self.n, self.half_width * abs(s))
        return PolytopeV(self.vertices @ T.T)

    def to_dict(self):
        return {"type": "cube", "n": self.n, "half_width": self.half_width}


# ---------------------------------------------------------------------------
# module-level API


def volume(body: Body) -> float:
    return body.volume()


def volume_radius(body: Body) -> float:
    """Radius of the Euclidean ball with the same volume as ``body``."""
    return body.volume_radius()


def section_volume(body: Body, frame: Frame | np.ndarray) -> float:
    """k-dimensional volume of ``body`` intersected with the span of ``frame``."""
    return float(body.section_volumes(_as_bases(_frame_basis(frame)))[0])


def projection_volume(body: Body, frame: Frame | np.ndarray) -> float:
    """k-dimensional volume of the orthogonal projection onto the span of ``frame``."""
    return float(body.projection_volumes(_as_bases(_frame_basis(frame)))[0])


def _frame_basis(frame):
    return frame.basis if isinstance(frame, Frame) else Frame(frame).basis


def polar(body: Body) -> Body:
    return body.polar()


def support(body: Body, direction) -> float:
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise GeometryError("direction must be a unit vector")
    return body.support(direction)


def apply_linear(body: Body, T) -> Body:
    return body.apply_linear(T)


def translate(body: Body, x) -> Body:
    return body.translate(x)


def projection_body_support(body: Body, direction) -> float:
    """Support function of the projection body: ``|P_{u^perp} L|``."""
    return projection_volume(body, Frame.orthogonal_complement(direction))


def mean_width(body: Body, samples: int = 200_000, seed: int = 0, threads: int | None = None):
    """Average of the support function over the uniform probability on the sphere.

    This is half of the classical mean width, so the unit ball gives 1.
    """
    from .estimate import sphere_average

    return sphere_average(
        lambda th: body.support(th)[:, None], body.n, samples, seed, threads=threads, quantity="mean_width"
    )


def random_polytope(n: int, points: int, seed: int, symmetric: bool = False) -> PolytopeV:
    """Convex hull of Gaussian points (mirrored through 0 when ``symmetric``)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((points, n))
    if symmetric:
        X = np.vstack([X, -X])
    return PolytopeV(X)


def simplex(n: int, centered: bool = True) -> PolytopeV:
    """Standard simplex ``conv{0, e_1, ..., e_n}``, optionally moved to its centroid."""
    V = np.vstack([np.zeros(n), np.eye(n)])
    if centered:
        V = V - V.mean(axis=0)
    return PolytopeV(V)


def cross_polytope(n: int, radius: float = 1.0) -> PolytopeV:
    return PolytopeV(radius * np.vstack([np.eye(n), -np.eye(n)]))


# ---------------------------------------------------------------------------
# JSON


def body_from_dict(d: dict[str, Any]) -> Body:
    """Parse and validate a body description.

    Raises :class:`GeometryError` naming the first violated requirement.
    """
    if not isinstance(d, dict):
        raise GeometryError("body must be a JSON object")
    kind = d.get("type")
    if "n" not in d:
        raise GeometryError("body is missing 'n'")
    n = d["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise GeometryError("'n' must be an integer")

    def need(key):
        if key not in d:
            raise GeometryError(f"{kind} body is missing '{key}'")
        return d[key]

    center = d.get("center")
    if kind == "ball":
        body = Ball(n, float(need("radius")), center=center)
    elif kind == "ellipsoid":
        M = np.asarray(need("matrix"), dtype=float)
        if M.size != n * n:
            raise GeometryError(f"ellipsoid matrix must have {n * n} entries")
        body = Ellipsoid(M.reshape(n, n), center=center)
    elif kind == "cube":
        body = Cube(n, float(need("half_width")))
    elif kind == "polytope_v":
        body = PolytopeV(need("vertices"))
    elif kind == "polytope_h":
        body = PolytopeH(need("A"), need("b"))
    else:
        raise GeometryError(f"unknown body type {kind!r}")
    if body.n != n:
        raise GeometryError(f"declared n={n} but the data is {body.n}-dimensional")
    return body


def body_to_dict(body: Body) -> dict[str, Any]:
    return body.to_dict()
