"""Low-level geometry kernels shared by the body representations.

The 2-D kernels are compiled with numba and loop over a batch of samples;
everything above two dimensions goes through exact vertex enumeration and a
hull triangulation.
"""
from __future__ import annotations

import itertools
import math

import numba
import numpy as np
from scipy.spatial import ConvexHull, QhullError

FEAS_TOL = 1e-9
MAX_FACETS = 64


@numba.njit(cache=True, nogil=True)
def _clip_area(C, b, R):
    # Sutherland-Hodgman clip of the square [-R, R]^2 by {y : C y <= b}.
    m = C.shape[0]
    cap = m + 8
    xs = np.empty(cap)
    ys = np.empty(cap)
    nx = np.empty(cap)
    ny = np.empty(cap)
    xs[0] = -R
    ys[0] = -R
    xs[1] = R
    ys[1] = -R
    xs[2] = R
    ys[2] = R
    xs[3] = -R
    ys[3] = R
    cnt = 4
    for i in range(m):
        a0 = C[i, 0]
        a1 = C[i, 1]
        bi = b[i]
        new = 0
        for j in range(cnt):
            k = (j + 1) % cnt
            sj = a0 * xs[j] + a1 * ys[j] - bi
            sk = a0 * xs[k] + a1 * ys[k] - bi
            if sj <= 0.0:
                nx[new] = xs[j]
                ny[new] = ys[j]
                new += 1
            if (sj < 0.0 and sk > 0.0) or (sj > 0.0 and sk < 0.0):
                t = sj / (sj - sk)
                nx[new] = xs[j] + t * (xs[k] - xs[j])
                ny[new] = ys[j] + t * (ys[k] - ys[j])
                new += 1
        cnt = new
        if cnt < 3:
            return 0.0
        for j in range(cnt):
            xs[j] = nx[j]
            ys[j] = ny[j]
    area = 0.0
    for j in range(cnt):
        k = (j + 1) % cnt
        area += xs[j] * ys[k] - xs[k] * ys[j]
    return 0.5 * abs(area)


@numba.njit(cache=True, nogil=True)
def clip_areas(C, b, R):
    """Areas of the planar polygons ``{y : C[s] y <= b}`` for each sample ``s``."""
    out = np.empty(C.shape[0])
    for s in range(C.shape[0]):
        out[s] = _clip_area(C[s], b, R)
    return out


@numba.njit(cache=True, nogil=True)
def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


@numba.njit(cache=True, nogil=True)
def _hull_area_perimeter(P):
    p = P.shape[0]
    order = np.argsort(P[:, 0])
    xs = P[order, 0].copy()
    ys = P[order, 1].copy()
    # break exact x ties by y so the monotone chain sees a strict order
    for i in range(1, p):
        j = i
        while j > 0 and xs[j - 1] == xs[j] and ys[j - 1] > ys[j]:
            tx = xs[j - 1]
            ty = ys[j - 1]
            xs[j - 1] = xs[j]
            ys[j - 1] = ys[j]
            xs[j] = tx
            ys[j] = ty
            j -= 1
    hx = np.empty(2 * p + 1)
    hy = np.empty(2 * p + 1)
    k = 0
    for i in range(p):
        while k >= 2 and _cross(hx[k - 2], hy[k - 2], hx[k - 1], hy[k - 1], xs[i], ys[i]) <= 0.0:
            k -= 1
        hx[k] = xs[i]
        hy[k] = ys[i]
        k += 1
    lower = k + 1
    for i in range(p - 2, -1, -1):
        while k >= lower and _cross(hx[k - 2], hy[k - 2], hx[k - 1], hy[k - 1], xs[i], ys[i]) <= 0.0:
            k -= 1
        hx[k] = xs[i]
        hy[k] = ys[i]
        k += 1
    k -= 1
    area = 0.0
    per = 0.0
    for j in range(k):
        nj = (j + 1) % k
        area += hx[j] * hy[nj] - hx[nj] * hy[j]
        per += math.hypot(hx[nj] - hx[j], hy[nj] - hy[j])
    return 0.5 * abs(area), per


@numba.njit(cache=True, nogil=True)
def hull_areas(P):
    """Area and perimeter of the planar convex hull of ``P[s]`` for each ``s``."""
    B = P.shape[0]
    area = np.empty(B)
    per = np.empty(B)
    for s in range(B):
        a, q = _hull_area_perimeter(P[s])
        area[s] = a
        per[s] = q
    return area, per


def fan_volume(points: np.ndarray) -> float:
    """Volume of conv(points) by a fan from the vertex centroid over hull facets.

    Returns 0 for lower-dimensional point sets.
    """
    points = np.asarray(points, dtype=float)
    npts, k = points.shape
    if k == 1:
        return float(points.max() - points.min()) if npts else 0.0
    if npts <= k:
        return 0.0
    centered = points - points.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-10 * max(1.0, np.abs(centered).max())) < k:
        return 0.0
    try:
        hull = ConvexHull(points)
    except QhullError:
        return 0.0
    c = points[hull.vertices].mean(axis=0)
    simplices = points[hull.simplices] - c
    return float(np.abs(np.linalg.det(simplices)).sum() / math.factorial(k))


def enumerate_vertices(A: np.ndarray, b: np.ndarray, tol: float = FEAS_TOL) -> np.ndarray:
    """Vertices of ``{x : A x <= b}`` by solving every k-subset of facets.

    Subsets with singular systems or infeasible solutions are discarded.  The
    result is deduplicated; an empty polytope gives an empty (0, k) array.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, k = A.shape
    if m > MAX_FACETS:
        raise ValueError(f"vertex enumeration capped at {MAX_FACETS} facets, got {m}")
    if k == 1:
        a = A[:, 0]
        hi = b[a > tol] / a[a > tol]
        lo = b[a < -tol] / a[a < -tol]
        if not len(hi) or not len(lo):
            raise ValueError("unbounded")
        zero_ok = np.all(b[np.abs(a) <= tol] >= -tol)
        top, bot = hi.min(), lo.max()
        if top < bot - tol or not zero_ok:
            return np.empty((0, 1))
        return np.array([[bot], [top]])
    scale = max(1.0, float(np.abs(b).max()))
    found = []
    for chunk in _chunks(itertools.combinations(range(m), k), 4096):
        idx = np.array(chunk)
        As = A[idx]
        bs = b[idx]
        dets = np.linalg.det(As)
        ok = np.abs(dets) > 1e-12
        if not ok.any():
            continue
        xs = np.linalg.solve(As[ok], bs[ok][..., None])[..., 0]
        slack = xs @ A.T - b
        feas = np.all(slack <= tol * scale, axis=1)
        found.append(xs[feas])
    if not found:
        return np.empty((0, k))
    pts = np.concatenate(found)
    if not len(pts):
        return pts.reshape(0, k)
    return _dedupe(pts, 1e-9 * scale)


def _chunks(it, size):
    buf = []
    for item in it:
        buf.append(item)
        if len(buf) == size:
            yield buf
            buf = []
    if buf:
        yield buf


def _dedupe(pts: np.ndarray, tol: float) -> np.ndarray:
    keys = np.round(pts / tol).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return pts[np.sort(first)]


def hpoly_volume(A: np.ndarray, b: np.ndarray) -> float:
    """Volume of a bounded H-polytope; empty or flat polytopes give 0."""
    verts = enumerate_vertices(A, b)
    if len(verts) == 0:
        return 0.0
    return fan_volume(verts)
