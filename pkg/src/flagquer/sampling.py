"""Haar sampling of orthogonal matrices, subspaces, flags and sphere points.

Every random draw is a pure function of ``(seed, stream, sample index)``:
samples are generated in fixed-size blocks and each block owns an independent
``SeedSequence`` child, so a given sample is reproduced bit-for-bit no matter
how many workers process the blocks or how many samples are requested.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

BLOCK = 4096
ORTHO_TOL = 1e-10
NEST_TOL = 1e-9

# stream tags keep unrelated draws on disjoint substreams
STREAM_PARTIAL = 1
STREAM_COMPLETE = 2
STREAM_NESTED = 3
STREAM_SPHERE = 4


@dataclass(frozen=True)
class IndexSeq:
    """Strictly increasing dimensions ``i_1 < ... < i_r`` inside ``R^n``."""

    n: int
    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if self.n < 2:
            raise ValueError(f"ambient dimension must be >= 2, got {self.n}")
        if not self.indices:
            raise ValueError("index sequence must be non-empty")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.indices[0] < 1 or self.indices[-1] > self.n - 1:
            raise ValueError(f"indices must lie in [1, {self.n - 1}]")

    @classmethod
    def parse(cls, n: int, text: str | Sequence[int]) -> "IndexSeq":
        if isinstance(text, str):
            text = [int(t) for t in text.replace(" ", "").split(",") if t]
        return cls(n, tuple(text))

    @classmethod
    def complete(cls, n: int) -> "IndexSeq":
        return cls(n, tuple(range(1, n)))

    @property
    def r(self) -> int:
        return len(self.indices)

    @property
    def top(self) -> int:
        return self.indices[-1]

    def padded(self) -> tuple[int, ...]:
        """``(i_0, i_1, ..., i_r, i_{r+1})`` with ``i_0 = 0`` and ``i_{r+1} = n``."""
        return (0,) + self.indices + (self.n,)

    def dual_exponents(self) -> tuple[int, ...]:
        """Exponents ``i_{j+1} - i_{j-1}`` attached to the j-th subspace."""
        p = self.padded()
        return tuple(p[j + 1] - p[j - 1] for j in range(1, self.r + 1))

    def homogeneity(self) -> int:
        """``sum_j i_j (i_{j+1} - i_{j-1})``, which always equals ``i_r * n``."""
        return sum(i * e for i, e in zip(self.indices, self.dual_exponents()))

    def __str__(self):
        return ",".join(map(str, self.indices))


def all_index_seqs(n: int, max_r: int | None = None) -> Iterator[IndexSeq]:
    from itertools import combinations

    top = n - 1 if max_r is None else min(max_r, n - 1)
    for r in range(1, top + 1):
        for c in combinations(range(1, n), r):
            yield IndexSeq(n, c)


@dataclass(frozen=True)
class Frame:
    """Column-orthonormal ``n x k`` basis of a subspace."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        if basis.ndim != 2 or basis.shape[1] > basis.shape[0]:
            raise ValueError(f"frame basis must be n x k with k <= n, got {basis.shape}")
        k = basis.shape[1]
        if not np.allclose(basis.T @ basis, np.eye(k), atol=ORTHO_TOL, rtol=0):
            raise ValueError("frame basis is not column-orthonormal")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def span(cls, vectors) -> "Frame":
        """Orthonormal frame of the span of the given vectors (rows)."""
        V = np.atleast_2d(np.asarray(vectors, dtype=float)).T
        q, r = np.linalg.qr(V)
        if np.min(np.abs(np.diag(r))) < 1e-12:
            raise ValueError("vectors are linearly dependent")
        return cls(q)

    @classmethod
    def coordinate(cls, n: int, axes: Sequence[int]) -> "Frame":
        return cls(np.eye(n)[:, list(axes)])

    @classmethod
    def orthogonal_complement(cls, direction) -> "Frame":
        """Frame of the hyperplane orthogonal to ``direction``."""
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
        q, _ = np.linalg.qr(np.column_stack([u, np.eye(len(u))]))
        return cls(q[:, 1 : len(u)])


@dataclass(frozen=True)
class Flag:
    index_seq: IndexSeq
    frames: tuple[Frame, ...]

    def __post_init__(self):
        dims = tuple(f.k for f in self.frames)
        if dims != self.index_seq.indices:
            raise ValueError(f"frame dimensions {dims} do not match {self.index_seq.indices}")
        for small, big in zip(self.frames, self.frames[1:]):
            U, V = small.basis, big.basis
            if np.abs(U - V @ (V.T @ U)).max() > NEST_TOL:
                raise ValueError("frames are not nested")


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    """Independent generator for one block of samples."""
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(stream, block))
    return np.random.Generator(np.random.PCG64(ss))


def blocks(samples: int, block: int = BLOCK) -> list[tuple[int, int]]:
    """``(block index, block length)`` covering ``samples`` sample indices."""
    out = []
    for b, start in enumerate(range(0, samples, block)):
        out.append((b, min(block, samples - start)))
    return out


def haar_stiefel(rng: np.random.Generator, size: int, n: int, k: int) -> np.ndarray:
    """``size`` Haar-distributed ``n x k`` column-orthonormal matrices.

    Gaussian matrix, reduced QR, columns rescaled so that ``diag(R) > 0``.
    """
    G = rng.standard_normal((size, n, k))
    Q, R = np.linalg.qr(G)
    d = np.sign(np.diagonal(R, axis1=1, axis2=2))
    d[d == 0] = 1.0
    return Q * d[:, None, :]


def sample_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """One Haar-distributed ``n x n`` orthogonal matrix."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return haar_stiefel(rng, 1, n, n)[0]


def sample_sphere(n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform point(s) on ``S^{n-1}`` via normalised Gaussians."""
    if n < 1:
        raise ValueError("n must be >= 1")
    shape = (1 if size is None else size, n)
    x = rng.standard_normal(shape)
    norms = np.linalg.norm(x, axis=1)
    while np.any(norms == 0):  # pragma: no cover - probability zero
        bad = norms == 0
        x[bad] = rng.standard_normal((bad.sum(), n))
        norms = np.linalg.norm(x, axis=1)
    x /= norms[:, None]
    return x[0] if size is None else x


def sample_flag(seq: IndexSeq, rng: np.random.Generator) -> Flag:
    """One Haar flag: the j-th frame is the first ``i_j`` columns of a Haar frame."""
    Q = haar_stiefel(rng, 1, seq.n, seq.top)[0]
    return Flag(seq, tuple(Frame(Q[:, :i]) for i in seq.indices))


def partial_flag_batch(n: int, top: int, seed: int, block: int, size: int) -> np.ndarray:
    """Batch of Haar ``n x top`` frames; sub-frames are leading columns."""
    return haar_stiefel(block_rng(seed, STREAM_PARTIAL, block), size, n, top)


def complete_flag_batch(n: int, seed: int, block: int, size: int) -> np.ndarray:
    """Batch of complete flags as full Haar orthogonal matrices."""
    return haar_stiefel(block_rng(seed, STREAM_COMPLETE, block), size, n, n)


def nested_flag_batch(n: int, seed: int, block: int, size: int) -> np.ndarray:
    """Complete flags built top-down through nested Grassmannians.

    ``F_{n-1}`` is Haar in ``G_{n,n-1}``, then each ``F_{j-1}`` is Haar inside
    ``F_j``.  The returned ``n x n`` array has ``F_j`` spanned by its first
    ``j`` columns.  Each step rotates the leading ``j + 1`` columns by a Haar
    element of ``O(j + 1)``, which keeps the whole basis orthonormal.
    """
    rng = block_rng(seed, STREAM_NESTED, block)
    W = np.tile(np.eye(n), (size, 1, 1))
    for j in range(n - 1, 0, -1):
        S = haar_stiefel(rng, size, j + 1, j + 1)
        W[:, :, : j + 1] = W[:, :, : j + 1] @ S
    return W


def sphere_batch(n: int, seed: int, block: int, size: int, stream: int = STREAM_SPHERE) -> np.ndarray:
    return sample_sphere(n, block_rng(seed, stream, block), size)
