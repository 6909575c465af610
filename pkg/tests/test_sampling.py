import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flagquer.sampling import (
    BLOCK,
    Flag,
    Frame,
    IndexSeq,
    all_index_seqs,
    block_rng,
    blocks,
    complete_flag_batch,
    haar_stiefel,
    nested_flag_batch,
    partial_flag_batch,
    sample_flag,
    sample_orthogonal,
    sample_sphere,
)


@st.composite
def index_seqs(draw, max_n=10):
    n = draw(st.integers(2, max_n))
    idx = draw(st.sets(st.integers(1, n - 1), min_size=1))
    return IndexSeq(n, tuple(sorted(idx)))


@given(index_seqs())
def test_index_identity(seq):
    assert seq.homogeneity() == seq.top * seq.n


@given(index_seqs())
def test_dual_exponents_positive(seq):
    assert all(e > 0 for e in seq.dual_exponents())
    assert seq.padded()[0] == 0 and seq.padded()[-1] == seq.n


@pytest.mark.parametrize(
    "n, idx, msg",
    [(3, (2, 2), "strictly increasing"), (3, (2, 1), "strictly increasing"), (3, (0, 1), r"\[1, 2\]"),
     (3, (1, 3), r"\[1, 2\]"), (3, (), "non-empty"), (1, (1,), ">= 2")],
)
def test_index_seq_rejects(n, idx, msg):
    with pytest.raises(ValueError, match=msg):
        IndexSeq(n, idx)


def test_index_seq_parse_and_str():
    seq = IndexSeq.parse(4, "1, 3")
    assert seq.indices == (1, 3) and str(seq) == "1,3"
    assert IndexSeq.complete(4).indices == (1, 2, 3)


def test_all_index_seqs_counts():
    assert len(list(all_index_seqs(5))) == 2**4 - 1
    assert len(list(all_index_seqs(5, max_r=3))) == 4 + 6 + 4


def test_frame_validation():
    with pytest.raises(ValueError, match="orthonormal"):
        Frame(np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]))
    f = Frame.span([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    assert f.k == 2 and f.n == 3
    assert np.allclose(f.basis.T @ f.basis, np.eye(2))
    with pytest.raises(ValueError, match="dependent"):
        Frame.span([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    with pytest.raises(ValueError):
        f.basis[0, 0] = 3.0


def test_orthogonal_complement():
    u = np.array([1.0, 2.0, -2.0]) / 3
    f = Frame.orthogonal_complement(u)
    assert f.k == 2
    assert np.allclose(u @ f.basis, 0.0)


def test_flag_nesting_checked():
    seq = IndexSeq(3, (1, 2))
    with pytest.raises(ValueError, match="nested"):
        Flag(seq, (Frame.coordinate(3, [2]), Frame.coordinate(3, [0, 1])))
    with pytest.raises(ValueError, match="dimensions"):
        Flag(seq, (Frame.coordinate(3, [0, 1]),))
    Flag(seq, (Frame.coordinate(3, [0]), Frame.coordinate(3, [0, 1])))


@given(st.integers(0, 2**63), st.integers(2, 6))
def test_sample_flag_is_nested(seed, n):
    seq = IndexSeq.complete(n)
    flag = sample_flag(seq, np.random.default_rng(seed))
    assert tuple(f.k for f in flag.frames) == seq.indices


@pytest.mark.parametrize("sampler", ["partial", "complete", "nested"])
def test_batches_orthonormal(sampler):
    n = 5
    if sampler == "partial":
        U = partial_flag_batch(n, 3, 7, 0, 200)
    elif sampler == "complete":
        U = complete_flag_batch(n, 7, 0, 200)
    else:
        U = nested_flag_batch(n, 7, 0, 200)
    k = U.shape[2]
    G = np.einsum("bik,bil->bkl", U, U)
    assert np.abs(G - np.eye(k)).max() < 1e-12


def test_haar_first_column_moments():
    # E[u_1^2] = 1/n and E[u_1^4] = 3/(n(n+2)) for a Haar column
    U = haar_stiefel(block_rng(3, 1, 0), 200_000, 4, 2)
    x = U[:, 0, 0]
    assert abs(np.mean(x**2) - 0.25) < 5e-3
    assert abs(np.mean(x**4) - 3 / 24) < 5e-3


def test_nested_matches_complete_in_distribution():
    # E |<e1, F_1>|^2 = 1/n for any Haar complete flag
    a = nested_flag_batch(4, 1, 0, 100_000)[:, 0, 0]
    b = complete_flag_batch(4, 1, 0, 100_000)[:, 0, 0]
    assert abs(np.mean(a**2) - 0.25) < 5e-3
    assert abs(np.mean(b**2) - 0.25) < 5e-3


def test_orthogonal_and_sphere():
    rng = np.random.default_rng(0)
    Q = sample_orthogonal(4, rng)
    assert np.allclose(Q @ Q.T, np.eye(4))
    x = sample_sphere(3, rng, 50_000)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.0)
    assert np.abs(x.mean(axis=0)).max() < 0.02
    assert sample_sphere(3, rng).shape == (3,)


def test_block_streams_are_reproducible_and_distinct():
    a = partial_flag_batch(3, 2, 11, 4, 10)
    b = partial_flag_batch(3, 2, 11, 4, 10)
    c = partial_flag_batch(3, 2, 11, 5, 10)
    d = partial_flag_batch(3, 2, 12, 4, 10)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c) and not np.allclose(a, d)


def test_blocks_cover_samples():
    plan = blocks(2 * BLOCK + 5)
    assert [s for _, s in plan] == [BLOCK, BLOCK, 5]
    assert [b for b, _ in plan] == [0, 1, 2]
