import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flagquer.bodies import Ball, Cube, Ellipsoid, GeometryError, simplex, unit_ball_volume
from flagquer.functional import (
    GaussianFn,
    LevelStack,
    dpp_bound,
    dpp_flag_ratio,
    ext_bound,
    ext_exponents,
    function_from_dict,
    function_to_dict,
    functional_I,
    mixed_norm_moments,
    mixed_norm_statistic,
    multi_function_ratio,
    phi_r_of_function,
    project_function,
    rearrange,
    restriction_l1,
    restriction_sup,
)
from flagquer.quermass import phi_r
from flagquer.sampling import Frame, IndexSeq, partial_flag_batch

S12 = IndexSeq(3, (1, 2))
E12 = Frame.coordinate(3, [0, 1])


def test_gaussian_restrictions():
    G = GaussianFn.standard(3)
    for k in (1, 2, 3):
        assert restriction_l1(G, Frame.coordinate(3, list(range(k)))) == pytest.approx(math.pi ** (k / 2))
    assert restriction_l1(GaussianFn(np.diag([1.0, 4.0, 0.25])), E12) == pytest.approx(math.pi / 2)
    assert restriction_sup(G, E12) == 1.0
    assert G.l1_norm() == pytest.approx(math.pi**1.5)


def test_level_stack_restrictions():
    cube = LevelStack.indicator(Cube(3))
    assert restriction_l1(cube, E12) == pytest.approx(4.0)
    assert restriction_sup(cube, E12) == 1.0
    far = LevelStack.indicator(Ball(3, 0.5, center=[0, 0, 2.0]))
    assert restriction_l1(far, E12) == 0.0 and restriction_sup(far, E12) == 0.0
    stack = LevelStack([0.5, 2.0], [Cube(3), Ball(3, 0.5)])
    assert restriction_l1(stack, E12) == pytest.approx(0.5 * 4 + 1.5 * math.pi / 4)
    assert restriction_sup(stack, E12) == 2.0
    assert stack.l1_norm() == pytest.approx(0.5 * 8 + 1.5 * unit_ball_volume(3) / 8)


def test_gaussian_level_stack_converges():
    G = GaussianFn(np.diag([1.0, 2.0, 0.5]))
    err = [abs(G.to_level_stack(m).discretization_error) for m in (4, 16, 64)]
    assert err[0] > err[1] > err[2] > 0
    stack = G.to_level_stack(64)
    assert stack.l1_norm() + stack.discretization_error == pytest.approx(G.l1_norm())


def test_level_stack_validation():
    with pytest.raises(GeometryError, match="not contained"):
        LevelStack([1, 2], [Cube(3), Ball(3, 1.5)])
    with pytest.raises(GeometryError, match="increasing"):
        LevelStack([2, 1], [Cube(3), Ball(3, 0.5)])
    with pytest.raises(GeometryError, match="capped"):
        LevelStack(np.arange(1, 66), [Ball(3)] * 65, check=False)
    LevelStack([1, 2, 3], [Cube(3), Ball(3, 1.0), simplex(3)])


def test_functional_I_standard_gaussian():
    for seq in (S12, IndexSeq(4, (1, 3)), IndexSeq(3, (2,))):
        exact = math.pi ** (seq.top * seq.n / 2)
        assert functional_I(GaussianFn.standard(seq.n), seq, 4096).mean == pytest.approx(exact)


def test_functional_I_invariance():
    G = GaussianFn.standard(3)
    g = np.array([[1.5, 0.4, 0.0], [0.0, 1.0, 0.3], [0.0, 0.0, 1 / 1.5]])
    est = functional_I(G.compose_linear(g), S12, 100_000, seed=1)
    assert abs(est.mean - math.pi**3) <= 3 * est.std_error


def test_functional_I_single_index_is_grassmannian_average():
    G = GaussianFn(np.diag([1.0, 2.0, 0.5]))
    seq = IndexSeq(3, (2,))
    est = functional_I(G, seq, 20_000, seed=2)
    U = partial_flag_batch(3, 2, 77, 0, 20_000)
    direct = G.restriction_l1(U) ** 3
    assert abs(est.mean - direct.mean()) <= 3 * math.hypot(est.std_error, direct.std(ddof=1) / math.sqrt(20_000))


def test_dpp_gaussian_closed_form_ratio():
    rep = dpp_flag_ratio(GaussianFn.standard(3), S12, 4096)
    expected = math.gamma(1.5) ** 2 * math.gamma(2.0) ** 2 / math.gamma(2.5) ** 2
    assert rep.ratio == pytest.approx(expected)
    assert rep.margin_se > 1e6


def test_dpp_ball_equality_and_cube_strict():
    rep = dpp_flag_ratio(LevelStack.indicator(Ball(3)), S12, 4096)
    assert rep.ratio == pytest.approx(1.0)
    rep = dpp_flag_ratio(LevelStack.indicator(Cube(3)), S12, 50_000, seed=3)
    assert rep.margin_se > 3


def test_dpp_bound_formula():
    w = unit_ball_volume
    assert dpp_bound(S12, 1.0) == pytest.approx(w(1) ** 2 / w(2) * w(2) ** 3 / w(3) ** 2)


def test_dpp_ratio_scale_invariant():
    stack = LevelStack.indicator(Cube(3))
    a = dpp_flag_ratio(stack, S12, 8192, seed=4)
    b = dpp_flag_ratio(stack.dilate(2.5), S12, 8192, seed=4)
    assert b.ratio == pytest.approx(a.ratio, rel=1e-12)


def test_multi_function_reduces_for_q1():
    G = GaussianFn(np.diag([1.0, 2.0, 0.5]))
    a, b = ext_exponents(S12)
    rep = multi_function_ratio([G], S12, 8192, seed=5)
    direct = mixed_norm_statistic(G, S12, a, b, 8192, seed=5)
    assert rep.estimate.mean == pytest.approx(direct.mean, rel=1e-12)


def test_multi_function_homogeneity():
    seq = IndexSeq(4, (2, 3))
    f1, f2 = GaussianFn(np.diag([1.0, 2.0, 0.5, 1.0])), GaussianFn.standard(4)
    a = multi_function_ratio([f1, f2], seq, 8192, seed=6)
    b = multi_function_ratio([f1.scale(3.0), f2], seq, 8192, seed=6)
    assert b.ratio == pytest.approx(a.ratio, rel=1e-12)
    assert b.bound == pytest.approx(3 * a.bound)
    assert a.margin_se > 3


def test_multi_function_q_range():
    with pytest.raises(ValueError, match="number of functions"):
        multi_function_ratio([GaussianFn.standard(3)] * 2, S12, 100)


def test_ext_ball_equality():
    seq = IndexSeq(4, (2, 3))
    ball = LevelStack.indicator(Ball(4))
    rep = multi_function_ratio([ball, ball], seq, 4096)
    assert rep.ratio == pytest.approx(1.0)
    assert ext_bound(seq, [1.0]) ** 2 == pytest.approx(ext_bound(seq, [1.0, 1.0]))


def test_balanced_profile_invariance_and_negative_control():
    G = GaussianFn(np.diag([1.0, 2.0, 0.5]))
    T = np.diag([4.0, 0.25, 1.0])
    sup = [2.0, 0.5]
    a = mixed_norm_statistic(G, S12, [2, 2], sup, 100_000, seed=7)
    b = mixed_norm_statistic(G.compose_linear(T), S12, [2, 2], sup, 100_000, seed=8)
    assert abs(a.mean - b.mean) <= 3 * math.hypot(a.std_error, b.std_error)
    c = mixed_norm_statistic(G, S12, [1, 3], sup, 50_000, seed=7)
    d = mixed_norm_statistic(G.compose_linear(T), S12, [1, 3], sup, 50_000, seed=7)
    assert abs(c.mean - d.mean) > 5 * math.hypot(c.std_error, d.std_error)


def test_mixed_norm_dimension_check():
    with pytest.raises(GeometryError):
        mixed_norm_moments([GaussianFn.standard(4)], S12, [[2, 2]], [[0, 0]], 100, 0)


def test_project_function():
    K = Ellipsoid(np.diag([1.0, 4.0, 0.25]))
    f = project_function(LevelStack.indicator(K), E12)
    assert f.n == 2 and f.bodies[0].volume() == pytest.approx(math.pi / 2)
    full = Frame.coordinate(3, [0, 1, 2])
    assert project_function(LevelStack.indicator(Cube(3)), full).l1_norm() == pytest.approx(8.0)
    stack = LevelStack([1.0, 2.0], [Cube(3), Ball(3, 0.8)])
    proj = project_function(stack, E12)
    proj.check_nesting()


def test_phi_r_of_function():
    Q = Cube(3)
    a = phi_r_of_function(LevelStack.indicator(Q), S12, 8192, seed=1)
    assert a.mean == pytest.approx(phi_r(Q, S12, 8192, seed=1).mean, rel=1e-12)
    stack = LevelStack([0.5, 1.5], [Q, Ball(3, 0.7)])
    b = phi_r_of_function(stack, S12, 30_000, seed=2)
    T = np.array([[1.5, 0.3, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1 / 1.5]])
    c = phi_r_of_function(stack.compose_linear(T).translate([0.2, 0.1, -0.1]), S12, 30_000, seed=3)
    assert abs(b.mean - c.mean) <= 3 * math.hypot(b.std_error, c.std_error)
    d = phi_r_of_function(stack.dilate(2.0), S12, 30_000, seed=2)
    assert d.mean == pytest.approx(2 * b.mean, rel=1e-12)


def test_rearrange():
    f = LevelStack.indicator(Cube(3))
    fs = rearrange(f)
    assert fs.bodies[0].radius == pytest.approx((8 / unit_ball_volume(3)) ** (1 / 3))
    stack = LevelStack([1.0, 2.0, 4.0], [Cube(3, 3.0), Ellipsoid(np.diag([1.0, 2.0, 1.5])), Ball(3, 0.5, center=[0.1, 0, 0])])
    r1 = rearrange(stack)
    r2 = rearrange(r1)
    assert [b.radius for b in r1.bodies] == [b.radius for b in r2.bodies]
    assert r1.l1_norm() == pytest.approx(stack.l1_norm(), rel=1e-9)
    r1.check_nesting()


def test_rearrangement_ratio_for_ellipsoid_levels():
    G = GaussianFn(np.diag([1.0, 3.0, 0.5]))
    f = G.to_level_stack(8)
    a = phi_r_of_function(f, S12, 50_000, seed=4)
    b = phi_r_of_function(rearrange(f), S12, 1000)
    assert abs(a.mean / b.mean - 1.0) <= 3 * a.std_error / b.mean


@given(st.lists(st.floats(0.2, 4.0), min_size=3, max_size=3), st.floats(0.1, 10.0))
def test_function_json_round_trip(diag, amp):
    for f in (GaussianFn(np.diag(diag), amp), LevelStack([0.5, amp + 1.0], [Ball(3, 10.0), Ellipsoid(np.diag(diag))])):
        g = function_from_dict(function_to_dict(f))
        assert function_to_dict(g) == function_to_dict(f)


@pytest.mark.parametrize("d, msg", [
    ({"type": "gaussian"}, "missing 'matrix'"),
    ({"type": "level_stack"}, "missing 'levels'"),
    ({"type": "level_stack", "levels": [{"t": 1}]}, "missing 'body'"),
    ({"type": "spline"}, "unknown function type"),
    ({"type": "gaussian", "matrix": [1, 0, 0, -1]}, "positive definite"),
])
def test_function_json_errors(d, msg):
    with pytest.raises(GeometryError, match=msg):
        function_from_dict(d)
