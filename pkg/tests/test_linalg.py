import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lipinv.errors import NonConvergence, UnsupportedNorm, ZeroVector
from lipinv.linalg import (L1, L2, L_INF, Bound, LinearMap, NormTag, banach_constant,
                           dual_banach_constant, dual_vector, min_norm_point, operator_norm)

TAGS = [L1, L2, L_INF, NormTag.lp(3.0), NormTag.lp(1.5, 0.3), NormTag.lp(2.0, 0.1)]
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def circle(k=20001):
    th = np.linspace(0.0, 2 * np.pi, k, endpoint=False)
    return np.stack([np.cos(th), np.sin(th)], axis=1)


def test_bound_keeps_kind_and_pickles():
    import pickle
    b = Bound(1.5, "lower", evals=3)
    c = pickle.loads(pickle.dumps(b))
    assert float(c) == 1.5 and c.kind == "lower" and c.info == {"evals": 3}
    assert not c.exact and Bound(2.0).exact


def test_norm_tag_json_roundtrip():
    for tag in TAGS:
        assert NormTag.from_json(tag.to_json()) == tag
    with pytest.raises(ValueError):
        NormTag.lp(1.0)
    with pytest.raises(ValueError):
        NormTag.from_json("l7")


@pytest.mark.parametrize("tag", TAGS)
def test_dual_of_dual_is_identity(tag):
    assert tag.dual().dual() == tag


@pytest.mark.parametrize("tag", TAGS)
@settings(max_examples=60, deadline=None)
@given(v=arrays(float, 4, elements=finite))
def test_dual_vector_attains_norm(tag, v):
    if not np.any(np.abs(v) > 1e-6):
        return
    w = dual_vector(v, tag)
    assert math.isclose(float(w @ v), tag.norm(v), rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(tag.dual().norm(w), 1.0, rel_tol=1e-9)


def test_dual_vector_rejects_zero():
    with pytest.raises(ZeroVector):
        dual_vector(np.zeros(3))


@pytest.mark.parametrize("tag", TAGS)
@settings(max_examples=40, deadline=None)
@given(v=arrays(float, 5, elements=finite))
def test_equivalence_factors_hold(tag, v):
    lo, hi = tag.equivalence(5)
    e = float(np.linalg.norm(v))
    assert lo * e <= tag.norm(v) * (1 + 1e-12) + 1e-12
    assert tag.norm(v) <= hi * e * (1 + 1e-12) + 1e-12


def test_constants_match_circle_oracle():
    # brute force: C(T) = min |T^T v| and C*(T) = min |T u| over the unit circle
    rng = np.random.default_rng(3)
    U = circle()
    for _ in range(20):
        A = rng.standard_normal((2, 2))
        T = LinearMap(A)
        c_star = np.min(np.linalg.norm(U @ A.T, axis=1))
        c = np.min(np.linalg.norm(U @ A, axis=1))
        assert abs(dual_banach_constant(T) - c_star) < 1e-6
        assert abs(banach_constant(T) - c) < 1e-6
        assert abs(operator_norm(T) - np.max(np.linalg.norm(U @ A.T, axis=1))) < 1e-6


def test_rectangular_constants():
    wide = LinearMap([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    assert banach_constant(wide) == pytest.approx(1.0)
    assert dual_banach_constant(wide) == 0.0
    tall = LinearMap([[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
    assert banach_constant(tall) == 0.0
    assert dual_banach_constant(tall) == pytest.approx(1.0)


def test_scaled_l2_tags_rescale_exactly():
    A = np.diag([2.0, 3.0])
    T = LinearMap(A, NormTag.lp(2.0, 0.5), NormTag.lp(2.0, 2.0))
    assert banach_constant(T).exact
    assert banach_constant(T) == pytest.approx(4.0 * 2.0)
    assert operator_norm(T) == pytest.approx(4.0 * 3.0)


def test_tagged_identity_is_exact_in_any_norm():
    for tag in TAGS:
        T = LinearMap(np.eye(4), tag, tag)
        assert banach_constant(T) == 1.0 and banach_constant(T).exact
        assert dual_banach_constant(T) == 1.0


def test_non_hilbertian_bounds_bracket_brute_force():
    # C*(T) = min over the l1 unit sphere of |T u|_inf, attained on a vertex-edge grid
    rng = np.random.default_rng(5)
    U = circle(4001)
    U = U / np.sum(np.abs(U), axis=1, keepdims=True)
    for _ in range(10):
        A = rng.standard_normal((2, 2))
        T = LinearMap(A, L1, L_INF)
        brute = np.min(np.max(np.abs(U @ A.T), axis=1))
        low = dual_banach_constant(T)
        assert low.kind == "lower" and low <= brute + 1e-9
        up = operator_norm(T)
        assert up.kind == "upper" and up >= np.max(np.max(np.abs(U @ A.T), axis=1)) - 1e-9


def barycentric_grid_oracle(P, steps=200):
    best = np.inf
    k = P.shape[0]
    if k == 2:
        for a in np.linspace(0, 1, steps + 1):
            best = min(best, np.linalg.norm(a * P[0] + (1 - a) * P[1]))
        return best
    for a in np.linspace(0, 1, steps + 1):
        for b in np.linspace(0, 1 - a, max(int(round((1 - a) * steps)), 1) + 1):
            best = min(best, np.linalg.norm(a * P[0] + b * P[1] + (1 - a - b) * P[2]))
    return best


def test_min_norm_point_examples():
    w, n = min_norm_point([[1.0, 1.0], [-1.0, 1.0], [0.0, 3.0]])
    assert np.allclose(w, [0.0, 1.0]) and n == pytest.approx(1.0)
    w, n = min_norm_point([[1.0, 0.0], [0.0, 1.0]])
    assert n == pytest.approx(math.sqrt(0.5))
    w, n = min_norm_point([[2.0, 0.0]])
    assert n == 2.0
    w, n = min_norm_point([[1.0, 0.0], [-1.0, 0.0]])
    assert n == pytest.approx(0.0, abs=1e-12)


def test_min_norm_point_against_grid():
    rng = np.random.default_rng(11)
    for k in (2, 3):
        for _ in range(15):
            P = rng.standard_normal((k, 3))
            _, n = min_norm_point(P)
            oracle = barycentric_grid_oracle(P)
            assert n <= oracle + 1e-12
            assert n >= oracle - 0.05


@settings(max_examples=50, deadline=None)
@given(P=arrays(float, (6, 4), elements=finite))
def test_min_norm_point_certificate(P):
    w, n = min_norm_point(P)
    assert np.min(P @ w) >= w @ w - 1e-8
    assert n <= np.min(np.linalg.norm(P, axis=1)) + 1e-12


def test_min_norm_point_scaled_and_rejections():
    w, n = min_norm_point([[1.0, 0.0], [0.0, 1.0]], NormTag.lp(2.0, 10.0))
    assert n == pytest.approx(10 * math.sqrt(0.5))
    with pytest.raises(UnsupportedNorm):
        min_norm_point([[1.0, 0.0]], L1)
    with pytest.raises(ValueError):
        min_norm_point(np.zeros((0, 2)))
    assert issubclass(NonConvergence, RuntimeError)


def test_linear_map_json_and_validation():
    T = LinearMap([[1.0, 2.0]], L1, L_INF)
    U = LinearMap.from_json(T.to_json())
    assert np.array_equal(U.matrix, T.matrix) and U.domain_norm == L1 and U.codomain_norm == L_INF
    with pytest.raises(ValueError):
        LinearMap([[np.nan]])
    with pytest.raises(ValueError):
        T.matrix[0, 0] = 5.0
