import math

import numpy as np
import pytest

from lipinv.certificates import Weight
from lipinv.errors import CoincidentTarget, CriticalPoint, DimensionNot2, TraceTooShort
from lipinv.linalg import LinearMap
from lipinv.problems import arctan_map, cubic_map, shifted_map, square_map
from lipinv.pseudo_jacobian import BallForm, HullForm, PointMap, linear_map
from lipinv.solver import (SolveOptions, SolveReport, descent_direction, openness_oracle_2d,
                           ps_classify, solve, squared_mode_check, uniqueness_certificate)


def test_descent_direction_examples():
    d, lam = descent_direction(linear_map(np.eye(2)), [3.0, 4.0], [0.0, 0.0])
    assert np.allclose(d, [-0.6, -0.8]) and lam == pytest.approx(1.0)
    d, lam = descent_direction(linear_map(np.diag([2.0, 3.0])), [1.0, 0.0], [0.0, 0.0])
    assert np.allclose(d, [-1.0, 0.0]) and lam == pytest.approx(2.0)
    A = LinearMap(np.diag([2.0, 3.0]))
    pm = PointMap(lambda x: A.matrix @ x, lambda x: BallForm(A, 0.5), dim=2)
    d, lam = descent_direction(pm, [1.0, 0.0], [0.0, 0.0])
    assert np.allclose(d, [-1.0, 0.0]) and lam == pytest.approx(1.5)


def test_descent_direction_errors():
    with pytest.raises(CoincidentTarget):
        descent_direction(linear_map(np.eye(2)), [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(CriticalPoint):
        descent_direction(square_map(), [0.0], [-1.0])


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(armijo_c=1.5)
    with pytest.raises(ValueError):
        SolveOptions(tol_residual=0.0)


def test_linear_solve_matches_inverse():
    rng = np.random.default_rng(0)
    for _ in range(10):
        A = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        y = rng.standard_normal(3)
        rep = solve(linear_map(A), y, np.zeros(3))
        assert rep.status == "solved"
        assert np.allclose(rep.x_final, np.linalg.solve(A, y), atol=1e-7)
        assert ps_classify(rep) == "converging_ps_sequence"


def test_residual_trace_strictly_decreasing_and_armijo():
    rep = solve(shifted_map("sin", 0.5, 4), np.array([1.0, -2.0, 3.0, 0.5]), np.zeros(4))
    r = np.array(rep.residual_trace)
    assert np.all(np.diff(r) < 0)
    c = SolveOptions().armijo_c
    for k, t in enumerate(rep.step_trace):
        assert r[k + 1] <= r[k] - c * t * rep.lambda_trace[k] + 1e-15
    assert rep.claim_violations == []


def test_sin_shift_agrees_with_fixed_point_oracle():
    y = np.array([1.0, 2.0, -3.0])
    x = y.copy()
    for _ in range(200):
        x = y - 0.5 * np.sin(x)
    rep = solve(shifted_map("sin", 0.5, 3), y, np.zeros(3))
    assert rep.status == "solved" and np.allclose(rep.x_final, x, atol=1e-7)


def test_square_reports_critical_nonsolution():
    rep = solve(square_map(), [-1.0], [1.0])
    assert rep.status == "critical_nonsolution"
    assert abs(rep.x_final[0]) < 1e-6 and rep.residual == pytest.approx(1.0)


def test_arctan_escapes():
    rep = solve(arctan_map(), [2.0], [0.0], SolveOptions(weight=Weight.zero()))
    assert rep.status == "ps_escape"
    assert rep.residual > 2 - math.pi / 2 - 1e-12
    assert rep.ps_product_trace[-1] < 1e-3 * rep.ps_product_trace[0]
    assert ps_classify(rep, Weight.zero()) == "escaping"


def test_iteration_cap():
    rep = solve(arctan_map(), [2.0], [0.0], SolveOptions(max_iters=20))
    assert rep.status == "iteration_cap" and rep.iterations == 20


def test_ps_classify_synthetic_oscillation():
    xs = [np.array([(-1.0) ** k]) for k in range(20)]
    rep = SolveReport("iteration_cap", xs[-1], [1.0] * 20, [0.5] * 19, [], [1.0] * 20, [], 19, True, tail=xs[-10:])
    assert ps_classify(rep) == "bounded_nonconverging"
    with pytest.raises(TraceTooShort):
        ps_classify(SolveReport("solved", xs[0], [0.0], [], [], [1.0], [], 0, True))


def test_report_json_downsampling_keeps_ends():
    rep = solve(arctan_map(), [2.0], [0.0], SolveOptions(max_iters=3000))
    js = rep.to_json(max_trace=100)
    assert len(js["residual_trace"]) <= 100
    assert js["residual_trace"][0] == rep.residual_trace[0]
    assert js["residual_trace"][-1] == rep.residual_trace[-1]


def test_uniqueness_linear_and_cubic():
    uc = uniqueness_certificate(linear_map(np.diag([2.0, 3.0])), np.array([1.0, 1.0]), n_starts=5)
    assert uc.verdict == "unique_empirical" and len(uc.clusters) == 1
    uc = uniqueness_certificate(cubic_map(), np.array([0.0]), n_starts=30, radius=2.0, seed=1)
    roots = sorted(float(c[0]) for c in uc.clusters)
    assert uc.verdict == "non_unique"
    assert np.allclose(roots, [-1.0, 0.0, 1.0], atol=1e-6)
    assert uc.inconsistencies == []


def test_uniqueness_flags_contradiction_for_wrong_pseudo_jacobian():
    # |x| - 1 has roots +-1 but the declared derivative claims injectivity 1 everywhere
    wrong = PointMap(lambda x: np.abs(x) - 1.0, lambda x: BallForm(LinearMap([[1.0]]), 0.0), dim=1)
    uc = uniqueness_certificate(wrong, np.array([0.0]), solutions=[np.array([1.0]), np.array([-1.0])],
                                n_starts=0, radius=2.0)
    assert len(uc.clusters) == 2 and uc.inconsistencies


def test_squared_mode_examples():
    ok, dev = squared_mode_check(linear_map(np.eye(2)), [3.0, 4.0], [0.0, 0.0], return_deviation=True)
    assert ok and dev <= 1e-12
    hull = HullForm((LinearMap(np.eye(2)), LinearMap(np.array([[0.0, 1.0], [1.0, 0.0]]))))
    pm = PointMap(lambda x: x, lambda x: hull, dim=2)
    assert squared_mode_check(pm, [2.0, 0.0], [0.0, 0.0])
    with pytest.raises(CoincidentTarget):
        squared_mode_check(pm, [1.0, 1.0], [1.0, 1.0])


def test_openness_examples():
    assert openness_oracle_2d(linear_map(np.eye(2)), np.zeros(2), 1.0, 0.9)
    A = linear_map(np.diag([2.0, 3.0]))
    assert openness_oracle_2d(A, np.zeros(2), 1.0, 1.9).passed
    rep = openness_oracle_2d(A, np.zeros(2), 1.0, 2.5)
    # the closest ray misses the short axis slightly, so the gap is just under 0.375
    assert not rep.passed and 0.3 < rep.worst_gap <= 2.5 * 0.95 - 2.0 + 1e-9
    with pytest.raises(DimensionNot2):
        openness_oracle_2d(linear_map(np.eye(3)), np.zeros(3), 1.0, 0.5)


def test_claim_inequality_holds_for_ball_forms():
    from lipinv.pseudo_jacobian import delta_Fy, lambda_lower, reg_at
    rng = np.random.default_rng(3)
    for _ in range(200):
        A = LinearMap(rng.standard_normal((3, 3)))
        pj = BallForm(A, float(rng.uniform(0, 1)))
        slc = delta_Fy(pj, rng.standard_normal(3), np.zeros(3))
        assert lambda_lower(slc) >= float(reg_at(pj)) - 1e-9
