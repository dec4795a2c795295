import csv
import json

import numpy as np
import pytest

from lipinv.errors import NoContraction
from lipinv.pseudo_jacobian import reg_at
from lipinv.solver import solve
from lipinv.volterra import (Theta, VolterraProblem, build_map, check_phi, empirical_g_lipschitz,
                             export_solution_csv, fixed_point_solve, load_problem, problem_from_config,
                             refinement_study, verify_inverse_lipschitz)


def test_hand_quadrature_n2():
    P = VolterraProblem(2, [0.0, 0.0], phi=lambda t, tau, u: u + 0 * t,
                        theta=Theta("constant", {"theta0": 0.5}))
    assert np.allclose(P.recover_x([1.0, 1.0]), [0.0, 0.25, 0.75])
    assert P.g([1.0, 1.0])[1] == pytest.approx(0.3125)


def test_zero_phi_is_identity():
    y = np.linspace(-1, 2, 20)
    P = VolterraProblem(20, y, "zero", {})
    pm = build_map(P)
    d = np.random.default_rng(0).standard_normal(20)
    assert np.array_equal(pm(d), d)
    assert np.array_equal(fixed_point_solve(P), y)


def test_sin_with_zero_target_has_zero_solution():
    P = VolterraProblem(50, 0.0, "sin", {"amplitude": 0.9})
    rep = solve(build_map(P), P.y, np.ones(50))
    assert rep.status == "solved" and P.norm.norm(rep.x_final) < 1e-7


def test_norm_is_discrete_lp():
    P = VolterraProblem(4, 0.0, "sin", {"amplitude": 0.5}, p=3.0)
    d = np.array([1.0, -2.0, 0.5, 0.0])
    assert P.norm.norm(d) == pytest.approx(np.mean(np.abs(d) ** 3) ** (1 / 3))


def test_sup_bound_on_random_inputs():
    rng = np.random.default_rng(1)
    for p in (1.5, 2.0, 4.0):
        P = VolterraProblem(30, 0.0, "clip", {"amplitude": 0.5}, p=p)
        for _ in range(50):
            d = rng.standard_normal(30) * rng.uniform(0.1, 10)
            assert np.max(np.abs(P.recover_x(d))) <= P.norm.norm(d) + 1e-12


def test_ball_pseudo_jacobian_regularity_closed_form():
    P = VolterraProblem(30, 0.0, "log_shift", {"c": 0.5})
    pm = build_map(P)
    rng = np.random.default_rng(2)
    for _ in range(20):
        d = rng.standard_normal(30) * rng.uniform(0, 5)
        r = P.norm.norm(d)
        reg = reg_at(pm.jf(d))
        assert reg.exact
        assert float(reg) == pytest.approx(1 - (1 - 0.5 / (1 + r)), abs=1e-12)


@pytest.mark.parametrize("N", [25, 50, 100, 200])
def test_empirical_g_lipschitz_below_theta(N):
    for fam, par in (("sin", {"amplitude": 0.9}), ("clip", {"amplitude": 0.9}), ("log_shift", {"c": 0.5})):
        P = VolterraProblem(N, 0.0, fam, par)
        r = 4.0
        assert empirical_g_lipschitz(P, r, n_pairs=50) <= float(P.theta(r)) + 1e-12


def test_check_phi_shipped_families():
    for fam, par in (("sin", {"amplitude": 0.9}), ("clip", {"amplitude": 0.9}), ("log_shift", {"c": 0.5})):
        rep = check_phi(VolterraProblem(10, 0.0, fam, par), n_samples=500)
        assert rep.lipschitz_ok and rep.growth_ok, fam
        assert rep.samples_used == 8 * 500


def test_check_phi_detects_bad_theta():
    P = VolterraProblem(10, 0.0, "sin", {"amplitude": 0.9}, theta=Theta("constant", {"theta0": 0.5}))
    rep = check_phi(P, n_samples=500)
    assert not rep.lipschitz_ok and rep.worst_excess > 0 and len(rep.worst_triple) == 4


def test_fixed_point_iteration_count():
    P = VolterraProblem(200, 1.0, "sin", {"amplitude": 0.9})
    d, info = fixed_point_solve(P, full_output=True)
    assert info["iterations"] <= np.log(1e-12) / np.log(0.9) + 10
    assert info["max_ratio"] < 0.9


def test_fixed_point_detects_expansion():
    # diagonal weight 3000 * (h/2)**2 = 7.5 makes the Picard map expand
    P = VolterraProblem(10, 1.0, phi=lambda t, tau, u: -3000.0 * u + 0 * t,
                        theta=Theta("constant", {"theta0": 0.5}))
    with pytest.raises(NoContraction):
        fixed_point_solve(P, max_iter=1000)


def test_solver_agrees_with_oracle_on_seeded_problems():
    rng = np.random.default_rng(3)
    fams = [("sin", {"amplitude": 0.9}), ("clip", {"amplitude": 0.8}), ("log_shift", {"c": 0.5})]
    for k in range(20):
        fam, par = fams[k % 3]
        N = int(rng.integers(10, 60))
        y = rng.standard_normal(N) * 2
        P = VolterraProblem(N, y, fam, par, decay=float(rng.uniform(0, 2)))
        rep = solve(build_map(P), P.y, np.zeros(N))
        assert rep.status == "solved"
        assert P.norm.norm(rep.x_final - fixed_point_solve(P)) <= 1e-7


def test_inverse_lipschitz_examples():
    rep = verify_inverse_lipschitz(VolterraProblem(40, 1.0, "zero", {}), n_pairs=4)
    assert rep.passed and all(abs(r["ratio"] - 1.0) < 1e-9 for r in rep.rows)
    rep = verify_inverse_lipschitz(VolterraProblem(40, 1.0, "log_shift", {"c": 0.5}), n_pairs=4)
    assert rep.passed
    for row in rep.rows:
        assert row["ratio"] <= 2 * (1 + row["x_norm"]) + 1e-3
    rep = verify_inverse_lipschitz(VolterraProblem(40, 1.0, "zero", {}), n_pairs=2, bound_factor=0.5)
    assert not rep.passed


def test_descent_method_matches_fixed_point_method():
    P = VolterraProblem(30, 1.0, "sin", {"amplitude": 0.9})
    a = verify_inverse_lipschitz(P, n_pairs=2, method="fixed_point")
    b = verify_inverse_lipschitz(P, n_pairs=2, method="descent")
    assert a.max_ratio == pytest.approx(b.max_ratio, rel=1e-3)


def test_refinement_is_second_order_for_smooth_phi():
    def make(N):
        return VolterraProblem(N, 2 * np.sin(np.pi * np.linspace(0, 1, N + 1)), "sin", {"amplitude": 0.9})
    rows = refinement_study(make, Ns=(25, 50, 100))
    for row in rows[1:]:
        assert 1.8 <= row["order"] <= 2.3


def test_m_and_weight_match_theta_closed_forms():
    from lipinv.certificates import weight_from_m
    for theta in (Theta("constant", {"theta0": 0.9}), Theta("one_minus_c_over_1p_r", {"c": 0.5})):
        m = theta.m_profile()
        h = weight_from_m(m)
        r = np.linspace(0, 30, 61)
        assert np.allclose(m(r), 1 - theta(r), atol=1e-12)
        assert np.allclose(h(r), (theta(r) - theta(0.0)) / (1 - theta(r)), atol=1e-12)


def test_config_roundtrip_and_csv(tmp_path):
    cfg = {"N": 8, "p": 2, "phi": {"family": "clip", "params": {"amplitude": 0.5}}, "y": {"constant": 1.5}}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(cfg))
    P = load_problem(path)
    assert P.N == 8 and np.all(P.y == 1.5) and float(P.theta(3.0)) == 0.5
    Q = problem_from_config(P.to_json())
    assert np.array_equal(Q.y, P.y) and Q.phi == "clip"
    d = fixed_point_solve(P)
    out = tmp_path / "sol.csv"
    export_solution_csv(P, d, out)
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["t", "x", "x'"] and len(rows) == 10
    assert float(rows[-1][2]) == d[-1]
    with pytest.raises(ValueError):
        problem_from_config({"N": 4, "y": {"bogus": 1}})
    with pytest.raises(ValueError):
        VolterraProblem(4, [1.0, 2.0], "sin")
