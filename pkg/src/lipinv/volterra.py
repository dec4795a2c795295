"""
The integro-differential problem ``x' + int_0^t Phi(t, tau, x(tau)) dtau = y``, ``x(0) = 0``.

Unknowns are the derivative samples ``d_i ~ x'(t_i)`` on ``t_i = i/N``,
``i = 1..N`` (``d_0 = 0`` is implied).  ``x`` is recovered by a cumulative
trapezoid and the memory term by a lower-triangular trapezoid rule, so the
discrete map is ``f(d) = d + Q(x(d))``.  Both sides carry the discrete norm
``(1/N sum |d_i|^p)^(1/p)``.
"""

from dataclasses import dataclass, field
import csv
import json
import math
from typing import Callable

import numpy as np

from . import _kernels
from .certificates import RadialProfile, certify, inverse_lipschitz_bound
from .errors import NoContraction, NonConvergence
from .linalg import LinearMap, NormTag
from .pseudo_jacobian import BallForm, PointMap

PHI_FAMILIES = {
    "zero": _kernels.PHI_ZERO,
    "sin": _kernels.PHI_SIN,
    "clip": _kernels.PHI_CLIP,
    "log_shift": _kernels.PHI_LOG_SHIFT,
}
THETA_FAMILIES = ("constant", "one_minus_c_over_1p_r")
SUP_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class Theta:
    """Lipschitz profile of ``u -> Phi(t, tau, u)`` on ``|u| <= r``."""

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in THETA_FAMILIES:
            raise ValueError(f"unknown theta family {self.family!r}")
        if self.family == "constant":
            t0 = float(self.params["theta0"])
            if not 0.0 <= t0 < 1.0:
                raise ValueError("theta0 must lie in [0, 1)")
        else:
            c = float(self.params["c"])
            if not 0.0 < c <= 1.0:
                raise ValueError("c must lie in (0, 1]")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == "constant":
            return np.full_like(r, float(self.params["theta0"]))[()]
        return (1.0 - float(self.params["c"]) / (1.0 + r))[()]

    def m_profile(self, r_max=100.0, n=64):
        if self.family == "constant":
            return RadialProfile.analytic("constant", {"c": 1.0 - float(self.params["theta0"])}, r_max, n)
        return RadialProfile.analytic("c_over_1p_rho", {"c": float(self.params["c"])}, r_max, n)

    def to_json(self):
        return {"family": self.family, "params": dict(self.params)}


class SampledTheta:
    """Theta given by samples on a radial grid (linear interpolation)."""

    def __init__(self, profile: RadialProfile):
        if np.any(profile.values >= 1.0):
            raise ValueError("theta must stay below 1")
        self.profile = profile

    def __call__(self, r):
        return self.profile(r)

    def m_profile(self, r_max=None, n=None):
        return RadialProfile(self.profile.grid, 1.0 - self.profile.values)

    def to_json(self):
        return {"samples": self.profile.to_json()}


def default_theta(family, params):
    if family == "zero":
        return Theta("constant", {"theta0": 0.0})
    if family in ("sin", "clip"):
        return Theta("constant", {"theta0": abs(float(params["amplitude"]))})
    if family == "log_shift":
        return Theta("one_minus_c_over_1p_r", {"c": float(params["c"])})
    raise ValueError(f"unknown phi family {family!r}")


def _phi_param(family, params):
    if family == "zero":
        return 0.0
    if family in ("sin", "clip"):
        return float(params["amplitude"])
    return float(params["c"])


@dataclass(frozen=True, eq=False)
class VolterraProblem:
    """Grid, exponent, integrand, Lipschitz profile and target samples.

    ``phi`` is either a family name from ``PHI_FAMILIES`` (with
    ``phi_params`` and an optional nonnegative ``decay`` rate multiplying by
    ``exp(-decay (t - tau))``) or a vectorised callable ``phi(t, tau, u)``.
    ``y`` holds ``y(t_1), ..., y(t_N)``.
    """

    N: int
    y: np.ndarray
    phi: object = "sin"
    phi_params: dict = field(default_factory=lambda: {"amplitude": 0.9})
    theta: object = None
    p: float = 2.0
    decay: float = 0.0

    def __post_init__(self):
        N = int(self.N)
        if N < 1:
            raise ValueError("N must be at least 1")
        object.__setattr__(self, "N", N)
        p = float(self.p)
        if not (1.0 < p < math.inf):
            raise ValueError("p must lie in (1, inf)")
        object.__setattr__(self, "p", p)
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 0:
            y = np.full(N, float(y))
        elif y.size == N + 1:
            # value at t_0 carries no information in the derivative coordinates
            y = y[1:]
        if y.shape != (N,) or not np.all(np.isfinite(y)):
            raise ValueError(f"y must have {N} finite samples")
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        if float(self.decay) < 0:
            raise ValueError("decay must be nonnegative")
        object.__setattr__(self, "decay", float(self.decay))
        if isinstance(self.phi, str):
            if self.phi not in PHI_FAMILIES:
                raise ValueError(f"unknown phi family {self.phi!r}")
            object.__setattr__(self, "phi_params", dict(self.phi_params))
            theta = self.theta or default_theta(self.phi, self.phi_params)
        elif callable(self.phi):
            if self.theta is None:
                raise ValueError("a callable phi needs an explicit theta")
            theta = self.theta
        else:
            raise TypeError("phi must be a family name or a callable")
        if isinstance(theta, dict):
            theta = Theta(theta["family"], theta.get("params", {}))
        elif isinstance(theta, RadialProfile):
            theta = SampledTheta(theta)
        object.__setattr__(self, "theta", theta)
        t = np.linspace(0.0, 1.0, N + 1)
        t.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "W", _kernels.trapezoid_weights(N))
        object.__setattr__(self, "norm", NormTag.lp(p, (1.0 / N) ** (1.0 / p)))

    @property
    def h(self):
        return 1.0 / self.N

    def recover_x(self, d):
        """``x(t_0..t_N)`` from derivative samples by cumulative trapezoid."""
        d = np.asarray(d, dtype=float)
        full = np.concatenate([[0.0], d])
        return np.concatenate([[0.0], np.cumsum(0.5 * self.h * (full[:-1] + full[1:]))])

    def phi_values(self, t, tau, u):
        if callable(self.phi):
            return np.asarray(self.phi(t, tau, u), dtype=float)
        code = PHI_FAMILIES[self.phi]
        return _kernels.phi_family_numpy(code, _phi_param(self.phi, self.phi_params), self.decay, t, tau, u)

    def quadrature(self, x):
        """``Q_i = int_0^{t_i} Phi(t_i, tau, x(tau)) dtau`` by trapezoid, ``i = 1..N``."""
        x = np.ascontiguousarray(x, dtype=float)
        if callable(self.phi):
            return _kernels.callable_quadrature(self.phi, self.t, x, self.W)
        code = PHI_FAMILIES[self.phi]
        return _kernels.family_quadrature(code, _phi_param(self.phi, self.phi_params), self.decay,
                                          self.t, x, self.W)

    def g(self, d):
        return self.quadrature(self.recover_x(d))

    def m_profile(self, r_max=100.0, n=64):
        return self.theta.m_profile(r_max, n)

    def certificate(self, r_max=100.0, n=64):
        return certify(self.m_profile(r_max, n))

    def with_target(self, y):
        return VolterraProblem(self.N, y, self.phi, self.phi_params, self.theta, self.p, self.decay)

    def to_json(self):
        if callable(self.phi):
            raise TypeError("problems with callable phi cannot be serialised")
        return {"N": self.N, "p": self.p,
                "phi": {"family": self.phi, "params": dict(self.phi_params), "decay": self.decay},
                "theta": self.theta.to_json(), "y": {"samples": self.y.tolist()}}


def build_map(problem):
    """PointMap ``d -> d + Q(x(d))`` with the ball pseudo-Jacobian ``B(I, theta(|d|))``."""
    tag = problem.norm
    ident = LinearMap(np.eye(problem.N), tag, tag)

    def f(d):
        d = np.asarray(d, dtype=float)
        x = problem.recover_x(d)
        nd = tag.norm(d)
        # max |x(t_i)| <= |d| holds for the trapezoid weights by Jensen
        if np.max(np.abs(x)) > nd * (1.0 + SUP_BOUND_SLACK) + SUP_BOUND_SLACK:
            raise AssertionError(f"discrete sup bound violated: {np.max(np.abs(x))} > {nd}")
        return d + problem.quadrature(x)

    def jf(d):
        return BallForm(ident, float(problem.theta(tag.norm(d))))

    chain = "strong" if problem.p == 2.0 else "plain"
    name = f"volterra[{problem.phi if isinstance(problem.phi, str) else 'callable'}]"
    return PointMap(f, jf, tag, tag, chain_rule=chain, name=name, dim=problem.N)


@dataclass
class PhiConditionReport:
    growth_ok: bool
    growth_a: float
    growth_b: float
    lipschitz_ok: bool
    worst_ratio: float
    worst_excess: float
    worst_triple: tuple
    per_radius: list
    samples_used: int

    def to_json(self):
        return {"growth_ok": self.growth_ok, "growth_a": self.growth_a, "growth_b": self.growth_b,
                "lipschitz_ok": self.lipschitz_ok, "worst_ratio": self.worst_ratio,
                "worst_excess": self.worst_excess, "worst_triple": list(self.worst_triple),
                "per_radius": self.per_radius, "samples_used": self.samples_used,
                "note": "sampled maxima, not suprema"}


def check_phi(problem, r_max=10.0, n_samples=2000, seed=0, n_radii=8, tol=1e-12):
    """Sampled checks of the growth envelope and the ``theta(r)``-Lipschitz bound.

    For each radius ``r`` on a grid up to ``r_max``, pairs ``u, v`` in
    ``[-r, r]`` and times ``tau <= t`` are drawn; the largest difference
    quotient is compared with ``theta(r)``.  The growth envelope
    ``|Phi| <= a + b |u|`` is fitted with ``a = max |Phi(., ., 0)|`` and must
    satisfy ``b <= theta(r_max)``.
    """
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    rng = np.random.default_rng(seed)
    per_radius = []
    worst_ratio, worst_excess, worst_triple = 0.0, -math.inf, ()
    a = 0.0
    b = 0.0
    used = 0
    for r in np.linspace(r_max / n_radii, r_max, n_radii):
        t = rng.uniform(0.0, 1.0, n_samples)
        tau = t * rng.uniform(0.0, 1.0, n_samples)
        u = rng.uniform(-r, r, n_samples)
        v = rng.uniform(-r, r, n_samples)
        pu = problem.phi_values(t, tau, u)
        pv = problem.phi_values(t, tau, v)
        p0 = problem.phi_values(t, tau, np.zeros_like(u))
        used += n_samples
        du = np.abs(u - v)
        ok = du > 0
        ratio = np.zeros_like(du)
        ratio[ok] = np.abs(pu - pv)[ok] / du[ok]
        th = float(problem.theta(r))
        k = int(np.argmax(ratio))
        per_radius.append({"r": float(r), "theta": th, "max_ratio": float(ratio[k])})
        if ratio[k] - th > worst_excess:
            worst_excess = float(ratio[k] - th)
            worst_triple = (float(t[k]), float(tau[k]), float(u[k]), float(v[k]))
        worst_ratio = max(worst_ratio, float(ratio[k]))
        a = max(a, float(np.max(np.abs(p0))))
        nz = np.abs(u) > 0
        b = max(b, float(np.max((np.abs(pu[nz]) - a) / np.abs(u[nz]), initial=0.0)))
    lip_ok = worst_excess <= tol
    growth_ok = math.isfinite(a) and b <= float(problem.theta(r_max)) + tol
    return PhiConditionReport(growth_ok, a, b, lip_ok, worst_ratio, worst_excess, worst_triple,
                              per_radius, used)


def fixed_point_solve(problem, tol=1e-12, max_iter=100_000, full_output=False, patience=100):
    """Picard iteration ``d <- y - Q(x(d))`` started from ``d = y``.

    With ``full_output`` also returns a dict with the iteration count and
    the largest observed contraction ratio.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    tag = problem.norm
    d = np.array(problem.y, dtype=float)
    prev_step = None
    bad = 0
    worst = 0.0
    for it in range(1, max_iter + 1):
        dn = problem.y - problem.g(d)
        step = tag.norm(dn - d)
        d = dn
        if step < tol:
            info = {"iterations": it, "max_ratio": worst, "last_step": step}
            return (d, info) if full_output else d
        if prev_step is not None and prev_step > 0:
            ratio = step / prev_step
            worst = max(worst, ratio)
            bad = bad + 1 if ratio > 1.0 - 1e-9 else 0
            if bad >= patience:
                raise NoContraction(f"contraction ratio above 1 for {patience} consecutive iterations")
        prev_step = step
    raise NonConvergence(f"Picard iteration did not reach {tol} in {max_iter} iterations")


@dataclass
class InverseLipschitzReport:
    passed: bool
    max_ratio: float
    rows: list
    delta: float

    def to_json(self):
        return {"passed": self.passed, "max_ratio": self.max_ratio, "delta": self.delta, "rows": self.rows}


def _random_unit(rng, n, tag):
    v = rng.standard_normal(n)
    return v / tag.norm(v)


def _solve_for(problem, pmap, y, method, opts):
    if method == "fixed_point":
        return fixed_point_solve(problem.with_target(y))
    from .solver import solve  # solver imports nothing from here; avoid a cycle at import time
    rep = solve(pmap, y, np.zeros(problem.N), opts)
    if rep.status != "solved":
        raise NonConvergence(f"descent ended with status {rep.status}")
    return rep.x_final


def verify_inverse_lipschitz(problem, n_pairs=8, delta=1e-3, seed=0, method="fixed_point",
                             m=None, bound_factor=1.0, opts=None):
    """Difference quotients of the inverse against ``1/m(max(|x|, |x'|))``.

    Targets ``y_k`` are seeded perturbations of ``problem.y``; each is paired
    with ``y_k'`` at distance ``delta``.  ``bound_factor`` scales the bound
    (values below 1 give a deliberately wrong bound for demos).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if method not in ("fixed_point", "descent"):
        raise ValueError("method must be 'fixed_point' or 'descent'")
    tag = problem.norm
    m = problem.m_profile() if m is None else m
    pmap = build_map(problem)
    rng = np.random.default_rng(seed)
    scale = max(1.0, tag.norm(problem.y))
    rows = []
    passed = True
    for k in range(n_pairs):
        y = problem.y + rng.uniform(0.0, 1.0) * scale * _random_unit(rng, problem.N, tag)
        y2 = y + delta * _random_unit(rng, problem.N, tag)
        x = _solve_for(problem, pmap, y, method, opts)
        x2 = _solve_for(problem, pmap, y2, method, opts)
        ratio = tag.norm(x - x2) / tag.norm(y - y2)
        r = max(tag.norm(x), tag.norm(x2))
        bound = bound_factor * inverse_lipschitz_bound(m, r)
        ok = ratio <= bound + 1e-3
        passed = passed and ok
        rows.append({"pair": k, "ratio": float(ratio), "bound": float(bound), "x_norm": float(r), "ok": bool(ok)})
    return InverseLipschitzReport(passed, max(row["ratio"] for row in rows), rows, float(delta))


def empirical_g_lipschitz(problem, r, n_pairs=200, seed=0):
    """Largest sampled ``|g(d) - g(d')| / |d - d'|`` for ``d, d'`` in the ball of radius ``r``."""
    tag = problem.norm
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        d1 = rng.uniform(0.0, r) * _random_unit(rng, problem.N, tag)
        d2 = rng.uniform(0.0, r) * _random_unit(rng, problem.N, tag)
        dd = tag.norm(d1 - d2)
        if dd > 0:
            worst = max(worst, tag.norm(problem.g(d1) - problem.g(d2)) / dd)
    return worst


def refinement_study(make_problem, Ns=(25, 50, 100, 200)):
    """Differences between solutions on grids ``N`` and ``2N`` at the coarse nodes.

    ``make_problem(N)`` builds the problem on ``N`` intervals.  Returns rows
    with the difference in the coarse discrete norm and the observed order
    between consecutive rows.
    """
    rows = []
    for N in Ns:
        coarse = make_problem(N)
        fine = make_problem(2 * N)
        dc = fixed_point_solve(coarse)
        df = fixed_point_solve(fine)
        diff = coarse.norm.norm(dc - df[1::2])
        rows.append({"N": N, "diff": float(diff)})
    for a, b in zip(rows, rows[1:]):
        b["order"] = math.log(a["diff"] / b["diff"]) / math.log(b["N"] / a["N"]) if b["diff"] > 0 else math.inf
    return rows


def _y_from_config(obj, N):
    if isinstance(obj, (int, float)):
        return np.full(N, float(obj))
    if "constant" in obj:
        return np.full(N, float(obj["constant"]))
    if "samples" in obj:
        return np.asarray(obj["samples"], dtype=float)
    raise ValueError("y must be {'constant': v} or {'samples': [...]}")


def problem_from_config(obj):
    """Build a problem from its JSON description."""
    N = int(obj["N"])
    phi = obj.get("phi", {"family": "sin", "params": {"amplitude": 0.9}})
    family = phi["family"]
    params = dict(phi.get("params", {}))
    if "theta0" in params and "amplitude" not in params and family in ("sin", "clip"):
        params["amplitude"] = params.pop("theta0")
    theta = obj.get("theta")
    if theta is not None:
        theta = Theta(theta["family"], theta.get("params", {}))
    y = _y_from_config(obj.get("y", {"constant": 1.0}), N)
    return VolterraProblem(N, y, family, params, theta, float(obj.get("p", 2.0)), float(phi.get("decay", 0.0)))


def load_problem(path):
    with open(path) as fh:
        return problem_from_config(json.load(fh))


def export_solution_csv(problem, d, path):
    """Write the ``t, x, x'`` table of a solution, including ``t = 0``."""
    d = np.asarray(d, dtype=float)
    x = problem.recover_x(d)
    dp = np.concatenate([[0.0], d])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "x'"])
        for row in zip(problem.t, x, dp):
            w.writerow([repr(float(v)) for v in row])
