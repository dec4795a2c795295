"""
Nonsmooth descent for ``f(x) = y`` with Palais-Smale monitoring.

The functional minimised is ``F_y(x) = |f(x) - y|`` in the codomain norm.  At
each iterate the transported dual set of the pseudo-Jacobian is formed, its
least-norm element ``w`` gives the criticality estimate ``lambda = |w|`` and
the steepest descent direction, and an Armijo backtracking step is taken.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.spatial import cKDTree

from .certificates import a_priori_radius, inverse_lipschitz_bound, weight_from_m
from .errors import CoincidentTarget, CriticalPoint, DimensionNot2, TraceTooShort
from .linalg import dual_vector
from .pseudo_jacobian import (BallForm, HullForm, Singleton, _sample_ball, delta_Fy,
                              lambda_lower, min_norm_element, reg_at,
                              segment_injectivity_modulus)

STATUSES = ("solved", "critical_nonsolution", "ps_escape", "iteration_cap", "stalled")
CRITICAL_POINT_TOL = 1e-14


@dataclass
class SolveOptions:
    tol_residual: float = 1e-8
    max_iters: int = 10_000
    armijo_c: float = 0.1
    backtrack: float = 0.5
    max_backtracks: int = 50
    min_step: float = 1e-14
    weight: object = None
    seed: int = 0
    critical_tol: float = 1e-7
    escape_norm: float = 1e6
    monitor: bool = True

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if not 0 < self.armijo_c < 1 or not 0 < self.backtrack < 1:
            raise ValueError("armijo_c and backtrack must lie in (0, 1)")
        if self.max_iters < 1 or self.max_backtracks < 1 or not self.min_step > 0:
            raise ValueError("iteration limits must be positive")


@dataclass
class SolveReport:
    status: str
    x_final: np.ndarray
    residual_trace: list
    lambda_trace: list
    ps_product_trace: list
    norm_trace: list
    step_trace: list
    iterations: int
    lambda_is_lower_bound: bool
    inv_lip_bound: float = None
    a_priori_radius: float = None
    tail: list = field(default_factory=list)
    claim_violations: list = field(default_factory=list)
    weight_violations: list = field(default_factory=list)
    messages: list = field(default_factory=list)

    @property
    def residual(self):
        return self.residual_trace[-1]

    def to_json(self, max_trace=1000):
        def thin(seq):
            seq = [float(v) for v in seq]
            if len(seq) <= max_trace:
                return seq
            idx = np.unique(np.linspace(0, len(seq) - 1, max_trace).round().astype(int))
            return [seq[i] for i in idx]
        return {
            "status": self.status,
            "iterations": self.iterations,
            "residual": float(self.residual),
            "x_final": np.asarray(self.x_final).tolist(),
            "inv_lip_bound": self.inv_lip_bound,
            "a_priori_radius": self.a_priori_radius,
            "lambda_is_lower_bound": self.lambda_is_lower_bound,
            "residual_trace": thin(self.residual_trace),
            "lambda_trace": thin(self.lambda_trace),
            "ps_product_trace": thin(self.ps_product_trace),
            "norm_trace": thin(self.norm_trace),
            "claim_violations": self.claim_violations,
            "weight_violations": self.weight_violations,
            "messages": self.messages,
        }


def _direction(pmap, x, fx, y):
    pj = pmap.jf(x)
    slc = delta_Fy(pj, fx, y, pmap.codomain_norm)
    w = min_norm_element(slc)
    lam = lambda_lower(slc)
    if lam <= CRITICAL_POINT_TOL:
        raise CriticalPoint(f"least-norm element has norm {lam:.3e}")
    # primal unit vector paired with w at its dual norm
    d = -dual_vector(w, slc.norm)
    return d, lam, pj


def descent_direction(pmap, x, y):
    """Unit steepest-descent direction of ``|f(.) - y|`` and the criticality estimate."""
    x = np.asarray(x, dtype=float)
    d, lam, _ = _direction(pmap, x, pmap(x), np.asarray(y, dtype=float))
    return d, lam


def _escaping(norms, ps, escape_norm):
    if max(norms) > escape_norm:
        return True
    half = norms[len(norms) // 2:]
    if len(half) < 2:
        return False
    grew = all(b >= a for a, b in zip(half, half[1:])) and half[-1] > half[0]
    ps_to_zero = len(ps) > 0 and ps[-1] <= 1e-3 * max(ps)
    return grew and ps_to_zero


def solve(pmap, y, x0, opts=None, cert=None):
    """Armijo descent on ``|f(x) - y|`` from ``x0``.

    Abnormal ends are reported through ``status`` rather than raised:
    ``critical_nonsolution`` (criticality below ``critical_tol`` away from a
    solution), ``ps_escape`` (iterates run off while weighted criticality
    vanishes), ``iteration_cap`` and ``stalled`` (line search failed).
    """
    opts = SolveOptions() if opts is None else opts
    y = np.asarray(y, dtype=float)
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    X, Y = pmap.domain_norm, pmap.codomain_norm
    weight = opts.weight
    if weight is None and cert is not None:
        weight = weight_from_m(cert.m)
    strong = pmap.chain_rule == "strong"
    res, lams, ps, norms, steps, tail = [], [], [], [], [], []
    claim_bad, weight_bad, msgs = [], [], []
    fx = pmap(x)
    F = Y.norm(fx - y)
    status = "iteration_cap"
    it = 0
    while True:
        res.append(F)
        norms.append(X.norm(x))
        tail.append(x.copy())
        if len(tail) > 10:
            tail.pop(0)
        if F <= opts.tol_residual:
            status = "solved"
            break
        if norms[-1] > opts.escape_norm:
            status = "ps_escape"
            break
        if it >= opts.max_iters:
            break
        try:
            d, lam, pj = _direction(pmap, x, fx, y)
        except CriticalPoint:
            d, lam, pj = None, 0.0, None
        lams.append(lam)
        if weight is not None:
            ps.append(lam * (1.0 + float(weight(norms[-1]))))
        if opts.monitor and pj is not None:
            if strong and isinstance(pj, (Singleton, BallForm)) and pj.members[0].shape[0] == pj.members[0].shape[1]:
                reg = float(reg_at(pj))
                if lam < reg - 1e-9:
                    claim_bad.append({"iteration": it, "lambda": lam, "reg": reg})
                    warnings.warn(f"criticality {lam:.3e} below regularity index {reg:.3e} at iteration {it}")
            if cert is not None and weight is not None and lam * (1.0 + float(weight(norms[-1]))) < cert.m0 - 1e-9:
                weight_bad.append({"iteration": it, "product": ps[-1], "m0": cert.m0})
        if lam <= opts.critical_tol:
            status = "ps_escape" if _escaping(norms, ps or lams, opts.escape_norm) else "critical_nonsolution"
            break
        t = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            xn = x + t * d
            fxn = pmap(xn)
            Fn = Y.norm(fxn - y)
            if Fn <= F - opts.armijo_c * t * lam:
                accepted = True
                break
            t *= opts.backtrack
            if t < opts.min_step:
                break
        if not accepted:
            status = "stalled"
            msgs.append(f"line search failed at iteration {it} with lambda = {lam:.3e}")
            break
        steps.append(t)
        x, fx, F = xn, fxn, Fn
        it += 1
    if status == "critical_nonsolution" and strong and claim_bad:
        msgs.append("critical non-solution while the regularity index is positive: declared pseudo-Jacobian is inconsistent")
    report = SolveReport(status, x, res, lams, ps, norms, steps, it, strong, tail=tail,
                         claim_violations=claim_bad, weight_violations=weight_bad, messages=msgs)
    if cert is not None and status == "solved":
        xn = X.norm(x)
        report.inv_lip_bound = inverse_lipschitz_bound(cert.m, xn)
        gap = Y.norm(y - pmap(np.zeros_like(x)))
        r_star = a_priori_radius(cert, gap)
        report.a_priori_radius = r_star
        if xn > r_star + 1e-6:
            msg = f"|x_final| = {xn:.6g} exceeds the a-priori radius {r_star:.6g}"
            msgs.append(msg)
            warnings.warn(msg)
    return report


def ps_classify(report, weight=None):
    """Read a solve trace as a Palais-Smale sequence.

    ``escaping``: the iterates run off while weighted criticality tends to 0;
    ``converging_ps_sequence``: the tail is Cauchy; otherwise
    ``bounded_nonconverging``.
    """
    norms = list(report.norm_trace)
    if len(norms) < 10:
        raise TraceTooShort("need at least 10 iterates")
    lams = list(report.lambda_trace)
    if weight is not None:
        ps = [lam * (1.0 + float(weight(r))) for lam, r in zip(lams, norms)]
    else:
        ps = list(report.ps_product_trace) or lams
    if _escaping(norms, ps, 1e6):
        return "escaping"
    tail = np.asarray(report.tail[-5:])
    diam = max((np.linalg.norm(a - b) for a in tail for b in tail), default=0.0)
    if diam < 1e-6:
        return "converging_ps_sequence"
    return "bounded_nonconverging"


@dataclass
class CertificateReport:
    verdict: str
    clusters: list
    statuses: list
    inconsistencies: list
    probe_moduli: list
    radius: float

    def to_json(self):
        return {
            "verdict": self.verdict,
            "clusters": [np.asarray(c).tolist() for c in self.clusters],
            "statuses": self.statuses,
            "inconsistencies": self.inconsistencies,
            "probe_moduli": self.probe_moduli,
            "radius": self.radius,
        }


def uniqueness_certificate(pmap, y, solutions=(), n_starts=10, seed=0, cert=None, radius=None,
                           opts=None, n_probe_pairs=8, segment_samples=16, cluster_tol=1e-6, dim=None):
    """Multistart uniqueness evidence for ``f(x) = y``.

    Solves from seeded starts in the a-priori ball, clusters the solved
    endpoints, and computes sampled segment injectivity moduli between
    clusters and between random probe pairs.  A positive modulus between two
    distinct solutions contradicts the sampled regularity and is reported as
    an inconsistency, provided it survives a 16x finer resampling of the
    segment.
    """
    y = np.asarray(y, dtype=float)
    X = pmap.domain_norm
    sols = [np.asarray(s, dtype=float) for s in solutions]
    dim = dim or pmap.dim or (sols[0].size if sols else None)
    if dim is None:
        raise ValueError("domain dimension unknown; pass dim= or a solution")
    if radius is None:
        if cert is not None:
            radius = a_priori_radius(cert, pmap.codomain_norm.norm(y - pmap(np.zeros(dim))))
        else:
            radius = max([1.0] + [2.0 * X.norm(s) for s in sols])
    rng = np.random.default_rng(seed)
    starts = _sample_ball(rng, np.zeros(dim), radius, n_starts, X)
    statuses = []
    ends = list(sols)
    for x0 in starts:
        rep = solve(pmap, y, x0, opts, cert=None)
        statuses.append(rep.status)
        if rep.status == "solved":
            ends.append(rep.x_final)
    clusters = []
    for e in ends:
        if not any(X.norm(e - c) <= cluster_tol for c in clusters):
            clusters.append(e)
    bad = []
    for i in range(len(clusters)):
        for j in range(i + 1, len(clusters)):
            a = float(segment_injectivity_modulus(pmap, clusters[i], clusters[j], segment_samples))
            if a > 0:
                # a modulus that collapses under refinement only reflects sampling slack
                fine = float(segment_injectivity_modulus(pmap, clusters[i], clusters[j], 16 * segment_samples))
                if fine >= 0.5 * a:
                    bad.append({"pair": [i, j], "modulus": fine})
    probes = []
    P = _sample_ball(rng, np.zeros(dim), radius, 2 * n_probe_pairs, X)
    for k in range(n_probe_pairs):
        probes.append(float(segment_injectivity_modulus(pmap, P[2 * k], P[2 * k + 1], segment_samples)))
    if len(clusters) > 1:
        verdict = "non_unique"
    elif len(clusters) == 1 and all(p > 0 for p in probes):
        verdict = "unique_empirical"
    else:
        verdict = "inconclusive"
    return CertificateReport(verdict, clusters, statuses, bad, probes, float(radius))


def squared_mode_check(pmap, x, y, tol=1e-9, return_deviation=False):
    """Check that criticality of ``F^2/2`` equals ``F`` times criticality of ``F``.

    The left side is computed independently as the least norm of the slice
    scaled by ``F_y(x)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fx = pmap(x)
    F = pmap.codomain_norm.norm(fx - y)
    if F == 0:
        raise CoincidentTarget("f(x) = y")
    slc = delta_Fy(pmap.jf(x), fx, y, pmap.codomain_norm)
    lam_f = lambda_lower(slc)
    lam_g = lambda_lower(slc.scaled(F))
    dev = abs(lam_g - F * lam_f)
    ok = dev <= tol
    return (ok, dev) if return_deviation else ok


@dataclass
class OpennessReport:
    passed: bool
    worst_gap: float
    threshold: float
    dispersion: float
    target_radius: float

    def __bool__(self):
        return self.passed


def _project_ball(z, center, r, tag):
    d = tag.norm(z - center)
    if d <= r:
        return z
    return center + (z - center) * (r / d)


def _refine_in_ball(pmap, target, z, center, r, iters=200, tol=1e-12):
    Y = pmap.codomain_norm
    fz = pmap(z)
    F = Y.norm(fz - target)
    for _ in range(iters):
        if F <= tol:
            break
        try:
            d, lam, _ = _direction(pmap, z, fz, target)
        except (CriticalPoint, CoincidentTarget):
            break
        t = 1.0
        moved = False
        for _ in range(60):
            zn = _project_ball(z + t * d, center, r, pmap.domain_norm)
            fzn = pmap(zn)
            Fn = Y.norm(fzn - target)
            if Fn < F:
                moved = True
                break
            t *= 0.5
        if not moved:
            break
        z, fz, F = zn, fzn, Fn
    return F


def openness_oracle_2d(pmap, x, r, alpha, n_rays=32, n_disk=4000, seed=0):
    """Desk check of ``B(f(x); alpha r) subset f(B(x; r))`` for planar maps.

    Targets on the circle of radius ``0.95 alpha r`` around ``f(x)`` must be
    reached, after a projected descent restricted to the ball, within three
    times the mean nearest-neighbour spacing of the sampled image cloud.
    """
    x = np.asarray(x, dtype=float)
    fx = pmap(x)
    if x.size != 2 or fx.size != 2:
        raise DimensionNot2("openness oracle needs a map R^2 -> R^2")
    rng = np.random.default_rng(seed)
    Z = np.vstack([x[None, :], _sample_ball(rng, x, r, n_disk, pmap.domain_norm)])
    img = np.array([pmap(z) for z in Z])
    tree = cKDTree(img)
    dists, _ = tree.query(img, k=2)
    dispersion = float(np.mean(dists[:, 1]))
    threshold = 3.0 * dispersion
    rad = 0.95 * alpha * r
    angles = 2 * np.pi * (np.arange(n_rays) + 0.5) / n_rays
    worst = 0.0
    for th in angles:
        u = np.array([math.cos(th), math.sin(th)])
        target = fx + rad * u / pmap.codomain_norm.norm(u)
        _, k = tree.query(target)
        gap = _refine_in_ball(pmap, target, Z[k].copy(), x, r)
        worst = max(worst, gap)
    return OpennessReport(bool(worst <= threshold), worst, threshold, dispersion, rad)
