"""
Pseudo-Jacobians of locally Lipschitz maps on R^n.

A pseudo-Jacobian at ``x`` is a set of linear maps whose support functionals
dominate the upper Dini derivative of every scalarisation ``<y*, f>`` at
``x``.  Three concrete shapes are supported:

* :class:`Singleton` - one operator (a derivative),
* :class:`BallForm` - a closed operator-norm ball ``A + L * B``,
* :class:`HullForm` - the convex hull of finitely many operators.
"""

from dataclasses import dataclass, field
import heapq
import math
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import (CoincidentTarget, DegenerateSegment, EvaluationFailure,
                     LipinvError, NotSquare, UnsupportedNorm)
from .linalg import (L2, Bound, LinearMap, NormTag, banach_constant,
                     dual_banach_constant, dual_vector, min_norm_point, operator_norm)

DEFAULT_H_STEPS = (1e-4, 1e-5, 1e-6)
MAX_HULL_GENERATORS = 6


class HullTooLarge(LipinvError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Singleton:
    op: LinearMap

    @property
    def members(self):
        return (self.op,)

    def to_json(self):
        return {"singleton": self.op.matrix.tolist()}


@dataclass(frozen=True, eq=False)
class BallForm:
    center: LinearMap
    radius: float

    def __post_init__(self):
        r = float(self.radius)
        if not (r >= 0.0 and math.isfinite(r)):
            raise ValueError("ball radius must be finite and nonnegative")
        object.__setattr__(self, "radius", r)

    @property
    def members(self):
        return (self.center,)

    def to_json(self):
        return {"ball": {"center": self.center.matrix.tolist(), "radius": self.radius}}


@dataclass(frozen=True, eq=False)
class HullForm:
    ops: tuple
    report: Any = field(default=None, compare=False)

    def __post_init__(self):
        ops = tuple(self.ops)
        if not ops:
            raise ValueError("a hull needs at least one operator")
        first = ops[0]
        for T in ops[1:]:
            if (T.shape != first.shape or T.domain_norm != first.domain_norm
                    or T.codomain_norm != first.codomain_norm):
                raise ValueError("hull members must share shape and norm tags")
        object.__setattr__(self, "ops", ops)

    @property
    def members(self):
        return self.ops

    def to_json(self):
        return {"hull": [T.matrix.tolist() for T in self.ops]}


PseudoJacobian = Singleton | BallForm | HullForm


def _first(pj):
    return pj.members[0]


def pj_from_json(obj, domain_norm=L2, codomain_norm=L2):
    """Inverse of ``pj.to_json()``; the JSON form does not carry norm tags."""
    def lm(mat):
        return LinearMap(np.asarray(mat, dtype=float), domain_norm, codomain_norm)
    if "singleton" in obj:
        return Singleton(lm(obj["singleton"]))
    if "ball" in obj:
        return BallForm(lm(obj["ball"]["center"]), obj["ball"]["radius"])
    if "hull" in obj:
        return HullForm(tuple(lm(m) for m in obj["hull"]))
    raise ValueError(f"unrecognised pseudo-Jacobian JSON keys {sorted(obj)}")


@dataclass(frozen=True)
class PointMap:
    """A map ``f: R^n -> R^m`` together with a pseudo-Jacobian mapping ``jf``.

    ``chain_rule="strong"`` declares that the transported dual set contains
    the Clarke subdifferential of ``|f(.) - y|``; this is a contract that can
    be spot-checked, not proven.
    """

    f: Callable
    jf: Callable
    domain_norm: NormTag = L2
    codomain_norm: NormTag = L2
    chain_rule: str = "plain"
    name: str = ""
    dim: int = None

    def __post_init__(self):
        if self.chain_rule not in ("plain", "strong"):
            raise ValueError("chain_rule must be 'plain' or 'strong'")

    def __call__(self, x):
        y = np.asarray(self.f(np.asarray(x, dtype=float)), dtype=float)
        if not np.all(np.isfinite(y)):
            raise EvaluationFailure(f"non-finite value of {self.name or 'f'}")
        return np.atleast_1d(y)


def _support(pj, V, Y):
    """sup over the pseudo-Jacobian of <y*, T v> for every pair (rows of V, rows of Y)."""
    if isinstance(pj, Singleton):
        return (V @ pj.op.matrix.T) @ Y.T
    if isinstance(pj, BallForm):
        T = pj.center
        vn = np.array([T.domain_norm.norm(v) for v in V])
        yn = np.array([T.codomain_norm.dual().norm(y) for y in Y])
        return (V @ T.matrix.T) @ Y.T + pj.radius * np.outer(vn, yn)
    return np.max([(V @ T.matrix.T) @ Y.T for T in pj.ops], axis=0)


def _unit_rows(rng, count, dim, tag):
    G = rng.standard_normal((count, dim))
    return G / np.array([tag.norm(g) for g in G])[:, None]


@dataclass
class ValidationReport:
    passed: bool
    worst_margin: float
    worst_direction: list
    worst_dual: list
    n_pairs: int
    tol: float

    def to_json(self):
        return dict(self.__dict__)


def pj_validate(pmap, x, n_dirs=32, n_duals=32, h_steps=DEFAULT_H_STEPS, seed=0, tol=1e-6, pj=None):
    """Sample-check the defining Dini inequality of ``pmap.jf(x)``.

    The upper Dini derivative is estimated by the largest Richardson
    extrapolant ``2 D(h/2) - D(h)`` of forward quotients over ``h_steps``.
    This removes the first-order curvature bias of smooth maps and returns
    the exact value at kinks where the quotient does not depend on ``h``.
    The margin of a pair is that estimate minus the support value; the
    report passes when no margin exceeds ``tol``.
    """
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    pj = pmap.jf(x) if pj is None else pj
    fx = pmap(x)
    n, m = x.size, fx.size
    V = _unit_rows(rng, n_dirs, n, pmap.domain_norm)
    Y = _unit_rows(rng, n_duals, m, pmap.codomain_norm.dual())
    Q = np.full((n_dirs, n_duals), -np.inf)
    for i, v in enumerate(V):
        for h in h_steps:
            D1 = (pmap(x + h * v) - fx) / h
            D2 = (pmap(x + 0.5 * h * v) - fx) / (0.5 * h)
            np.maximum(Q[i], Y @ (2.0 * D2 - D1), out=Q[i])
    margins = Q - _support(pj, V, Y)
    i, j = np.unravel_index(int(np.argmax(margins)), margins.shape)
    worst = float(margins[i, j])
    return ValidationReport(bool(worst <= tol), worst, V[i].tolist(), Y[j].tolist(), n_dirs * n_duals, tol)


def _sample_ball(rng, center, radius, count, tag):
    n = center.size
    U = _unit_rows(rng, count, n, tag)
    r = radius * rng.random(count) ** (1.0 / n)
    return center + r[:, None] * U


def _central_jacobian(f, z, step):
    n = z.size
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        cols.append((np.asarray(f(z + e), dtype=float) - np.asarray(f(z - e), dtype=float)) / (2 * step))
    J = np.column_stack(cols)
    if not np.all(np.isfinite(J)):
        raise EvaluationFailure("non-finite finite-difference Jacobian")
    return J


def pj_hull_sample(f, x, radius, n_samples, fd_step=1e-6, seed=0,
                   domain_norm=L2, codomain_norm=L2, dedupe_tol=1e-8):
    """Gradient-sampling outer-approximation candidate of the Clarke Jacobian.

    Central-difference Jacobians at seeded uniform points of ``B(x; radius)``;
    near-duplicates are merged.  The returned hull carries the report of
    :func:`pj_validate` run on it at ``x``.
    """
    x = np.asarray(x, dtype=float)
    if n_samples < x.size + 1:
        raise ValueError("n_samples must be at least dim + 1")
    rng = np.random.default_rng(seed)
    Z = _sample_ball(rng, x, radius, n_samples, domain_norm)
    mats = []
    for z in Z:
        J = np.atleast_2d(_central_jacobian(f, z, fd_step))
        scale = max(1.0, float(np.max(np.abs(J))))
        if not any(np.max(np.abs(J - M)) <= dedupe_tol * scale for M in mats):
            mats.append(J)
    hull = HullForm(tuple(LinearMap(J, domain_norm, codomain_norm) for J in mats))
    pmap = PointMap(f, lambda _z: hull, domain_norm, codomain_norm)
    report = pj_validate(pmap, x, n_dirs=16, n_duals=16, seed=seed)
    return HullForm(hull.ops, report=report)


# ---------------------------------------------------------------------------
# transported dual sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DualSlice:
    """Image of the unit dual of ``f(x) - y`` under the pseudo-Jacobian.

    ``vectors`` holds one row for singletons, one per generator for hulls,
    and the ball centre for ball forms (with ``radius`` > 0).
    """

    kind: str
    vectors: np.ndarray
    radius: float
    norm: NormTag
    ystar: np.ndarray = None

    def scaled(self, c):
        return DualSlice(self.kind, c * self.vectors, c * self.radius, self.norm, self.ystar)


def delta_Fy(pj, fx, y, codomain_tag=None):
    """The set of functionals y*.T over the pseudo-Jacobian, y* dual to f(x) - y."""
    T0 = _first(pj)
    tag = T0.codomain_norm if codomain_tag is None else codomain_tag
    r = np.asarray(fx, dtype=float) - np.asarray(y, dtype=float)
    if not np.any(r):
        raise CoincidentTarget("f(x) = y: the transported set is undefined")
    ystar = dual_vector(r, tag)
    xdual = T0.domain_norm.dual()
    if isinstance(pj, Singleton):
        return DualSlice("singleton", (pj.op.matrix.T @ ystar)[None, :], 0.0, xdual, ystar)
    if isinstance(pj, BallForm):
        # {R^T y* : ||R|| <= L} is the full dual ball of radius L (rank-one R)
        return DualSlice("ball", (pj.center.matrix.T @ ystar)[None, :], pj.radius, xdual, ystar)
    return DualSlice("hull", np.array([T.matrix.T @ ystar for T in pj.ops]), 0.0, xdual, ystar)


def min_norm_element(slc):
    """Element of least dual norm in the slice, as a coordinate vector."""
    if slc.kind == "singleton":
        return slc.vectors[0].copy()
    if slc.kind == "ball":
        c = slc.vectors[0]
        nc = slc.norm.norm(c)
        if nc <= slc.radius:
            return np.zeros_like(c)
        return c * (1.0 - slc.radius / nc)
    w, _ = min_norm_point(slc.vectors, slc.norm)
    return w


def lambda_lower(slc):
    """Smallest dual norm over the slice.

    Under the strong chain rule this bounds the Clarke criticality measure
    of ``|f(.) - y|`` from below; otherwise it is a surrogate.
    """
    if slc.kind == "singleton":
        return slc.norm.norm(slc.vectors[0])
    if slc.kind == "ball":
        return max(slc.norm.norm(slc.vectors[0]) - slc.radius, 0.0)
    return min_norm_point(slc.vectors, slc.norm)[1]


# ---------------------------------------------------------------------------
# pointwise surjection / injection / regularity constants
# ---------------------------------------------------------------------------

def _hull_inf(ops, const, tol=1e-6, max_evals=20000):
    """Branch and bound for inf of ``const`` over conv(ops).

    ``const`` is 1-Lipschitz in operator norm, which gives a lower bound on
    every sub-simplex; the returned value is the best sampled value (an upper
    bound of the infimum) with the certified lower bound in ``info``.
    """
    k = len(ops)
    if k > MAX_HULL_GENERATORS:
        raise HullTooLarge(f"hulls with more than {MAX_HULL_GENERATORS} generators are not supported")
    T0 = ops[0]
    mats = np.array([T.matrix for T in ops])
    if k == 1:
        v = const(T0)
        return Bound(v, v.kind, lower=float(v) if v.kind in ("exact", "lower") else 0.0, evals=1)

    if T0.hilbertian:
        # raw singular values avoid building a LinearMap per evaluation
        m, n = T0.shape
        idx = (m if const is banach_constant else n) - 1
        fac = T0.codomain_norm.scale / T0.domain_norm.scale

        def value(w):
            s = np.linalg.svd(np.tensordot(w, mats, axes=1), compute_uv=False)
            return fac * float(s[idx]) if idx < s.size else 0.0

        def dist(wa, wb):
            return fac * float(np.linalg.svd(np.tensordot(wa - wb, mats, axes=1), compute_uv=False)[0])
    else:
        def value(w):
            return float(const(T0.with_matrix(np.tensordot(w, mats, axes=1))))

        def dist(wa, wb):
            return float(operator_norm(T0.with_matrix(np.tensordot(wa - wb, mats, axes=1))))

    def node(W, vals):
        D = np.zeros((k, k))
        for i in range(k):
            for j in range(i + 1, k):
                D[i, j] = D[j, i] = dist(W[i], W[j])
        # the constants are nonnegative
        lb = max(0.0, max(vals[j] - D[:, j].max() for j in range(k)))
        # longest edge
        i, j = np.unravel_index(int(np.argmax(D)), D.shape)
        return lb, (i, j)

    W0 = np.eye(k)
    vals0 = [value(w) for w in W0]
    best = min(vals0)
    evals = k
    # a local polish first gives a small incumbent, so pruning starts early
    def on_simplex(z):
        a = np.abs(z)
        return a / a.sum() if a.sum() > 0 else np.full(k, 1.0 / k)
    for start in (np.full(k, 1.0 / k), W0[int(np.argmin(vals0))] + 1e-3):
        res = minimize(lambda z: value(on_simplex(z)), start, method="Nelder-Mead",
                       options={"maxfev": 200 * k, "xatol": 1e-10, "fatol": 1e-12})
        evals += res.nfev
        best = min(best, float(res.fun))
    lb0, edge0 = node(W0, vals0)
    heap = [(lb0, 0, W0, vals0, edge0)]
    counter = 1
    global_lb = lb0
    while heap:
        lb, _, W, vals, (i, j) = heapq.heappop(heap)
        global_lb = lb
        if lb >= best - tol or evals >= max_evals:
            break
        mid = 0.5 * (W[i] + W[j])
        vm = value(mid)
        evals += 1
        best = min(best, vm)
        for drop in (i, j):
            Wc = W.copy()
            Wc[drop] = mid
            vc = list(vals)
            vc[drop] = vm
            lbc, edge = node(Wc, vc)
            heapq.heappush(heap, (lbc, counter, Wc, vc, edge))
            counter += 1
    else:
        global_lb = best
    exact_consts = ops[0].hilbertian
    return Bound(best, "upper" if exact_consts else "sampled",
                 lower=max(min(global_lb, best), 0.0), evals=evals)


def _pointwise(pj, const):
    if isinstance(pj, Singleton):
        return const(pj.op)
    if isinstance(pj, BallForm):
        base = const(pj.center)
        # C(A + R) >= C(A) - ||R||, attained by an aligned rank-one R
        return Bound(max(float(base) - pj.radius, 0.0), base.kind)
    return _hull_inf(pj.ops, const)


def sur_at(pj):
    """inf of the Banach constant over the convex hull of ``pj``."""
    return _pointwise(pj, banach_constant)


def inj_at(pj):
    """inf of the dual Banach constant over the convex hull of ``pj``."""
    return _pointwise(pj, dual_banach_constant)


def _certified_low(b):
    if b.kind in ("exact", "lower"):
        return float(b)
    return float(b.info.get("lower", 0.0))


def reg_at(pj):
    """Regularity index ``min(sur, inj)`` with an isomorphism flag in ``info``."""
    m, n = _first(pj).shape
    if m != n:
        raise NotSquare(f"regularity needs square operators, got {m}x{n}")
    s, i = sur_at(pj), inj_at(pj)
    b = s if float(s) <= float(i) else i
    iso = _certified_low(i) > 0.0
    return Bound(min(float(s), float(i)), b.kind, isomorphism=iso, sur=float(s), inj=float(i))


def sur_estimate(pmap, x, radii, n_pts=32, seed=0):
    """max over the radius schedule of the sampled min of ``sur_at`` on B(x; r)."""
    x = np.asarray(x, dtype=float)
    radii = list(radii)
    if not radii:
        raise ValueError("radius schedule must be nonempty")
    rng = np.random.default_rng(seed)
    per_r = []
    for r in radii:
        Z = _sample_ball(rng, x, r, n_pts, pmap.domain_norm)
        vals = [float(sur_at(pmap.jf(z))) for z in np.vstack([x[None, :], Z])]
        per_r.append(min(vals))
    return Bound(max(per_r), "sampled", per_radius=per_r, radii=radii)


def segment_injectivity_modulus(pmap, u, w, n_samples=32):
    """min of ``inj_at`` at equispaced points of the segment [u, w].

    A positive value ``a`` supports |f(u) - f(w)| >= a |u - w| up to the
    sampling slack of the segment grid.
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.array_equal(u, w):
        raise DegenerateSegment("u and w coincide")
    s = np.linspace(0.0, 1.0, max(int(n_samples), 2))
    vals = [float(inj_at(pmap.jf(u + si * (w - u)))) for si in s]
    return Bound(min(vals), "sampled", n_samples=len(s),
                 segment_length=pmap.domain_norm.norm(w - u))


def linear_map(A, domain_norm=L2, codomain_norm=L2, name="linear"):
    """PointMap of ``x -> A x`` with its derivative as a singleton."""
    T = A if isinstance(A, LinearMap) else LinearMap(A, domain_norm, codomain_norm)
    pj = Singleton(T)
    return PointMap(lambda x: T.matrix @ x, lambda _x: pj, T.domain_norm, T.codomain_norm,
                    chain_rule="strong", name=name, dim=T.shape[1])
