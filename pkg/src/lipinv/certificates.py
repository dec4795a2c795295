"""
Radial Hadamard-type certificates.

A radial profile ``m`` bounds the surjection constant of the pseudo-Jacobian
from below on spheres ``|x| = rho``.  From it we get the surjection radius
``rho(r) = int_0^r m``, a divergence verdict for ``int_0^inf m``, the a-priori
ball that must contain a solution, the weight ``h = m(0)/m - 1`` and the
local Lipschitz bound ``1/m(|x|)`` of the inverse.

Divergence of an improper integral cannot be decided from finitely many
samples, so only the closed-form families below earn ``divergent_certified``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import (DimensionTooLarge, NotAWeight, NotCertified, NotPositive,
                     OutOfRange, Unreachable)
from .linalg import Bound
from .pseudo_jacobian import _sample_ball, _unit_rows, sur_at

FAMILIES = ("constant", "c_over_1p_rho", "c_over_1p_rho_pow_s")
VERDICTS = ("divergent_certified", "divergent_empirical", "inconclusive", "fails")
JUMP_RTOL = 1e-9
JUMP_SLOPE_RATIO = 10.0
MAX_SAMPLED_DIM = 20
# sampled values this small relative to m(0) are read as zero
ZERO_RTOL = 1e-7


def default_grid(r_max, n=64):
    """``n`` points: 0 followed by a geometric ladder up to ``r_max``."""
    return np.concatenate([[0.0], np.geomspace(r_max * 1e-3, r_max, n - 1)])


def _family_value(family, params, rho):
    rho = np.asarray(rho, dtype=float)
    c = float(params["c"])
    if family == "constant":
        return np.full_like(rho, c)
    if family == "c_over_1p_rho":
        return c / (1.0 + rho)
    if family == "c_over_1p_rho_pow_s":
        return c / (1.0 + rho) ** float(params["s"])
    raise ValueError(f"unknown profile family {family!r}")


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Values of a radial function on a grid starting at 0.

    Analytic profiles also carry ``family``/``params`` and are evaluated in
    closed form off the grid.
    """

    grid: np.ndarray
    values: np.ndarray
    family: str = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.size < 2 or g.shape != v.shape:
            raise ValueError("grid and values must be 1-D arrays of equal length >= 2")
        if g[0] != 0.0 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must start at 0 and be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("profile values must be finite and nonnegative")
        if self.family is not None and self.family not in FAMILIES:
            raise ValueError(f"unknown profile family {self.family!r}")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "params", dict(self.params))

    @classmethod
    def analytic(cls, family, params, r_max=100.0, n=64):
        grid = default_grid(r_max, n)
        return cls(grid, _family_value(family, params, grid), family, params)

    @property
    def source(self):
        return "sampled" if self.family is None else "analytic"

    def __call__(self, rho):
        """Evaluate; sampled profiles interpolate linearly inside the grid."""
        if self.family is not None:
            return _family_value(self.family, self.params, rho)[()]
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0) or np.any(rho > self.grid[-1]):
            raise OutOfRange(f"radius outside the sampled grid [0, {self.grid[-1]}]")
        return np.interp(rho, self.grid, self.values)[()]

    def floor_value(self, rho):
        """Smallest value over the grid cell containing ``rho`` (sound for nonincreasing m)."""
        if self.family is not None:
            return float(self(rho))
        if rho < 0 or rho > self.grid[-1]:
            raise OutOfRange(f"radius outside the sampled grid [0, {self.grid[-1]}]")
        k = int(np.searchsorted(self.grid, rho, side="left"))
        return float(self.values[min(k, self.grid.size - 1)])

    def to_json(self):
        out = {"grid": self.grid.tolist(), "values": self.values.tolist(), "source": self.source}
        if self.family is not None:
            out["family"] = self.family
            out["params"] = dict(self.params)
        return out


def mu_profile(pmap, grid, n_pts_per_shell=64, seed=0, dim=None, polish=True):
    """Sampled ``mu(rho) = inf_{|x| <= rho} sur Jf(x)`` on ``grid``.

    Each shell ``|x| = rho_k`` is sampled and a running minimum over shells
    makes the profile nonincreasing.  With ``polish`` the best point found so
    far is refined by a local search inside the ball, which catches interior
    zeros the shells step over.  The result still over-estimates the true
    infimum.
    """
    dim = pmap.dim if dim is None else dim
    if dim is None:
        raise ValueError("the domain dimension is unknown; pass dim=")
    if dim > MAX_SAMPLED_DIM:
        raise DimensionTooLarge(f"shell sampling is limited to dimension <= {MAX_SAMPLED_DIM}")
    grid = np.asarray(grid, dtype=float)
    rng = np.random.default_rng(seed)
    sur = lambda z: float(sur_at(pmap.jf(z)))
    vals = np.empty(grid.size)
    best_val, best_pt = np.inf, np.zeros(dim)
    for k, rho in enumerate(grid):
        if rho == 0.0:
            pts = np.zeros((1, dim))
        else:
            pts = rho * _unit_rows(rng, n_pts_per_shell, dim, pmap.domain_norm)
        for z in pts:
            v = sur(z)
            if v < best_val:
                best_val, best_pt = v, z
        if polish and rho > 0.0 and best_val > 0.0:
            z, v = _polish_in_ball(sur, best_pt, rho, pmap.domain_norm)
            if v < best_val:
                best_val, best_pt = v, z
        vals[k] = best_val
    return RadialProfile(grid, vals)


def _polish_in_ball(fun, start, rho, norm):
    from scipy.optimize import minimize

    def inside(z):
        r = norm.norm(z)
        return z if r <= rho else z * (rho / r)

    res = minimize(lambda z: fun(inside(z)), start, method="Nelder-Mead",
                   options={"xatol": 1e-12 * max(rho, 1.0), "fatol": 0.0, "maxfev": 200 * len(start)})
    z = inside(res.x)
    return z, fun(z)


def detect_jumps(profile):
    """Indices ``k`` where the drop from ``k`` to ``k+1`` is a jump.

    A drop is a jump when it is relatively larger than ``JUMP_RTOL`` and its
    slope exceeds ``JUMP_SLOPE_RATIO`` times the slopes of the neighbouring
    cells.  Consecutive drops of equal slope are read as a smooth decrease.
    """
    g, v = profile.grid, profile.values
    drop = v[:-1] - v[1:]
    rel = np.where(v[:-1] > 0, drop / np.where(v[:-1] > 0, v[:-1], 1.0), 0.0)
    is_drop = rel > JUMP_RTOL
    slope = np.where(is_drop, drop / np.diff(g), 0.0)
    jumps = []
    for k in np.flatnonzero(is_drop):
        neigh = []
        if k > 0:
            neigh.append(slope[k - 1])
        if k + 1 < slope.size:
            neigh.append(slope[k + 1])
        if not neigh or slope[k] > JUMP_SLOPE_RATIO * max(neigh):
            jumps.append(int(k))
    return jumps


def lsc_envelope(mu):
    """Lower semicontinuous envelope: at a jump take the right-hand limit."""
    if mu.family is not None:
        return mu
    if np.any(np.diff(mu.values) > 0):
        raise ValueError("mu must be nonincreasing")
    m = mu.values.copy()
    for k in detect_jumps(mu):
        m[k] = mu.values[k + 1]
    return RadialProfile(mu.grid, m)


def _rho_closed(family, params, r):
    c = float(params["c"])
    if family == "constant":
        return c * r
    s = 1.0 if family == "c_over_1p_rho" else float(params["s"])
    if s == 1.0:
        return c * math.log1p(r)
    return c * ((1.0 + r) ** (1.0 - s) - 1.0) / (1.0 - s)


def _rho_sampled(m, r):
    g, v = m.grid, m.values
    if r < 0 or r > g[-1] * (1 + 1e-15):
        raise OutOfRange(f"r = {r} outside the sampled grid [0, {g[-1]}]")
    k = int(np.searchsorted(g, r, side="right")) - 1
    k = min(k, g.size - 2)
    cells = 0.5 * (v[:-1] + v[1:]) * np.diff(g)
    full = float(np.sum(cells[:k]))
    vr = v[k] + (v[k + 1] - v[k]) * (r - g[k]) / (g[k + 1] - g[k])
    return full + 0.5 * (v[k] + vr) * (r - g[k])


def rho_integral(m, r, lo=0.0):
    """``int_lo^r m``; closed form for analytic profiles, trapezoid otherwise.

    For sampled profiles ``info['error']`` is a curvature-based estimate of
    the trapezoid error.
    """
    r = float(r)
    lo = float(lo)
    if m.family is not None:
        return Bound(_rho_closed(m.family, m.params, r) - _rho_closed(m.family, m.params, lo), "exact")
    val = _rho_sampled(m, r) - _rho_sampled(m, lo)
    g, v = m.grid, m.values
    mask = (g[1:-1] >= lo) & (g[1:-1] <= r)
    if np.any(mask):
        h = np.diff(g)
        hm = 0.5 * (h[:-1] + h[1:])
        # |m''| from divided differences, times the h^3/12 cell error
        d2 = np.abs(np.diff(np.diff(v) / h)) / hm
        err = float(np.sum((d2 * hm ** 3)[mask]) / 12.0)
    else:
        err = 0.0
    return Bound(val, "quadrature", error=err)


def rho_table(m):
    """Cumulative trapezoid of ``m`` on its own grid."""
    if m.family is not None:
        return np.array([_rho_closed(m.family, m.params, r) for r in m.grid])
    cells = 0.5 * (m.values[:-1] + m.values[1:]) * np.diff(m.grid)
    return np.concatenate([[0.0], np.cumsum(cells)])


def hadamard_verdict(m):
    """Three-valued verdict on ``int_0^inf m = inf`` (plus ``fails``)."""
    if m.family is not None:
        c = float(m.params["c"])
        if c <= 0:
            return "fails"
        if m.family == "c_over_1p_rho_pow_s" and float(m.params["s"]) > 1.0:
            return "fails"
        return "divergent_certified"
    if np.any(m.values <= ZERO_RTOL * max(float(m.values[0]), 0.0)):
        return "fails"
    k0 = max(0, min(2 * m.grid.size // 3, m.grid.size - 2))
    slope = np.polyfit(np.log1p(m.grid[k0:]), np.log(m.values[k0:]), 1)[0]
    if slope >= -1.0 + 0.05:
        return "divergent_empirical"
    return "inconclusive"


@dataclass(frozen=True, eq=False)
class HadamardCertificate:
    m: RadialProfile
    rho: np.ndarray
    verdict: str
    m0: float
    mu: RadialProfile = None

    @property
    def divergent(self):
        return self.verdict.startswith("divergent")

    def to_json(self):
        out = {
            "grid": self.m.grid.tolist(),
            "mu": (self.mu if self.mu is not None else self.m).values.tolist(),
            "m": self.m.values.tolist(),
            "rho": self.rho.tolist(),
            "verdict": self.verdict,
            "m0": self.m0,
            "source": self.m.source,
        }
        if self.m.family is not None:
            out["family"] = self.m.family
            out["params"] = dict(self.m.params)
        return out


def certify(mu):
    """Envelope, surjection radius table and verdict for a mu (or m) profile."""
    m = lsc_envelope(mu)
    return HadamardCertificate(m, rho_table(m), hadamard_verdict(m), float(m.values[0]), mu)


def _rho_inverse_closed(family, params, gap):
    c = float(params["c"])
    if family == "constant":
        return gap / c
    s = 1.0 if family == "c_over_1p_rho" else float(params["s"])
    if s == 1.0:
        return math.expm1(gap / c)
    if s < 1.0:
        return (1.0 + gap * (1.0 - s) / c) ** (1.0 / (1.0 - s)) - 1.0
    if gap >= c / (s - 1.0):
        raise Unreachable("the surjection radius is bounded below this gap")
    return (1.0 - gap * (s - 1.0) / c) ** (-1.0 / (s - 1.0)) - 1.0


def a_priori_radius(cert, gap):
    """Smallest r with rho(r) >= gap: a solution of f(x) = y lies in B(0; r)."""
    if not cert.divergent:
        raise NotCertified(f"verdict {cert.verdict!r} does not grant surjectivity")
    gap = float(gap)
    if gap <= 0.0:
        return 0.0
    m = cert.m
    if m.family is not None:
        return _rho_inverse_closed(m.family, m.params, gap)
    k = int(np.searchsorted(cert.rho, gap, side="left"))
    if k >= cert.rho.size:
        raise Unreachable(f"rho(grid max) = {cert.rho[-1]:.6g} < gap {gap:.6g}")
    return float(m.grid[k])


class Weight:
    """Continuous nondecreasing ``h >= 0`` used to weight criticality."""

    def __init__(self, fn, label="custom", certified=False, m0=None):
        self._fn = fn
        self.label = label
        self.certified = certified
        self.m0 = m0

    def __call__(self, rho):
        return self._fn(rho)

    @classmethod
    def zero(cls):
        return cls(lambda rho: np.zeros_like(np.asarray(rho, dtype=float))[()], "zero", True)

    def __repr__(self):
        return f"Weight({self.label!r}, certified={self.certified})"


def weight_from_m(m, certified=None):
    """``h(rho) = m(0)/m(rho) - 1``.

    ``m * (1 + h) = m(0)`` is the identity that turns a lower bound on the
    regularity index into a lower bound on weighted criticality.
    """
    m0 = float(m(0.0))
    if m.family is not None:
        if float(m.params["c"]) <= 0:
            raise NotAWeight("m has a zero")
        if m.family == "constant":
            fn = lambda rho: np.zeros_like(np.asarray(rho, dtype=float))[()]
        elif m.family == "c_over_1p_rho":
            fn = lambda rho: np.asarray(rho, dtype=float)[()] * 1.0
        else:
            s = float(m.params["s"])
            fn = lambda rho: np.expm1(s * np.log1p(np.asarray(rho, dtype=float)))[()]
        ok = hadamard_verdict(m) == "divergent_certified"
        return Weight(fn, f"m0/m-1[{m.family}]", ok if certified is None else certified, m0)
    if np.any(m.values <= 0):
        raise NotAWeight("m has a zero")
    if detect_jumps(m):
        raise NotAWeight("m has jumps; the weight would be discontinuous")

    def fn(rho):
        return (m0 / m(rho) - 1.0)

    ok = hadamard_verdict(m).startswith("divergent")
    return Weight(fn, "m0/m-1[sampled]", ok if certified is None else certified, m0)


def inverse_lipschitz_bound(m, x_norm):
    """``1/m(|x|)``, the local Lipschitz bound of the inverse at f(x).

    Off-grid radii on sampled profiles use the smaller of the two adjacent
    grid values, so the bound errs on the large side.
    """
    v = m.floor_value(float(x_norm))
    if not v > 0:
        raise NotPositive(f"m({x_norm}) = {v} is not positive")
    return 1.0 / v
