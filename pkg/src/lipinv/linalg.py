"""
Norm tags, dual vectors, operator constants and the minimum-norm point.

All pairings between a space and its dual are the Euclidean dot product of
coordinate vectors, so the adjoint of a matrix is its transpose and the dual
of ``scale * ||.||_p`` is ``(1/scale) * ||.||_q``.
"""

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np

from . import _kernels
from .errors import NonConvergence, UnsupportedNorm, ZeroVector

SVD_RTOL = 1e-12


class Bound(float):
    """A float that remembers how it was obtained.

    ``kind`` is one of ``exact``, ``lower``, ``upper``, ``sampled``,
    ``quadrature``; extra keyword information is kept in ``info``.
    """

    def __new__(cls, value, kind="exact", **info):
        obj = super().__new__(cls, value)
        obj.kind = kind
        obj.info = info
        return obj

    @property
    def exact(self):
        return self.kind == "exact"

    def __repr__(self):
        return f"Bound({float(self)!r}, kind={self.kind!r})"

    def __reduce__(self):
        return (_rebuild_bound, (float(self), self.kind, self.info))


def _rebuild_bound(value, kind, info):
    return Bound(value, kind, **info)


@dataclass(frozen=True)
class NormTag:
    """One of ``l1``, ``l2``, ``linf`` or a scaled discrete ``lp`` norm."""

    kind: str = "l2"
    p: float = 2.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("l1", "l2", "linf", "lp"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "lp":
            if not (math.isfinite(self.p) and self.p > 1.0):
                raise ValueError("DiscreteLp needs a finite p > 1")
            if not (math.isfinite(self.scale) and self.scale > 0.0):
                raise ValueError("DiscreteLp scale must be positive")
        else:
            object.__setattr__(self, "p", {"l1": 1.0, "l2": 2.0, "linf": math.inf}[self.kind])
            object.__setattr__(self, "scale", 1.0)

    @classmethod
    def lp(cls, p, scale=1.0):
        return cls("lp", float(p), float(scale))

    @property
    def hilbertian(self):
        """True for norms that are a positive multiple of the Euclidean norm."""
        return self.p == 2.0

    @property
    def smooth(self):
        return 1.0 < self.p < math.inf

    def dual(self):
        if self.kind == "l1":
            return L_INF
        if self.kind == "linf":
            return L1
        if self.kind == "l2":
            return L2
        return NormTag.lp(self.p / (self.p - 1.0), 1.0 / self.scale)

    def norm(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "l1":
            return float(np.sum(np.abs(v)))
        if self.kind == "linf":
            return float(np.max(np.abs(v))) if v.size else 0.0
        if self.p == 2.0:
            return self.scale * float(np.linalg.norm(v))
        return self.scale * float(np.sum(np.abs(v) ** self.p) ** (1.0 / self.p))

    def equivalence(self, dim):
        """Factors ``(lo, hi)`` with ``lo*|v|_2 <= norm(v) <= hi*|v|_2`` on R^dim."""
        if self.p == math.inf:
            e = -0.5
        else:
            e = 1.0 / self.p - 0.5
        f = float(dim) ** e
        return self.scale * min(1.0, f), self.scale * max(1.0, f)

    def to_json(self):
        if self.kind == "lp":
            return {"lp": self.p, "scale": self.scale}
        return self.kind

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, NormTag):
            return obj
        if isinstance(obj, str):
            key = obj.lower()
            if key in ("l1", "l2", "linf"):
                return cls(key)
            raise ValueError(f"unknown norm tag {obj!r}")
        return cls.lp(obj["lp"], obj.get("scale", 1.0))


L1 = NormTag("l1")
L2 = NormTag("l2")
L_INF = NormTag("linf")


def dual_vector(v, tag=L2):
    """Unit dual functional attaining the norm of ``v``.

    For non-smooth norms the subdifferential is a set and a deterministic
    element is chosen: ``sign(v)`` for l1, and all mass on the first index of
    maximal modulus for linf.
    """
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ZeroVector("the norm subdifferential at 0 is the whole dual ball")
    if tag.kind == "l1":
        return np.sign(v)
    if tag.kind == "linf":
        i = int(np.argmax(np.abs(v)))
        out = np.zeros_like(v)
        out[i] = np.sign(v[i])
        return out
    if tag.p == 2.0:
        return tag.scale * v / np.linalg.norm(v)
    a = np.abs(v)
    # rescale first so the power does not overflow
    a = a / np.max(a)
    w = a ** (tag.p - 1.0) / np.sum(a ** tag.p) ** ((tag.p - 1.0) / tag.p)
    return tag.scale * np.sign(v) * w


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Dense matrix from (R^n, domain_norm) to (R^m, codomain_norm)."""

    matrix: np.ndarray
    domain_norm: NormTag = L2
    codomain_norm: NormTag = L2

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float, copy=True)
        if A.ndim == 0:
            A = A.reshape(1, 1)
        elif A.ndim == 1:
            A = A.reshape(1, -1)
        if A.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        if not np.all(np.isfinite(A)):
            raise ValueError("matrix entries must be finite")
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def hilbertian(self):
        return self.domain_norm.hilbertian and self.codomain_norm.hilbertian

    @cached_property
    def singular_values(self):
        """Singular values (descending), with tiny ones flushed to zero."""
        s = np.linalg.svd(self.matrix, compute_uv=False)
        if s.size and s[0] > 0:
            s = np.where(s < SVD_RTOL * s[0], 0.0, s)
        return s

    @cached_property
    def _is_tagged_identity(self):
        m, n = self.shape
        return m == n and self.domain_norm == self.codomain_norm and np.array_equal(self.matrix, np.eye(n))

    def apply(self, u):
        return self.matrix @ u

    def transpose_apply(self, v):
        return self.matrix.T @ v

    def with_matrix(self, matrix):
        return LinearMap(matrix, self.domain_norm, self.codomain_norm)

    def to_json(self):
        return {"matrix": self.matrix.tolist(), "domain_norm": self.domain_norm.to_json(),
                "codomain_norm": self.codomain_norm.to_json()}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, dict):
            return cls(np.asarray(obj["matrix"], dtype=float),
                       NormTag.from_json(obj.get("domain_norm", "l2")),
                       NormTag.from_json(obj.get("codomain_norm", "l2")))
        return cls(np.asarray(obj, dtype=float))


def _sigma(T, which):
    m, n = T.shape
    s = T.singular_values
    if which == "max":
        return float(s[0]) if s.size else 0.0
    k = m if which == "row" else n
    if k > min(m, n):
        return 0.0
    return float(s[k - 1])


def banach_constant(T):
    """C(T) = inf over unit dual v* of |T^T v*| in the domain dual norm.

    Exact for Hilbertian tags; a certified lower bound otherwise.
    """
    if T._is_tagged_identity:
        return Bound(1.0, "exact")
    m, n = T.shape
    sig = _sigma(T, "row")
    X, Y = T.domain_norm, T.codomain_norm
    if T.hilbertian:
        return Bound(Y.scale / X.scale * sig, "exact")
    lo_xd, _ = X.dual().equivalence(n)
    _, hi_yd = Y.dual().equivalence(m)
    return Bound(lo_xd / hi_yd * sig, "lower")


def dual_banach_constant(T):
    """C*(T) = inf over unit u of |T u|; positive iff T is injective."""
    if T._is_tagged_identity:
        return Bound(1.0, "exact")
    m, n = T.shape
    sig = _sigma(T, "col")
    X, Y = T.domain_norm, T.codomain_norm
    if T.hilbertian:
        return Bound(Y.scale / X.scale * sig, "exact")
    _, hi_x = X.equivalence(n)
    lo_y, _ = Y.equivalence(m)
    return Bound(lo_y / hi_x * sig, "lower")


def operator_norm(T):
    """Induced operator norm; exact for Hilbertian tags, an upper bound otherwise."""
    if T._is_tagged_identity:
        return Bound(1.0, "exact")
    m, n = T.shape
    sig = _sigma(T, "max")
    X, Y = T.domain_norm, T.codomain_norm
    if T.hilbertian:
        return Bound(Y.scale / X.scale * sig, "exact")
    lo_x, _ = X.equivalence(n)
    _, hi_y = Y.equivalence(m)
    return Bound(hi_y / lo_x * sig, "upper")


def min_norm_point(points, tag=L2, max_iter=1000, cert_tol=1e-9):
    """Point of minimum norm in the convex hull of ``points`` (Wolfe's method).

    Returns ``(w, norm_of_w)``.  Only Hilbertian tags are accepted; a scaled
    Euclidean norm has the same minimiser and the norm is rescaled.
    """
    if not tag.hilbertian:
        raise UnsupportedNorm("min_norm_point needs a Hilbertian norm tag")
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] == 0:
        raise ValueError("need at least one point")
    if not np.all(np.isfinite(P)):
        raise ValueError("points must be finite")
    if P.shape[0] == 1:
        w = P[0].copy()
        return w, tag.scale * float(np.linalg.norm(w))
    weights, _, _ = _kernels.wolfe_mnp(np.ascontiguousarray(P), max_iter, 1e-15)
    w = weights @ P
    ww = float(w @ w)
    if np.min(P @ w) < ww - cert_tol:
        raise NonConvergence(
            f"optimality certificate failed: min <w,p> = {np.min(P @ w):.3e} < |w|^2 = {ww:.3e}")
    return w, tag.scale * math.sqrt(ww)
