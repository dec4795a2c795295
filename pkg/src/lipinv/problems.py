"""Small shipped maps with hand-checkable behaviour."""

import numpy as np

from .linalg import L2, LinearMap
from .pseudo_jacobian import BallForm, PointMap, Singleton, linear_map


def _scalar(f, df, name, chain_rule="strong"):
    def fv(x):
        return np.array([f(float(x[0]))])

    def jf(x):
        return Singleton(LinearMap([[df(float(x[0]))]]))
    return PointMap(fv, jf, L2, L2, chain_rule=chain_rule, name=name, dim=1)


def arctan_map():
    """``arctan`` on R: a diffeomorphism onto (-pi/2, pi/2), not surjective."""
    return _scalar(np.arctan, lambda x: 1.0 / (1.0 + x * x), "arctan")


def square_map():
    return _scalar(lambda x: x * x, lambda x: 2.0 * x, "square")


def cubic_map():
    """``x^3 - x``: three preimages of 0, regularity lost at +-1/sqrt(3)."""
    return _scalar(lambda x: x ** 3 - x, lambda x: 3.0 * x * x - 1.0, "cube")


def abs_map(wrong=False):
    """``|x|`` with the ball ``B(0, 1)`` or, if ``wrong``, the invalid singleton ``{0}``."""
    zero = LinearMap([[0.0]])
    pj = Singleton(zero) if wrong else BallForm(zero, 1.0)
    return PointMap(lambda x: np.abs(np.asarray(x, dtype=float)), lambda _x: pj, L2, L2,
                    chain_rule="plain", name="abs_wrong" if wrong else "abs", dim=1)


def shifted_map(kind, coef, dim):
    """``x + coef * s(x)`` componentwise with ``s`` = sin or abs; pseudo-Jacobian ``B(I, |coef|)``."""
    s = {"sin": np.sin, "abs": np.abs}[kind]
    pj = BallForm(LinearMap(np.eye(dim)), abs(float(coef)))
    return PointMap(lambda x: x + coef * s(x), lambda _x: pj, L2, L2, chain_rule="strong",
                    name=f"{kind}_shift", dim=dim)


BUILTINS = {
    "arctan": lambda **kw: arctan_map(),
    "square": lambda **kw: square_map(),
    "cube": lambda **kw: cubic_map(),
    "abs": lambda **kw: abs_map(False),
    "abs_wrong": lambda **kw: abs_map(True),
    "sin_shift": lambda coef=0.5, dim=3, **kw: shifted_map("sin", coef, dim),
    "abs_shift_2d": lambda coef=0.4, **kw: shifted_map("abs", coef, 2),
}


def builtin(name, **params):
    if name not in BUILTINS:
        raise ValueError(f"unknown builtin map {name!r}; choose from {sorted(BUILTINS)}")
    return BUILTINS[name](**params)


__all__ = ["BUILTINS", "abs_map", "arctan_map", "builtin", "cubic_map", "linear_map",
           "shifted_map", "square_map"]
