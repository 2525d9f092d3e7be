"""Random trees and chart points shared by the test modules."""

import math

import numpy as np
from hypothesis import strategies as st

from ellcalc import expr as ex
from ellcalc.expr import A, PHI, RHO, THETA

LEAVES = (RHO, PHI, THETA, A)


def random_tree(rng: np.random.Generator, depth: int = 6) -> ex.Expr:
    """Random smooth tree; denominators and ln arguments are kept >= 1."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.25:
            return ex.const(float(np.round(rng.uniform(-3, 3), 3)))
        return LEAVES[rng.integers(len(LEAVES))]
    sub = lambda: random_tree(rng, depth - 1)
    op = rng.integers(9)
    if op == 0:
        return ex.add(sub(), sub())
    if op == 1:
        return ex.mul(sub(), sub())
    if op == 2:
        return ex.neg(sub())
    if op == 3:
        return ex.sin(sub())
    if op == 4:
        return ex.cos(sub())
    if op == 5:
        return ex.exp(ex.sin(sub()))
    if op == 6:
        return ex.div(sub(), ex.add(2, ex.sin(sub())))
    if op == 7:
        return ex.power(ex.add(2, ex.cos(sub())), int(rng.integers(-3, 4)))
    return ex.ln(ex.add(2, ex.cos(sub())))


def random_points(rng: np.random.Generator, n: int):
    """n interior chart points and ellipsoid parameters, as arrays."""
    rho = rng.uniform(0.8, 1.2, n)
    phi = rng.uniform(0.2, math.pi - 0.2, n)
    theta = rng.uniform(-math.pi + 0.1, math.pi - 0.1, n)
    a = rng.uniform(0.5, 3.0, n)
    return rho, phi, theta, a


_leaf = st.one_of(
    st.sampled_from(LEAVES),
    st.floats(-5, 5, allow_nan=False, allow_infinity=False).map(ex.const),
)


def _extend(children):
    pair = st.tuples(children, children)
    return st.one_of(
        pair.map(lambda t: ex.add(*t)),
        pair.map(lambda t: ex.sub(*t)),
        pair.map(lambda t: ex.mul(*t)),
        pair.map(lambda t: ex.div(t[0], ex.add(2, ex.sin(t[1])))),
        children.map(ex.neg),
        children.map(ex.sin),
        children.map(ex.cos),
        children.map(lambda c: ex.exp(ex.sin(c))),
        children.map(lambda c: ex.ln(ex.add(2, ex.cos(c)))),
        st.tuples(children, st.integers(-3, 3)).map(lambda t: ex.power(ex.add(2, ex.cos(t[0])), t[1])),
    )


exprs = st.recursive(_leaf, _extend, max_leaves=10)


def rel_close(x, y, rtol):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return np.all(np.abs(x - y) <= rtol * np.maximum(1.0, np.maximum(np.abs(x), np.abs(y))))
