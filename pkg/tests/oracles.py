"""Independent reference computations and generators shared by the tests.

Nothing here calls the quadrature engine; the references are closed forms,
direct RK4 of the full system, or brute-force numerics.
"""

import math
import random

import numpy as np

from liouplan.expr import Binary, Constant, Unary, Variable
from liouplan.structure import Partition, SystemModel

FUNCS = ["sin", "cos", "tan", "atan", "asin", "acos", "exp", "ln", "sqrt", "abs", "tanh"]
NAMES = ["x", "y", "x1", "x_2", "u", "y'", "y''", "t", "eta1"]


def random_tree(rng: random.Random, depth: int = 4):
    """Random expression tree in the shapes the parser can produce."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.5:
            choice = rng.random()
            if choice < 0.4:
                return Constant(rng.randint(-20, 20))
            if choice < 0.8:
                return Constant(round(rng.uniform(-100, 100), rng.randint(0, 6)))
            return Constant(rng.choice([1e-5, 2.5e-12, 3.25e17, -7e20, 0.1]))
        return Variable(rng.choice(NAMES))
    kind = rng.random()
    if kind < 0.15:
        return Unary("neg", random_tree(rng, depth - 1))
    if kind < 0.35:
        return Unary(rng.choice(FUNCS), random_tree(rng, depth - 1))
    if kind < 0.45:
        return Binary("^", random_tree(rng, depth - 1), Constant(rng.randint(-3, 4)))
    return Binary(rng.choice("+-*/"), random_tree(rng, depth - 1), random_tree(rng, depth - 1))


def double_integrator_pv(A_rows, name="pv"):
    """System ``eta1' = eta2, eta2' = u`` plus ``xi' = A xi`` with A given as strings."""
    d = len(A_rows)
    xi = [f"xi{i + 1}" for i in range(d)]
    rhs = {"eta1": "eta2", "eta2": "u"}
    for i, row in enumerate(A_rows):
        terms = [f"({a})*{x}" for a, x in zip(row, xi) if a.strip() != "0"]
        rhs[xi[i]] = " + ".join(terms) if terms else "0"
    system = SystemModel(name, ["eta1", "eta2", *xi], ["u"], rhs)
    return system, Partition(("eta1", "eta2"), tuple(xi))


ENTRY_POOL = [
    "{c}", "{c}*sin(t)", "{c}*cos(2*t)", "{c}*eta1", "{c}*eta2", "{c}*u",
    "{c}*eta1^2", "{c} + {c2}*t", "{c}*eta1*eta2", "{c}*sin(eta1)",
]


def random_entry(rng: random.Random):
    c = round(rng.uniform(-1.5, 1.5), 3)
    c2 = round(rng.uniform(-1.0, 1.0), 3)
    return rng.choice(ENTRY_POOL).format(c=c, c2=c2)


def random_triangular(rng: random.Random, d: int, unit: bool):
    rows = []
    for i in range(d):
        row = []
        for j in range(d):
            if j > i:
                row.append("0")
            elif j == i:
                if unit:
                    row.append("1")
                else:
                    # nonconstant diagonal
                    c = round(rng.uniform(-1.0, 1.0), 3)
                    row.append(rng.choice([f"{c} + 0.5*sin(t)", f"{c}*cos(t) + 0.3*eta1",
                                           f"{c} + 0.4*eta2", f"{c}*u + 0.2"]))
            else:
                row.append(random_entry(rng))
        rows.append(row)
    return rows


def random_flat_boundary(rng: random.Random):
    """Random quintic boundary data for a single flat output on [0, 1]."""
    bc0 = [(0, rng.uniform(-1, 1)), (1, rng.uniform(-1, 1)), (2, rng.uniform(-1, 1))]
    bcf = [(0, rng.uniform(-1, 1)), (1, rng.uniform(-1, 1)), (2, rng.uniform(-1, 1))]
    return bc0, bcf


def rk4_reference(f, x0, t0, tf, steps):
    """Plain RK4 for ``x' = f(t, x)`` returning the state at every step."""
    h = (tf - t0) / steps
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    t = t0
    for k in range(steps):
        t = t0 + k * h
        k1 = f(t, x)
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(x.copy())
    return np.array(out)


def empirical_order(hs, errs):
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def quintic_closed_form(t):
    return 10 * t ** 3 - 15 * t ** 4 + 6 * t ** 5


def exp_sin_integral(a, b):
    """High-accuracy reference for the integral of exp(sin t)."""
    from scipy.integrate import quad
    val, _ = quad(lambda s: math.exp(math.sin(s)), a, b, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val

