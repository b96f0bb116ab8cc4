"""Rolling-body kinematics in geodesic coordinates and the plate-ball special case."""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .errors import ZeroSurfaceFactor
from .expr import Expr, Unary, Variable, as_expr, partial_derivative, simplify, variables
from .structure import SystemModel, is_zero

ROLLING_STATES = ("v1", "w1", "v2", "w2", "psi")
RATIONAL_STATES = ("v1", "w1", "xi", "w2", "sigma")
ROLLING_INPUTS = ("u1", "u2")

PLATEBALL_NOTE = (
    "plate-ball dynamics use 1/cos(v2) in the w2 equation, as implied by C = cos(v2) in the "
    "general geodesic-coordinate form; the variant with 1/cos(v1) is not used")

v1, w1, v2, w2, psi = (Variable(n) for n in ROLLING_STATES)
u1, u2 = Variable("u1"), Variable("u2")


def _sin(e):
    return Unary("sin", e)


def _cos(e):
    return Unary("cos", e)


def builtin_rolling(B: Expr | str, C: Expr | str, name: str = "rolling") -> SystemModel:
    """Contact kinematics of two surfaces with metric factors ``B(v1, w1)`` and ``C(v2, w2)``."""
    B, C = simplify(as_expr(B)), simplify(as_expr(C))
    if not variables(B) <= {"v1", "w1"}:
        raise ValueError("B may depend on v1 and w1 only")
    if not variables(C) <= {"v2", "w2"}:
        raise ValueError("C may depend on v2 and w2 only")
    for label, f in (("B", B), ("C", C)):
        if is_zero(f):
            raise ZeroSurfaceFactor(f"surface factor {label} is identically zero")
    B_v1 = partial_derivative(B, "v1")
    C_v2 = partial_derivative(C, "v2")
    rolling = u1 * _sin(psi) + u2 * _cos(psi)
    rhs = {
        "v1": u1,
        "w1": u2 / B,
        "v2": u1 * _cos(psi) - u2 * _sin(psi),
        "w2": -(rolling / C),
        "psi": (B_v1 / B) * u2 - (C_v2 / C) * rolling,
    }
    return SystemModel(name, ROLLING_STATES, ROLLING_INPUTS, {k: simplify(e) for k, e in rhs.items()})


def builtin_plateball() -> SystemModel:
    """Hand-written plate-ball equations (B = 1, C = cos v2)."""
    rolling = u1 * _sin(psi) + u2 * _cos(psi)
    rhs = {
        "v1": u1,
        "w1": u2,
        "v2": u1 * _cos(psi) - u2 * _sin(psi),
        "w2": -(rolling / _cos(v2)),
        "psi": Unary("tan", v2) * rolling,
    }
    return SystemModel("plateball", ROLLING_STATES, ROLLING_INPUTS, rhs)


def builtin_plateball_rational() -> SystemModel:
    """Plate-ball in ``xi = tan(v2/2)``, ``sigma = tan(psi/2)``: a rational vector field."""
    rhs = {
        "v1": "u1",
        "w1": "u2",
        "xi": "(1 + xi^2)/(2*(1 + sigma^2))*((1 - sigma^2)*u1 - 2*sigma*u2)",
        "w2": "-((1 + xi^2)/((1 - xi^2)*(1 + sigma^2)))*(2*sigma*u1 + (1 - sigma^2)*u2)",
        "sigma": "xi/(1 - xi^2)*(2*sigma*u1 + (1 - sigma^2)*u2)",
    }
    return SystemModel("plateball_rational", RATIONAL_STATES, ROLLING_INPUTS, rhs)


def liouvillian_outputs_plateball(row: Mapping[str, float]) -> tuple[float, float, float, float]:
    """``(x, y, x~, y~)`` for one state row.

    ``x = v1 - v2 cos(psi)``, ``y = w1 + w2 sin(psi)`` and their rational
    counterparts in ``sigma, xi``.  A row may give either the angles
    ``(v2, psi)`` or the half-angle tangents ``(xi, sigma)``; the missing
    pair is derived.
    """
    v1_, w1_, w2_ = row["v1"], row["w1"], row["w2"]
    if "v2" in row and "psi" in row:
        v2_, psi_ = row["v2"], row["psi"]
    else:
        v2_, psi_ = 2 * math.atan(row["xi"]), 2 * math.atan(row["sigma"])
    if "xi" in row and "sigma" in row:
        xi_, sigma_ = row["xi"], row["sigma"]
    else:
        xi_, sigma_ = math.tan(v2_ / 2), math.tan(psi_ / 2)
    x = v1_ - v2_ * math.cos(psi_)
    y = w1_ + w2_ * math.sin(psi_)
    s2 = sigma_ * sigma_
    x_t = v1_ - (1 - s2) / (1 + s2) * 2 * math.atan(xi_)
    y_t = w1_ + 2 * sigma_ / (1 + s2) * w2_
    return x, y, x_t, y_t


def outputs_from_angles(v1_, w1_, v2_, w2_, psi_):
    v1_, w1_, v2_, w2_, psi_ = map(np.asarray, (v1_, w1_, v2_, w2_, psi_))
    return v1_ - v2_ * np.cos(psi_), w1_ + w2_ * np.sin(psi_)


def outputs_from_tangents(v1_, w1_, xi_, w2_, sigma_):
    v1_, w1_, xi_, w2_, sigma_ = map(np.asarray, (v1_, w1_, xi_, w2_, sigma_))
    s2 = sigma_ ** 2
    return (v1_ - (1 - s2) / (1 + s2) * 2 * np.arctan(xi_),
            w1_ + 2 * sigma_ / (1 + s2) * w2_)
