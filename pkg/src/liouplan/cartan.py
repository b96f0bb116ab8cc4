"""Truncated jet coordinates and the total-derivative (Cartan) operator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DomainError, TruncationExceeded, UnknownCoordinate, ZeroAlpha
from .expr import (
    Binary, Constant, Expr, Variable, as_expr, compile_expr, is_constant,
    partial_derivative, prime_name, simplify, split_primes, variables,
)

DEFAULT_ORDER = 4
TIME = "t"


@dataclass(frozen=True)
class JetSpec:
    """Coordinates ``t, x_1..x_n, u_i, u_i', ..., u_i^(R)`` of the truncated jet space."""

    states: tuple[str, ...]
    inputs: tuple[str, ...]
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if self.order < 0:
            raise ValueError("truncation order must be nonnegative")
        names = list(self.states) + list(self.inputs)
        if len(set(names)) != len(names):
            raise ValueError("state and input names must be distinct")
        if TIME in names:
            raise ValueError("'t' is reserved for time")
        for name in names:
            base, primes = split_primes(name)
            if primes:
                raise ValueError(f"state/input names may not carry primes: {name!r}")

    def input_derivative(self, name: str, order: int) -> str:
        return prime_name(name, order)

    def input_coordinates(self) -> list[tuple[str, int]]:
        return [(u, nu) for u in self.inputs for nu in range(self.order + 1)]

    def coordinates(self) -> frozenset[str]:
        coords = {TIME, *self.states}
        coords.update(prime_name(u, nu) for u, nu in self.input_coordinates())
        return frozenset(coords)

    def check(self, e: Expr) -> None:
        extra = variables(e) - self.coordinates()
        if extra:
            raise UnknownCoordinate(extra)


@dataclass(frozen=True)
class CartanField:
    jet: JetSpec
    rhs: Mapping[str, Expr] = field(hash=False)

    def __post_init__(self):
        rhs = {k: as_expr(v) for k, v in self.rhs.items()}
        if set(rhs) != set(self.jet.states):
            raise ValueError("rhs keys must be exactly the states")
        for e in rhs.values():
            self.jet.check(e)
        object.__setattr__(self, "rhs", rhs)

    @classmethod
    def from_system(cls, system, order: int = DEFAULT_ORDER) -> "CartanField":
        return cls(JetSpec(system.states, system.inputs, order), system.rhs)


def total_derivative(cf: CartanField, e: Expr) -> Expr:
    """Time derivative of ``e`` along the system: the Cartan field applied to ``e``.

    ``d/dt e = de/dt + sum_j F_j de/dx_j + sum_{i,nu} u_i^(nu+1) de/du_i^(nu)``.
    """
    e = as_expr(e)
    jet = cf.jet
    jet.check(e)
    present = variables(e)
    terms: list[Expr] = []
    if TIME in present:
        terms.append(partial_derivative(e, TIME))
    for x in jet.states:
        if x in present:
            terms.append(cf.rhs[x] * partial_derivative(e, x))
    for u, nu in jet.input_coordinates():
        name = prime_name(u, nu)
        if name not in present:
            continue
        if nu == jet.order:
            raise TruncationExceeded(name, jet.order)
        terms.append(Variable(prime_name(u, nu + 1)) * partial_derivative(e, name))
    total: Expr = Constant(0.0)
    for term in terms:
        total = total + term
    return simplify(total)


def first_integral_residual(cf: CartanField, theta: Expr, n_samples: int,
                            box: Mapping[str, tuple[float, float]], seed: int) -> float:
    """Max of ``|d theta/dt|`` over uniform random points of ``box``.

    A nonzero value refutes ``theta`` as a first integral; zero certifies
    nothing ("not refuted after n samples").
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    theta = as_expr(theta)
    dtheta = total_derivative(cf, theta)
    needed = variables(theta) | variables(dtheta)
    missing = needed - set(box)
    if missing:
        raise ValueError("box does not bound: " + ", ".join(sorted(missing)))
    if is_constant(dtheta):
        return abs(dtheta.value)
    names = sorted(needed)
    lo = np.array([box[n][0] for n in names], dtype=float)
    hi = np.array([box[n][1] for n in names], dtype=float)
    rng = np.random.default_rng(seed)
    points = rng.uniform(lo, hi, size=(n_samples, len(names)))
    f = compile_expr(dtheta)
    worst = 0.0
    for row in points:
        env = dict(zip(names, row.tolist()))
        try:
            worst = max(worst, abs(f(env)))
        except DomainError as exc:
            raise exc.with_context(**env) from None
    return worst


def embed_integral_as_pv(cf: CartanField, alpha: Expr, names: tuple[str, str] = ("xi", "xi_rate")):
    """Write the quadrature ``xi' = alpha`` as a 2x2 linear system.

    ``xi' = zeta``, ``zeta' = (alpha'/alpha) zeta``; start ``zeta`` at ``alpha(t0)``.
    """
    from .structure import PVForm

    alpha = simplify(as_expr(alpha))
    if is_constant(alpha, 0.0):
        raise ZeroAlpha("alpha simplifies to the constant 0")
    rate = simplify(Binary("/", total_derivative(cf, alpha), alpha))
    zero, one = Constant(0.0), Constant(1.0)
    return PVForm(((zero, one), (zero, rate)), xi=tuple(names))
