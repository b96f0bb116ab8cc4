"""Flat-output trajectories and the map from the flat-output jet to (eta, u)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ConfigError, SingularFit
from .expr import (
    Constant, Expr, Variable, as_expr, partial_derivative, prime_name,
    simplify, split_primes, variables,
)
from .table import TIME, TrajectoryTable, evaluate_on_table

__all__ = [
    "PolyTrajectory", "FlatnessMap", "TrajectoryTable",
    "fit_polynomial_boundary", "fit_piecewise", "eval_jet", "flat_jet",
    "flat_time_derivative", "synthesize_base",
]

COND_LIMIT = 1e12
FIT_RESIDUAL = 1e-10


@dataclass(frozen=True)
class PolyTrajectory:
    """Piecewise polynomial on breakpoints ``t_0 < ... < t_K``.

    Segment ``k`` stores ascending coefficients in the normalised time
    ``s = (t - t_k) / (t_{k+1} - t_k)``.  ``smoothness`` is the declared
    continuity order at interior breakpoints (``None`` for a single segment,
    which is smooth to every order).
    """

    breakpoints: tuple[float, ...]
    coeffs: tuple[tuple[float, ...], ...]
    smoothness: int | None = None

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        if len(bp) < 2 or any(b >= c for b, c in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if len(self.coeffs) != len(bp) - 1:
            raise ValueError("one coefficient vector per segment is required")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "coeffs", tuple(tuple(float(c) for c in seg) for seg in self.coeffs))

    @property
    def t0(self) -> float:
        return self.breakpoints[0]

    @property
    def tf(self) -> float:
        return self.breakpoints[-1]

    @property
    def degree(self) -> int:
        return max(len(c) for c in self.coeffs) - 1

    def _segment(self, t: float) -> int:
        span = self.tf - self.t0
        slack = 1e-12 * max(1.0, abs(self.t0), abs(self.tf), span)
        if t < self.t0 - slack or t > self.tf + slack:
            raise ValueError(f"t = {t!r} outside the horizon [{self.t0}, {self.tf}]")
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return min(max(k, 0), len(self.coeffs) - 1)

    def derivatives(self, t: float, max_order: int) -> list[float]:
        """``[y(t), y'(t), ..., y^(max_order)(t)]`` by Horner on derived coefficients."""
        if max_order < 0:
            raise ValueError("max_order must be nonnegative")
        if self.smoothness is not None and max_order > self.smoothness:
            raise ValueError(f"derivative order {max_order} exceeds declared smoothness "
                             f"{self.smoothness}")
        k = self._segment(t)
        a, b = self.breakpoints[k], self.breakpoints[k + 1]
        span = b - a
        s = (t - a) / span
        c = np.array(self.coeffs[k])
        out = []
        for order in range(max_order + 1):
            out.append(float(P.polyval(s, c)) / span ** order if c.size else 0.0)
            c = P.polyder(c) if c.size > 1 else np.zeros(0)
        return out

    def __call__(self, t: float) -> float:
        return self.derivatives(t, 0)[0]


def _boundary_rows(conds, s, span, n_coef):
    rows, rhs = [], []
    for order, value in conds:
        row = np.zeros(n_coef)
        for p in range(order, n_coef):
            # d^order/dt^order of s^p, with s = (t - t0)/span
            fall = np.prod(np.arange(p - order + 1, p + 1, dtype=float))
            row[p] = fall * s ** (p - order) / span ** order
        rows.append(row)
        rhs.append(float(value))
    return rows, rhs


def fit_polynomial_boundary(bc0: Sequence[tuple[int, float]], bcf: Sequence[tuple[int, float]],
                            t0: float, tf: float) -> PolyTrajectory:
    """Minimal-degree polynomial meeting derivative constraints at both ends.

    ``bc0`` and ``bcf`` are lists of ``(order, value)``.  The degree is the
    total number of constraints minus one.
    """
    if not tf > t0:
        raise ValueError("require t0 < tf")
    for conds in (bc0, bcf):
        orders = [int(o) for o, _ in conds]
        if len(set(orders)) != len(orders):
            raise ValueError("derivative orders must be distinct at each endpoint")
        if any(o < 0 for o in orders):
            raise ValueError("derivative orders must be nonnegative")
    n_coef = len(bc0) + len(bcf)
    if n_coef == 0:
        raise ValueError("at least one boundary constraint is required")
    span = float(tf) - float(t0)
    r0, v0 = _boundary_rows([(int(o), v) for o, v in bc0], 0.0, span, n_coef)
    r1, v1 = _boundary_rows([(int(o), v) for o, v in bcf], 1.0, span, n_coef)
    M = np.array(r0 + r1)
    b = np.array(v0 + v1)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularFit(f"boundary system is singular (condition estimate {cond:.3g})")
    c = np.linalg.solve(M, b)
    residual = np.max(np.abs(M @ c - b))
    if residual > FIT_RESIDUAL * max(1.0, np.max(np.abs(b))):
        raise SingularFit(f"boundary fit residual {residual:.3g} too large")
    return PolyTrajectory((t0, tf), (tuple(c),))


def fit_piecewise(knots: Sequence[tuple[float, Sequence[tuple[int, float]]]]) -> PolyTrajectory:
    """Fit each segment between consecutive knots independently.

    Every knot lists the same derivative orders ``0..r``; sharing the knot
    values between neighbouring segments makes the result ``C^r``.
    """
    if len(knots) < 2:
        raise ValueError("at least two knots are required")
    order_sets = [sorted(int(o) for o, _ in conds) for _, conds in knots]
    r = min(len(s) for s in order_sets) - 1
    for s in order_sets[1:-1]:
        if s != list(range(len(s))):
            raise ValueError("interior knots must constrain orders 0..r contiguously")
    coeffs = []
    for (ta, ca), (tb, cb) in zip(knots, knots[1:]):
        seg = fit_polynomial_boundary(ca, cb, ta, tb)
        coeffs.append(seg.coeffs[0])
    return PolyTrajectory(tuple(t for t, _ in knots), tuple(coeffs),
                          smoothness=r if len(knots) > 2 else None)


def eval_jet(traj: PolyTrajectory, t: float, max_order: int, name: str = "y") -> dict[str, float]:
    """Binding ``{y: .., y': .., ...}`` of the flat-output jet at time ``t``."""
    values = traj.derivatives(t, max_order)
    return {prime_name(name, k): v for k, v in enumerate(values)}


def flat_jet(outputs: Mapping[str, PolyTrajectory], t: float, max_order: int | Mapping[str, int]):
    env = {TIME: float(t)}
    for name, traj in outputs.items():
        order = max_order[name] if isinstance(max_order, Mapping) else max_order
        env.update(eval_jet(traj, t, order, name))
    return env


@dataclass(frozen=True)
class FlatnessMap:
    """Expressions for flat-subsystem states and inputs in terms of ``t`` and the flat-output jet."""

    outputs: tuple[str, ...]
    exprs: Mapping[str, Expr] = field(hash=False)

    def __post_init__(self):
        object.__setattr__(self, "outputs", tuple(self.outputs))
        exprs = {k: simplify(as_expr(v)) for k, v in self.exprs.items()}
        for name, e in exprs.items():
            for v in variables(e) - {TIME}:
                base, _ = split_primes(v)
                if base not in self.outputs:
                    raise ConfigError(
                        f"flatness map entry {name!r} uses {v!r}, not a flat-output derivative")
        object.__setattr__(self, "exprs", exprs)

    def orders(self) -> dict[str, int]:
        """Highest derivative order of each flat output used by the map."""
        orders = {y: 0 for y in self.outputs}
        for e in self.exprs.values():
            for v in variables(e) - {TIME}:
                base, k = split_primes(v)
                orders[base] = max(orders[base], k)
        return orders

    def require(self, names) -> None:
        missing = [n for n in names if n not in self.exprs]
        if missing:
            raise ConfigError("flatness map does not cover: " + ", ".join(missing))


def flat_time_derivative(e: Expr, outputs: Sequence[str], max_order: int = 32) -> Expr:
    """``d/dt`` of an expression in ``t`` and the flat-output jet."""
    e = as_expr(e)
    total: Expr = Constant(0.0)
    for v in variables(e):
        if v == TIME:
            total = total + partial_derivative(e, v)
            continue
        base, k = split_primes(v)
        if base not in outputs:
            raise ConfigError(f"{v!r} is not a flat-output coordinate")
        if k >= max_order:
            raise ValueError("derivative order limit reached")
        total = total + Variable(prime_name(base, k + 1)) * partial_derivative(e, v)
    return simplify(total)


def synthesize_base(fmap: FlatnessMap, outputs: Mapping[str, PolyTrajectory],
                    grid: tuple[float, float, int], *,
                    derived: Mapping[str, Expr] | None = None) -> TrajectoryTable:
    """Sample the flatness map on the grid and its midpoints.

    The table carries every mapped column, the flat-output jet columns up to
    the orders the map uses, and any ``derived`` columns (e.g. input
    derivatives obtained with :func:`flat_time_derivative`).
    """
    if not fmap.exprs:
        raise ConfigError("flatness map has no columns")
    if isinstance(outputs, PolyTrajectory):
        outputs = {fmap.outputs[0]: outputs}
    missing = set(fmap.outputs) - set(outputs)
    if missing:
        raise ConfigError("no trajectory for flat output(s): " + ", ".join(sorted(missing)))
    exprs = {**fmap.exprs, **(derived or {})}
    orders = {y: 0 for y in fmap.outputs}
    for e in exprs.values():
        for v in variables(e) - {TIME}:
            base, k = split_primes(v)
            orders[base] = max(orders[base], k)
    for y, k in orders.items():
        sm = outputs[y].smoothness
        if sm is not None and k > sm:
            raise ConfigError(f"flat output {y!r} is only C^{sm} but order {k} is required")

    t0, tf, n = grid
    table = TrajectoryTable.grid(t0, tf, int(n))
    jet_cols: dict[str, list[float]] = {}
    jet_mids: dict[str, list[float]] = {}
    for times, dest in ((table.t, jet_cols), (table.t_mid, jet_mids)):
        for t in times.tolist():
            for y, traj in outputs.items():
                if y not in orders:
                    continue
                for k, v in enumerate(traj.derivatives(t, orders[y])):
                    dest.setdefault(prime_name(y, k), []).append(v)
    table = table.with_columns(jet_cols, jet_mids)
    cols, mids = {}, {}
    for name, e in exprs.items():
        cols[name], mids[name] = evaluate_on_table(e, table, label=name)
    return table.with_columns(cols, mids)
