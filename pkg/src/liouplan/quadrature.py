"""Reconstruction of the extension states by quadratures.

All integrals are per-interval Simpson sums using the midpoint samples the
tables carry.  Midpoint values of a reconstructed state come from
integrating the interval's interpolating parabola up to the midpoint, so
later quadratures that depend on that state keep fourth-order accuracy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ClassificationMismatch, DomainError, ExpOverflow, LiouplanError, NonFiniteSample,
    ReconstructionError,
)
from .expr import Expr, as_expr
from .structure import Classification, ExtensionChain, PVForm, StepKind, classify_matrix
from .table import TrajectoryTable, evaluate_on_table

EXP_GUARD = 700.0


@dataclass(frozen=True)
class CumulativeIntegral:
    """``grid[k] ~ int_{t0}^{t_k} f`` and ``mid[k] ~ int_{t0}^{t_k + h/2} f``."""

    grid: np.ndarray
    mid: np.ndarray


def cumulative_integral(f_grid: Sequence[float], f_mid: Sequence[float], h: float) -> CumulativeIntegral:
    """Running integral by per-interval Simpson: ``G_{k+1} = G_k + h/6 (f_k + 4 f_{k+1/2} + f_{k+1})``."""
    fg = np.asarray(f_grid, dtype=float)
    fm = np.asarray(f_mid, dtype=float)
    if fg.ndim != 1 or fm.shape != (fg.size - 1,):
        raise ValueError("need n+1 grid samples and n midpoint samples")
    bad = np.flatnonzero(~np.isfinite(fg))
    if bad.size:
        raise NonFiniteSample(int(bad[0]), "grid")
    bad = np.flatnonzero(~np.isfinite(fm))
    if bad.size:
        raise NonFiniteSample(int(bad[0]), "midpoint")
    left, right = fg[:-1], fg[1:]
    increments = (h / 6.0) * (left + 4.0 * fm + right)
    grid = np.concatenate(([0.0], np.cumsum(increments)))
    # parabola through (f_k, f_mid, f_{k+1}) integrated over the first half step
    half = (h / 24.0) * (5.0 * left + 8.0 * fm - right)
    mid = grid[:-1] + half
    return CumulativeIntegral(grid, mid)


def _alpha_samples(alpha: Expr, base: TrajectoryTable, extra, var: str):
    try:
        return evaluate_on_table(as_expr(alpha), base, label=var, extra=extra)
    except DomainError as exc:
        raise ReconstructionError(var, exc) from exc


def _guarded_exp(values: np.ndarray, var: str) -> np.ndarray:
    over = np.flatnonzero(np.abs(values) > EXP_GUARD)
    if over.size:
        k = int(over[0])
        raise ExpOverflow(var, k, float(values[k]))
    return np.exp(values)


def integral_extension(alpha: Expr, base: TrajectoryTable, xi0: float, *,
                       var: str = "xi", extra=None) -> tuple[np.ndarray, np.ndarray]:
    """``xi(t) = xi0 + int_{t0}^t alpha``; returns (grid, midpoint) samples."""
    g, m = _alpha_samples(alpha, base, extra, var)
    G = cumulative_integral(g, m, base.h)
    return xi0 + G.grid, xi0 + G.mid


def exponential_extension(alpha: Expr, base: TrajectoryTable, xi0: float, *,
                          var: str = "xi", extra=None) -> tuple[np.ndarray, np.ndarray]:
    """``xi(t) = xi0 * exp(int_{t0}^t alpha)``; returns (grid, midpoint) samples."""
    g, m = _alpha_samples(alpha, base, extra, var)
    G = cumulative_integral(g, m, base.h)
    return xi0 * _guarded_exp(G.grid, var), xi0 * _guarded_exp(G.mid, var)


def _initial_values(names: Sequence[str], xi0) -> list[float]:
    if isinstance(xi0, Mapping):
        missing = [n for n in names if n not in xi0]
        if missing:
            raise ValueError("missing initial value for: " + ", ".join(missing))
        return [float(xi0[n]) for n in names]
    values = [float(v) for v in xi0]
    if len(values) != len(names):
        raise ValueError(f"expected {len(names)} initial values, got {len(values)}")
    return values


def reconstruct_chain(chain: ExtensionChain, base: TrajectoryTable, xi0) -> TrajectoryTable:
    """Apply the chain's steps in order, appending one column (and midpoints) per step."""
    if not chain.is_prefix_closed():
        raise ValueError("extension chain is not prefix-closed")
    values = _initial_values(chain.vars, xi0)
    table = base
    for step, x0 in zip(chain, values):
        try:
            if step.kind is StepKind.INTEGRAL:
                g, m = integral_extension(step.alpha, table, x0, var=step.var)
            else:
                g, m = exponential_extension(step.alpha, table, x0, var=step.var)
        except ReconstructionError:
            raise
        except LiouplanError as exc:
            raise ReconstructionError(step.var, exc) from exc
        table = table.with_columns({step.var: g}, {step.var: m})
    return table


class PlanMode(str, enum.Enum):
    CHAIN = "Chain"
    PV_THM1 = "PVThm1"
    PV_THM2 = "PVThm2"


_REQUIRED = {
    PlanMode.PV_THM1: (Classification.UNIT_LOWER_TRIANGULAR,),
    PlanMode.PV_THM2: (Classification.UNIT_LOWER_TRIANGULAR, Classification.LOWER_TRIANGULAR),
}


@dataclass(frozen=True)
class ReconstructionPlan:
    """What to reconstruct and from which initial values.

    ``form`` is an :class:`ExtensionChain` for ``PlanMode.CHAIN`` and a
    :class:`PVForm` otherwise.  After :func:`reconstruct_pv` the integrating
    exponents ``c_i = int a_ii`` are returned in the table as ``c_<xi>``
    columns.
    """

    mode: PlanMode
    form: ExtensionChain | PVForm
    xi0: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "mode", PlanMode(self.mode))
        names = self.form.vars if isinstance(self.form, ExtensionChain) else self.form.xi
        object.__setattr__(self, "xi0", tuple(_initial_values(names, self.xi0)))
        if self.mode is PlanMode.CHAIN and not isinstance(self.form, ExtensionChain):
            raise TypeError("Chain mode needs an ExtensionChain")
        if self.mode is not PlanMode.CHAIN and not isinstance(self.form, PVForm):
            raise TypeError(f"{self.mode.value} needs a PVForm")


def reconstruct_pv(plan: ReconstructionPlan, base: TrajectoryTable) -> TrajectoryTable:
    """Solve a lower-triangular ``xi' = A xi`` row by row by variation of constants.

    With ``c_i = int a_ii``::

        xi_i(t) = exp(c_i) * (xi_i(t0) + int (sum_{j<i} a_ij xi_j) exp(-c_i))

    Under ``PVThm1`` the diagonal is 1 and ``c_i = t - t0``.
    """
    if plan.mode is PlanMode.CHAIN:
        return reconstruct_chain(plan.form, base, plan.xi0)
    pv: PVForm = plan.form
    cls = classify_matrix(pv)
    if cls not in _REQUIRED[plan.mode]:
        raise ClassificationMismatch(
            f"{plan.mode.value} requires {_REQUIRED[plan.mode][-1].value}, matrix is {cls.value}")

    h = base.h
    table = base
    for i, var in enumerate(pv.xi):
        if plan.mode is PlanMode.PV_THM1:
            c_grid, c_mid = base.t - base.t0, base.t_mid - base.t0
        else:
            a_g, a_m = _alpha_samples(pv.A[i][i], table, None, var)
            C = cumulative_integral(a_g, a_m, h)
            c_grid, c_mid = C.grid, C.mid
        decay_g, decay_m = _guarded_exp(-c_grid, var), _guarded_exp(-c_mid, var)
        b_grid, b_mid = np.zeros(base.n + 1), np.zeros(base.n)
        for j in range(i):
            a_g, a_m = _alpha_samples(pv.A[i][j], table, None, var)
            b_grid += a_g * table[pv.xi[j]]
            b_mid += a_m * table.mid(pv.xi[j])
        G = cumulative_integral(b_grid * decay_g, b_mid * decay_m, h)
        grow_g, grow_m = _guarded_exp(c_grid, var), _guarded_exp(c_mid, var)
        x0 = plan.xi0[i]
        table = table.with_columns(
            {var: grow_g * (x0 + G.grid), f"c_{var}": c_grid},
            {var: grow_m * (x0 + G.mid), f"c_{var}": c_mid})
    return table


def integrate_linear(pv: PVForm, base: TrajectoryTable, xi0) -> TrajectoryTable:
    """Classical RK4 on ``xi' = A xi`` for matrices of any shape.

    One step per grid interval; the stages use exactly the grid and
    midpoint samples of ``A``, so no interpolation is involved.  This is the
    fallback for matrices classified ``General``.
    """
    d = pv.size
    x = np.array(_initial_values(pv.xi, xi0), dtype=float)
    Ag = np.empty((base.n + 1, d, d))
    Am = np.empty((base.n, d, d))
    for i in range(d):
        for j in range(d):
            Ag[:, i, j], Am[:, i, j] = _alpha_samples(pv.A[i][j], base, None, pv.xi[i])
    h = base.h
    out = np.empty((base.n + 1, d))
    out[0] = x
    for k in range(base.n):
        k1 = Ag[k] @ x
        k2 = Am[k] @ (x + 0.5 * h * k1)
        k3 = Am[k] @ (x + 0.5 * h * k2)
        k4 = Ag[k + 1] @ (x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = x
    return base.with_columns({name: out[:, i] for i, name in enumerate(pv.xi)})
