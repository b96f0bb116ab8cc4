"""Direct numerical integration and trajectory comparison.

This module is the independent check on every quadrature reconstruction:
it never looks at extension chains or PV matrices, only at the original
vector field and the input samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, DomainExit, GridMismatch, MissingColumn, NonFiniteState
from .expr import compile_expr, variables
from .rolling import outputs_from_angles, outputs_from_tangents
from .structure import SystemModel
from .table import TIME, TrajectoryTable

DEFAULT_SUBSTEPS = 10
TAN_GUARD = math.pi - 0.1


def _exogenous(system: SystemModel) -> list[str]:
    names = set()
    for e in system.rhs.values():
        names |= variables(e)
    return sorted(names - set(system.states) - {TIME})


def _initial_state(system: SystemModel, x0) -> list[float]:
    if isinstance(x0, Mapping):
        missing = [s for s in system.states if s not in x0]
        if missing:
            raise ValueError("missing initial state for: " + ", ".join(missing))
        return [float(x0[s]) for s in system.states]
    values = [float(v) for v in x0]
    if len(values) != len(system.states):
        raise ValueError(f"expected {len(system.states)} initial values, got {len(values)}")
    return values


def integrate_ode(system: SystemModel, inputs: TrajectoryTable, x0, substeps: int = DEFAULT_SUBSTEPS,
                  ) -> TrajectoryTable:
    """Classical RK4 with step ``h/substeps`` under sampled inputs.

    Between samples every exogenous signal (inputs, input derivatives, or
    any other non-state symbol in the dynamics) follows the parabola through
    its values at ``t_k``, ``t_k + h/2`` and ``t_{k+1}``.  Returns the state
    columns on the grid of ``inputs``.
    """
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    exo = _exogenous(system)
    for name in exo:
        if name not in inputs:
            raise MissingColumn(name)
        if not inputs.has_mid(name):
            raise MissingColumn(f"{name} (midpoints)")
    # u(tau) = a + b tau + c tau^2 on each interval, tau in [0, 1]
    shape = (len(exo), inputs.n)
    p0 = np.array([inputs[nm][:-1] for nm in exo]).reshape(shape).T
    pm = np.array([inputs.mid(nm) for nm in exo]).reshape(shape).T
    p1 = np.array([inputs[nm][1:] for nm in exo]).reshape(shape).T
    qa, qb, qc = p0, -3 * p0 + 4 * pm - p1, 2 * p0 - 4 * pm + 2 * p1
    qa, qb, qc = qa.tolist(), qb.tolist(), qc.tolist()

    states = list(system.states)
    fs = [compile_expr(system.rhs[s]) for s in states]
    env: dict[str, float] = {}
    t0, h, n = inputs.t0, inputs.h, inputs.n
    dtau = 1.0 / substeps

    def deriv(k, tau, x):
        env[TIME] = t0 + h * (k + tau)
        a, b, c = qa[k], qb[k], qc[k]
        for i, nm in enumerate(exo):
            env[nm] = a[i] + tau * (b[i] + tau * c[i])
        for nm, v in zip(states, x):
            env[nm] = v
        try:
            return [f(env) for f in fs]
        except DomainError as exc:
            raise exc.with_context(t=env[TIME], **dict(zip(states, x))) from None

    x = _initial_state(system, x0)
    out = np.empty((n + 1, len(states)))
    out[0] = x
    dt = h * dtau
    for k in range(n):
        for j in range(substeps):
            tau = j * dtau
            k1 = deriv(k, tau, x)
            k2 = deriv(k, tau + 0.5 * dtau, [xi + 0.5 * dt * d for xi, d in zip(x, k1)])
            k3 = deriv(k, tau + 0.5 * dtau, [xi + 0.5 * dt * d for xi, d in zip(x, k2)])
            k4 = deriv(k, tau + dtau, [xi + dt * d for xi, d in zip(x, k3)])
            x = [xi + dt / 6.0 * (a + 2 * b + 2 * c + d)
                 for xi, a, b, c, d in zip(x, k1, k2, k3, k4)]
        if not all(math.isfinite(v) for v in x):
            raise NonFiniteState(t0 + h * (k + 1), dict(zip(states, x)))
        out[k + 1] = x
    return TrajectoryTable(t0, h, n, {s: out[:, i] for i, s in enumerate(states)})


@dataclass(frozen=True)
class ColumnError:
    sup: float
    rms: float
    worst_index: int

    def to_dict(self) -> dict:
        return {"sup": self.sup, "rms": self.rms, "worst_index": self.worst_index}


@dataclass(frozen=True)
class ErrorReport:
    """Per-column sup/RMS deviations; passes iff every sup-norm is within ``tol``."""

    columns: Mapping[str, ColumnError] = field(default_factory=dict)
    tol: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.sup <= self.tol for c in self.columns.values())

    @property
    def max_sup(self) -> float:
        return max((c.sup for c in self.columns.values()), default=0.0)

    def to_dict(self) -> dict:
        return {name: c.to_dict() for name, c in self.columns.items()}

    def merged(self, other: "ErrorReport") -> "ErrorReport":
        return ErrorReport({**self.columns, **other.columns}, min(self.tol, other.tol))


def _column_error(diff: np.ndarray) -> ColumnError:
    diff = np.abs(diff)
    k = int(np.argmax(diff))
    return ColumnError(float(diff[k]), float(np.sqrt(np.mean(diff ** 2))), k)


def compare(a: TrajectoryTable, b: TrajectoryTable, columns: Sequence[str], tol: float) -> ErrorReport:
    if not a.same_grid(b):
        raise GridMismatch("tables are sampled on different grids")
    errs = {}
    for name in columns:
        errs[name] = _column_error(np.asarray(a[name]) - np.asarray(b[name]))
    return ErrorReport(errs, tol)


def _check_guard(table: TrajectoryTable, names=("psi", "v2")) -> None:
    t = table.t
    first = None
    for name in names:
        bad = np.flatnonzero(~(np.abs(table[name]) < TAN_GUARD))
        if bad.size and (first is None or bad[0] < first[1]):
            first = (name, int(bad[0]))
    if first is not None:
        name, k = first
        raise DomainExit(name, float(t[k]), float(table[name][k]))


def transform_consistency_plateball(orig: TrajectoryTable, rational: TrajectoryTable,
                                    tol: float) -> ErrorReport:
    """Check the angle form against the half-angle-tangent form of the plate-ball.

    Compares ``tan(psi/2)`` with ``sigma``, ``tan(v2/2)`` with ``xi``, the
    shared states ``v1, w1, w2``, and the output pair ``(x, y)`` with its
    rational counterpart ``(x~, y~)``.
    """
    if not orig.same_grid(rational):
        raise GridMismatch("tables are sampled on different grids")
    _check_guard(orig)
    x, y = outputs_from_angles(orig["v1"], orig["w1"], orig["v2"], orig["w2"], orig["psi"])
    xt, yt = outputs_from_tangents(rational["v1"], rational["w1"], rational["xi"],
                                   rational["w2"], rational["sigma"])
    pairs = {
        "sigma": (np.tan(orig["psi"] / 2), rational["sigma"]),
        "xi": (np.tan(orig["v2"] / 2), rational["xi"]),
        "v1": (orig["v1"], rational["v1"]),
        "w1": (orig["w1"], rational["w1"]),
        "w2": (orig["w2"], rational["w2"]),
        "x": (x, xt),
        "y": (y, yt),
    }
    return ErrorReport({k: _column_error(a - b) for k, (a, b) in pairs.items()}, tol)
