"""Decomposition of a system against a declared (eta, xi) partition.

Two views are offered: a chain of quadrature steps (each extension state is
an integral or an exponential of an integral of earlier quantities) and the
linear form ``xi' = A(eta, u) xi`` together with a triangularity class.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .cartan import DEFAULT_ORDER, TIME, CartanField, JetSpec
from .errors import (
    AffineOffset, ConfigError, DomainError, NotChain, NotLinear, OpenSubsystem,
    ParseError, UnknownCoordinate,
)
from .expr import (
    Binary, Constant, Expr, Variable, as_expr, compile_expr,
    partial_derivative, simplify, split_primes, substitute, to_string, variables,
)

ZERO_TEST_SAMPLES = 64
ZERO_TEST_TOL = 1e-9
ZERO_TEST_BOX = (-2.0, 2.0)


def is_identically(e: Expr, value: float = 0.0, *, seed: int = 0,
                   n_samples: int = ZERO_TEST_SAMPLES, tol: float = ZERO_TEST_TOL,
                   box: tuple[float, float] = ZERO_TEST_BOX) -> bool:
    """Decide ``e == value`` everywhere: simplify, else try to refute by sampling.

    Points where evaluation leaves the domain are skipped.  If no sample can
    be evaluated the expression is reported as *not* identically ``value``.
    """
    e = simplify(as_expr(e))
    if isinstance(e, Constant):
        return e.value == value
    names = sorted(variables(e))
    rng = np.random.default_rng(seed)
    points = rng.uniform(box[0], box[1], size=(n_samples, len(names)))
    f = compile_expr(e)
    evaluated = 0
    for row in points:
        try:
            v = f(dict(zip(names, row.tolist())))
        except DomainError:
            continue
        evaluated += 1
        if abs(v - value) > tol:
            return False
    return evaluated > 0


def is_zero(e: Expr, **kwargs) -> bool:
    return is_identically(e, 0.0, **kwargs)


@dataclass(frozen=True)
class SystemModel:
    """Explicit dynamics ``x' = F(t, x, u)``, one expression per state."""

    name: str
    states: tuple[str, ...]
    inputs: tuple[str, ...]
    rhs: Mapping[str, Expr] = field(hash=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if not self.states or not self.inputs:
            raise ConfigError(f"system {self.name!r} needs at least one state and one input")
        rhs = {k: as_expr(v) for k, v in self.rhs.items()}
        if set(rhs) != set(self.states):
            raise ConfigError(f"rhs keys {sorted(rhs)} must equal states {list(self.states)}")
        JetSpec(self.states, self.inputs, 0)  # name checks
        allowed = {TIME, *self.states}
        for x, e in rhs.items():
            for name in variables(e) - allowed:
                base, _ = split_primes(name)
                if base not in self.inputs:
                    raise UnknownCoordinate([name])
        object.__setattr__(self, "rhs", {x: rhs[x] for x in self.states})

    @property
    def input_order(self) -> int:
        """Highest input derivative order appearing in the dynamics."""
        orders = [split_primes(n)[1] for e in self.rhs.values() for n in variables(e)
                  if split_primes(n)[0] in self.inputs]
        return max(orders, default=0)

    def cartan_field(self, order: int = DEFAULT_ORDER) -> CartanField:
        return CartanField(JetSpec(self.states, self.inputs, max(order, self.input_order)), self.rhs)

    def to_dict(self) -> dict:
        return {"name": self.name, "states": list(self.states), "inputs": list(self.inputs),
                "rhs": {x: to_string(e) for x, e in self.rhs.items()}}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SystemModel":
        try:
            return cls(str(data["name"]), tuple(data["states"]), tuple(data["inputs"]),
                       {k: as_expr(v) for k, v in data["rhs"].items()})
        except KeyError as exc:
            raise ConfigError(f"system description lacks field {exc.args[0]!r}") from None
        except ParseError as exc:
            raise ConfigError(f"bad expression in system description: {exc}") from None

    @classmethod
    def load(cls, path) -> "SystemModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Partition:
    eta: tuple[str, ...]
    xi: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "eta", tuple(self.eta))
        object.__setattr__(self, "xi", tuple(self.xi))

    def validate(self, system: SystemModel) -> None:
        both = list(self.eta) + list(self.xi)
        if len(set(both)) != len(both):
            raise ConfigError("eta and xi must be disjoint and without repeats")
        if set(both) != set(system.states):
            raise ConfigError(
                f"partition {both} does not cover the states {list(system.states)} exactly")

    @classmethod
    def parse(cls, text: str) -> "Partition":
        """Parse ``"eta=x2,x3,xi=x1"`` (names may also be separated by ':' ';' or blanks)."""
        import re

        parts = re.split(r"(?:^|[,;\s])\s*(eta|xi)\s*=", text.strip())
        if parts[0].strip():
            raise ConfigError(f"cannot parse partition {text!r}")
        found: dict[str, tuple[str, ...]] = {}
        for key, body in zip(parts[1::2], parts[2::2]):
            if key in found:
                raise ConfigError(f"{key} given twice in partition {text!r}")
            found[key] = tuple(n for n in re.split(r"[,;:\s]+", body) if n)
        return cls(found.get("eta", ()), found.get("xi", ()))


class StepKind(str, enum.Enum):
    INTEGRAL = "Integral"
    EXPONENTIAL = "Exponential"


@dataclass(frozen=True)
class ExtensionStep:
    """``xi' = alpha`` (Integral) or ``xi' = alpha * xi`` (Exponential)."""

    var: str
    kind: StepKind
    alpha: Expr

    def rhs(self) -> Expr:
        if self.kind is StepKind.INTEGRAL:
            return self.alpha
        return simplify(Binary("*", self.alpha, Variable(self.var)))

    def to_dict(self) -> dict:
        return {"var": self.var, "kind": self.kind.value, "alpha": to_string(self.alpha)}


@dataclass(frozen=True)
class ExtensionChain:
    steps: tuple[ExtensionStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    @property
    def vars(self) -> tuple[str, ...]:
        return tuple(s.var for s in self.steps)

    def is_prefix_closed(self) -> bool:
        """Re-check that each alpha mentions no extension state at or after its own."""
        order = self.vars
        for j, step in enumerate(self.steps):
            if variables(step.alpha) & set(order[j:]):
                return False
        return True

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.steps]


class Classification(str, enum.Enum):
    UNIT_LOWER_TRIANGULAR = "UnitLowerTriangular"
    LOWER_TRIANGULAR = "LowerTriangular"
    GENERAL = "General"


@dataclass(frozen=True)
class PVForm:
    """Matrix ``A`` of ``xi' = A(eta, u) xi``; ``xi`` names fix row/column order."""

    A: tuple[tuple[Expr, ...], ...]
    xi: tuple[str, ...] = ()

    def __post_init__(self):
        rows = tuple(tuple(as_expr(a) for a in row) for row in self.A)
        d = len(rows)
        if any(len(r) != d for r in rows):
            raise ValueError("PV matrix must be square")
        xi = tuple(self.xi) or tuple(f"xi{i + 1}" for i in range(d))
        if len(xi) != d:
            raise ValueError("one xi name per matrix row is required")
        object.__setattr__(self, "A", rows)
        object.__setattr__(self, "xi", xi)

    @property
    def size(self) -> int:
        return len(self.A)

    @property
    def classification(self) -> Classification:
        return classify_matrix(self)

    def rhs(self, i: int) -> Expr:
        total: Expr = Constant(0.0)
        for a, x in zip(self.A[i], self.xi):
            total = total + a * Variable(x)
        return simplify(total)

    def to_lists(self) -> list[list[str]]:
        return [[to_string(a) for a in row] for row in self.A]


def _check_eta_closed(system: SystemModel, part: Partition, seed: int) -> None:
    for eta in part.eta:
        f = system.rhs[eta]
        for x in part.xi:
            if x in variables(f) and not is_zero(partial_derivative(f, x), seed=seed):
                raise OpenSubsystem(eta, x)


def check_chain_structure(system: SystemModel, part: Partition, *, seed: int = 0) -> ExtensionChain:
    """Recognise each xi (in partition order) as an integral or exponential step.

    Raises
    ------
    NotChain
        Names the first offending extension state and the dependency that
        breaks the chain.
    """
    part.validate(system)
    try:
        _check_eta_closed(system, part, seed)
    except OpenSubsystem as exc:
        raise NotChain(exc.xi, f"flat-subsystem state {exc.eta!r} depends on it") from None

    steps = []
    xi = part.xi
    for j, var in enumerate(xi):
        f = system.rhs[var]
        later = xi[j + 1:]
        for k in later:
            if not is_zero(partial_derivative(f, k), seed=seed):
                raise NotChain(var, f"depends on later extension state {k!r}")
        d_self = partial_derivative(f, var)
        if is_zero(d_self, seed=seed):
            steps.append(ExtensionStep(var, StepKind.INTEGRAL, simplify(f)))
            continue
        if not is_zero(partial_derivative(d_self, var), seed=seed):
            raise NotChain(var, f"nonlinear in {var}")
        for k in later:
            if not is_zero(partial_derivative(d_self, k), seed=seed):
                raise NotChain(var, f"rate depends on later extension state {k!r}")
        alpha = simplify(substitute(d_self, {var: 0.0}))
        remainder = simplify(f - alpha * Variable(var))
        if not is_zero(remainder, seed=seed):
            raise NotChain(var, f"affine in {var} with a nonzero offset (neither integral nor exponential)")
        steps.append(ExtensionStep(var, StepKind.EXPONENTIAL, alpha))
    return ExtensionChain(tuple(steps))


def search_chain_order(system: SystemModel, part: Partition, *, seed: int = 0,
                       max_d: int = 6) -> tuple[Partition, ExtensionChain]:
    """Try every ordering of xi (d <= max_d) and return the first that forms a chain."""
    if len(part.xi) > max_d:
        raise ValueError(f"exhaustive order search is limited to d <= {max_d}")
    first_error = None
    for perm in itertools.permutations(part.xi):
        candidate = Partition(part.eta, perm)
        try:
            return candidate, check_chain_structure(system, candidate, seed=seed)
        except NotChain as exc:
            first_error = first_error or exc
    raise first_error or NotChain("", "no extension states")


def extract_pv_form(system: SystemModel, part: Partition, *, seed: int = 0) -> PVForm:
    """Read off ``A[j][k] = d rhs_j / d xi_k`` and check ``rhs_xi == A xi`` exactly."""
    part.validate(system)
    _check_eta_closed(system, part, seed)
    xi = part.xi
    zero_xi = {x: 0.0 for x in xi}
    rows = []
    for var in xi:
        f = system.rhs[var]
        row = []
        for k in xi:
            a = partial_derivative(f, k)
            for l in xi:
                if l in variables(a) and not is_zero(partial_derivative(a, l), seed=seed):
                    raise NotLinear(var, f"coefficient of {k} depends on {l}")
            row.append(simplify(substitute(a, zero_xi)))
        if not is_zero(substitute(f, zero_xi), seed=seed):
            raise AffineOffset(var)
        rows.append(tuple(row))
    return PVForm(tuple(rows), xi)


def classify_matrix(pv: PVForm, *, seed: int = 0) -> Classification:
    d = pv.size
    for i in range(d):
        for j in range(i + 1, d):
            if not is_zero(pv.A[i][j], seed=seed):
                return Classification.GENERAL
    if all(is_identically(pv.A[i][i], 1.0, seed=seed) for i in range(d)):
        return Classification.UNIT_LOWER_TRIANGULAR
    return Classification.LOWER_TRIANGULAR
