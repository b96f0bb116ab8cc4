"""Exception hierarchy shared by every liouplan module."""

from __future__ import annotations


class LiouplanError(Exception):
    """Base class for all errors raised by liouplan."""


# -- expressions ---------------------------------------------------------------


class ParseError(LiouplanError):
    """Syntax error in an expression string.

    Attributes
    ----------
    offset : int
        Byte offset into the source text where parsing failed.
    expected : frozenset of str
        Token kinds that would have been accepted at ``offset``.
    """

    def __init__(self, message, text, offset, expected=()):
        self.text = text
        self.offset = offset
        self.expected = frozenset(expected)
        detail = message
        if self.expected:
            detail += "; expected one of: " + ", ".join(sorted(self.expected))
        super().__init__(f"{detail} (at offset {offset} in {text!r})")


class UnknownFunction(ParseError):
    def __init__(self, name, text, offset):
        self.name = name
        super().__init__(f"unknown function {name!r}", text, offset)


class UnboundVariable(LiouplanError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unbound variable {name!r}")


class DomainError(LiouplanError, ArithmeticError):
    """Evaluation left the domain of a function (or overflowed)."""

    def __init__(self, node, value, context=None):
        self.node = node
        self.value = value
        self.context = dict(context or {})
        msg = f"domain error in {node} at value {value!r}"
        if self.context:
            msg += " [" + ", ".join(f"{k}={v!r}" for k, v in self.context.items()) + "]"
        super().__init__(msg)

    def with_context(self, **context):
        merged = {**self.context, **context}
        return DomainError(self.node, self.value, merged)


# -- jets / Cartan field -------------------------------------------------------


class TruncationExceeded(LiouplanError):
    def __init__(self, name, order):
        self.name = name
        self.order = order
        super().__init__(
            f"{name!r} is an input derivative of the truncation order {order}; "
            "its total derivative lies outside the truncated jet space")


class UnknownCoordinate(LiouplanError, ValueError):
    def __init__(self, names):
        self.names = tuple(sorted(names))
        super().__init__("not a jet coordinate: " + ", ".join(self.names))


class ZeroAlpha(LiouplanError):
    pass


# -- structure analysis --------------------------------------------------------


class StructureError(LiouplanError):
    """Base for failures of the structural decomposition."""


class NotChain(StructureError):
    def __init__(self, var, reason):
        self.var = var
        self.reason = reason
        super().__init__(f"not a quadrature chain at {var!r}: {reason}")


class NotLinear(StructureError):
    def __init__(self, var, reason="right-hand side is not linear in the extension states"):
        self.var = var
        self.reason = reason
        super().__init__(f"{var!r}: {reason}")


class AffineOffset(StructureError):
    def __init__(self, var):
        self.var = var
        super().__init__(
            f"{var!r}: right-hand side is nonzero when all extension states vanish")


class OpenSubsystem(StructureError):
    """The declared flat subsystem depends on an extension state."""

    def __init__(self, eta, xi):
        self.eta = eta
        self.xi = xi
        super().__init__(f"flat-subsystem state {eta!r} depends on extension state {xi!r}")


# -- trajectories and quadrature -----------------------------------------------


class SingularFit(LiouplanError):
    pass


class NonFiniteSample(LiouplanError, ArithmeticError):
    def __init__(self, index, where="grid"):
        self.index = index
        self.where = where
        super().__init__(f"non-finite integrand sample at {where} index {index}")


class ExpOverflow(LiouplanError, ArithmeticError):
    def __init__(self, var, index, exponent):
        self.var = var
        self.index = index
        self.exponent = exponent
        super().__init__(
            f"exponent {exponent:.6g} exceeds the overflow guard while reconstructing "
            f"{var!r} (row {index})")


class ClassificationMismatch(LiouplanError):
    pass


class ReconstructionError(LiouplanError):
    """A chain step failed; wraps the underlying error with the step's variable."""

    def __init__(self, var, cause):
        self.var = var
        self.cause = cause
        super().__init__(f"reconstruction of {var!r} failed: {cause}")


# -- simulation and comparison -------------------------------------------------


class NonFiniteState(LiouplanError, ArithmeticError):
    def __init__(self, t, state):
        self.t = t
        self.state = dict(state)
        super().__init__(f"state became non-finite at t={t!r}: {self.state}")


class GridMismatch(LiouplanError, ValueError):
    pass


class MissingColumn(LiouplanError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(name)

    def __str__(self):
        return f"missing column {self.name!r}"


class DomainExit(LiouplanError, ArithmeticError):
    def __init__(self, column, t, value):
        self.column = column
        self.t = t
        self.value = value
        super().__init__(
            f"{column} = {value:.6g} at t = {t:.6g} leaves the tan-half-angle guard region")


# -- scenarios ------------------------------------------------------------------


class ZeroSurfaceFactor(LiouplanError, ValueError):
    pass


class ConfigError(LiouplanError, ValueError):
    pass


class PipelineError(LiouplanError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
