"""Built-in systems and the end-to-end plan/reconstruct/verify pipeline."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .cartan import DEFAULT_ORDER
from .errors import ConfigError, LiouplanError, ParseError, PipelineError
from .expr import as_expr, split_primes, variables
from .quadrature import PlanMode, ReconstructionPlan, reconstruct_pv
from .rolling import (
    PLATEBALL_NOTE, builtin_plateball, builtin_plateball_rational, builtin_rolling,
    liouvillian_outputs_plateball,
)
from .structure import (
    Classification, Partition, SystemModel, check_chain_structure, classify_matrix,
    extract_pv_form,
)
from .table import TIME, TrajectoryTable, evaluate_on_table
from .trajectory import FlatnessMap, fit_polynomial_boundary, flat_time_derivative, synthesize_base
from .verify import DEFAULT_SUBSTEPS, compare, integrate_ode, transform_consistency_plateball

__all__ = [
    "builtin_academic", "builtin_rolling", "builtin_plateball", "builtin_plateball_rational",
    "liouvillian_outputs_plateball", "resolve_system", "ScenarioConfig", "ScenarioResult",
    "run_scenario", "report_schema", "EXIT_PASS", "EXIT_FAIL", "EXIT_CONFIG", "EXIT_NUMERIC",
]

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def builtin_academic(i: int) -> SystemModel:
    """``x1' = x2 + x_i^2, x2' = x3, x3' = u`` for ``i`` in 1, 2, 3."""
    if i not in (1, 2, 3):
        raise ValueError(f"academic example index must be 1, 2 or 3, got {i!r}")
    return SystemModel(f"academic{i}", ("x1", "x2", "x3"), ("u",),
                       {"x1": f"x2 + x{i}^2", "x2": "x3", "x3": "u"})


def resolve_system(spec: Mapping | str) -> tuple[SystemModel, list[str]]:
    """System from an inline description, ``{"builtin": ...}`` or ``"builtin:<name>"``.

    Returns the model and any provenance notes.
    """
    if isinstance(spec, str):
        if not spec.startswith("builtin:"):
            raise ConfigError(f"cannot resolve system {spec!r}")
        name = spec.split(":", 1)[1]
        if name.startswith("academic") and name[8:].isdigit():
            spec = {"builtin": "academic", "i": int(name[8:])}
        else:
            spec = {"builtin": name}
    if "builtin" not in spec:
        return SystemModel.from_dict(spec), []
    kind = spec["builtin"]
    try:
        if kind == "academic":
            return builtin_academic(int(spec.get("i", 3))), []
        if kind == "rolling":
            B, C = spec.get("B", "1"), spec.get("C", "cos(v2)")
            return builtin_rolling(B, C), []
        if kind == "plateball":
            return builtin_plateball(), [PLATEBALL_NOTE]
        if kind == "plateball_rational":
            return builtin_plateball_rational(), [PLATEBALL_NOTE]
    except (ValueError, ParseError) as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown builtin system {kind!r}")


# -- configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one pipeline run needs; see ``from_dict`` for the JSON layout."""

    name: str
    system: Any
    kind: str = "plan"
    partition: Partition | None = None
    method: str = "chain"
    flatness_map: Mapping[str, str] = field(default_factory=dict)
    boundary: Mapping[str, Mapping[str, list]] = field(default_factory=dict)
    grid: tuple[float, float, int] = (0.0, 1.0, 200)
    xi0: Mapping[str, float] = field(default_factory=dict)
    x0: Mapping[str, float] = field(default_factory=dict)
    inputs: Mapping[str, str] = field(default_factory=dict)
    tolerance: float = 1e-6
    substeps: int = DEFAULT_SUBSTEPS
    seed: int = 0
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        if self.kind not in ("plan", "plateball_transform"):
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.method not in ("chain", "pv"):
            raise ConfigError(f"unknown method {self.method!r} (use 'chain' or 'pv')")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        t0, tf, n = self.grid
        if int(n) < 2:
            raise ConfigError("grid N must be at least 2")
        if not tf > t0:
            raise ConfigError("grid needs t0 < tf")
        if self.substeps < 1:
            raise ConfigError("substeps must be at least 1")
        if self.kind == "plan":
            if self.partition is None:
                raise ConfigError("plan scenarios need a partition")
            if not self.boundary:
                raise ConfigError("plan scenarios need flat_output.boundary")
            if not self.flatness_map:
                raise ConfigError("plan scenarios need a flatness_map")

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScenarioConfig":
        """Build from the scenario JSON layout::

            {"name": ..., "kind": "plan" | "plateball_transform",
             "system": {...} | {"builtin": "academic", "i": 3},
             "partition": {"eta": [...], "xi": [...]}, "method": "chain" | "pv",
             "flat_output": {"boundary": {"y": {"t0": [[order, value], ...],
                                                "tf": [[order, value], ...]}}},
             "flatness_map": {name: expr}, "grid": {"t0": 0, "tf": 1, "N": 200},
             "xi0": {name: value}, "tolerance": 1e-6, "substeps": 10, "seed": 0}

        Transform scenarios give ``"inputs": {"u1": expr-in-t, ...}`` and
        ``"x0"`` instead of the planning fields.
        """
        try:
            grid = data.get("grid", {})
            part = data.get("partition")
            if isinstance(part, str):
                part = Partition.parse(part)
            elif part is not None:
                part = Partition(tuple(part.get("eta", ())), tuple(part.get("xi", ())))
            return cls(
                name=str(data.get("name", "scenario")),
                system=data["system"] if "system" in data else "builtin:plateball",
                kind=data.get("kind", "plan"),
                partition=part,
                method=data.get("method", "chain"),
                flatness_map=dict(data.get("flatness_map", {})),
                boundary=dict(data.get("flat_output", {}).get("boundary", {})),
                grid=(float(grid.get("t0", 0.0)), float(grid.get("tf", 1.0)), int(grid.get("N", 200))),
                xi0={k: float(v) for k, v in data.get("xi0", {}).items()},
                x0={k: float(v) for k, v in data.get("x0", {}).items()},
                inputs=dict(data.get("inputs", {})),
                tolerance=float(data.get("tolerance", 1e-6)),
                substeps=int(data.get("substeps", DEFAULT_SUBSTEPS)),
                seed=int(data.get("seed", 0)),
                order=int(data.get("order", DEFAULT_ORDER)),
            )
        except (TypeError, ValueError, AttributeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed scenario: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(data)

    def replace(self, **changes) -> "ScenarioConfig":
        from dataclasses import replace
        return replace(self, **changes)


# -- pipeline --------------------------------------------------------------------

@dataclass
class ScenarioResult:
    report: dict
    table: TrajectoryTable | None
    error: PipelineError | None = None

    @property
    def passed(self) -> bool:
        return bool(self.report["pass"])

    @property
    def exit_code(self) -> int:
        if self.error is None:
            return EXIT_PASS if self.passed else EXIT_FAIL
        cause = self.error.cause
        while cause is not None:
            if isinstance(cause, ArithmeticError):
                return EXIT_NUMERIC
            cause = getattr(cause, "cause", None)
        return EXIT_CONFIG


class _Stage:
    """Tag exceptions escaping a block with the pipeline stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, etype, exc, tb):
        if exc is None or isinstance(exc, PipelineError):
            return False
        if isinstance(exc, (LiouplanError, ValueError, KeyError)):
            raise PipelineError(self.name, exc) from exc
        return False


def _input_derivative_names(system: SystemModel, names) -> dict[str, int]:
    """Input-derivative symbols (``u'``, ``u''``...) used by the given expressions."""
    found = {}
    for e in names:
        for v in variables(e):
            base, k = split_primes(v)
            if k and base in system.inputs:
                found[v] = k
    return found


def _run_plan(cfg: ScenarioConfig, report: dict, notes: list[str]):
    with _Stage("config"):
        system, sys_notes = resolve_system(cfg.system)
        notes.extend(sys_notes)
        part = cfg.partition
        part.validate(system)
        fmap = FlatnessMap(tuple(cfg.boundary), cfg.flatness_map)
        fmap.require(list(part.eta) + list(system.inputs))
        missing = [x for x in part.xi if x not in cfg.xi0]
        if missing:
            raise ConfigError("xi0 lacks initial values for: " + ", ".join(missing))

    notes.append(f"defect <= {len(part.xi)} (partition asserted, minimality not checked)")
    with _Stage("structure"):
        if cfg.method == "chain":
            chain = check_chain_structure(system, part, seed=cfg.seed)
            report["chain"] = chain.to_list()
            report["classification"] = "Chain"
            plan = ReconstructionPlan(PlanMode.CHAIN, chain, cfg.xi0)
        else:
            pv = extract_pv_form(system, part, seed=cfg.seed)
            cls = classify_matrix(pv, seed=cfg.seed)
            report["classification"] = cls.value
            report["matrix"] = pv.to_lists()
            if cls is Classification.GENERAL:
                raise ConfigError("matrix is not lower triangular; no quadrature formula applies")
            mode = PlanMode.PV_THM1 if cls is Classification.UNIT_LOWER_TRIANGULAR else PlanMode.PV_THM2
            plan = ReconstructionPlan(mode, pv, cfg.xi0)

    with _Stage("trajectory"):
        t0, tf, n = cfg.grid
        outputs = {}
        for y, bc in cfg.boundary.items():
            outputs[y] = fit_polynomial_boundary(
                [tuple(c) for c in bc.get("t0", [])], [tuple(c) for c in bc.get("tf", [])], t0, tf)

    with _Stage("base"):
        needed = _input_derivative_names(system, system.rhs.values())
        derived = {}
        for name, k in needed.items():
            base_name, _ = split_primes(name)
            e = fmap.exprs[base_name]
            for _ in range(k):
                e = flat_time_derivative(e, fmap.outputs)
            derived[name] = e
        base = synthesize_base(fmap, outputs, (t0, tf, n), derived=derived)

    with _Stage("reconstruct"):
        recon = reconstruct_pv(plan, base)

    with _Stage("simulate"):
        x0 = {x: float(base[x][0]) for x in part.eta}
        x0.update({x: float(cfg.xi0[x]) for x in part.xi})
        sim = integrate_ode(system, base, x0, cfg.substeps)

    with _Stage("compare"):
        errs = compare(recon, sim, list(system.states), cfg.tolerance)
    table = recon.with_columns({f"sim_{s}": sim[s] for s in system.states})
    return errs, table


def _run_transform(cfg: ScenarioConfig, report: dict, notes: list[str]):
    with _Stage("config"):
        orig_sys = builtin_rolling("1", "cos(v2)", name="plateball")
        rat_sys = builtin_plateball_rational()
        notes.append(PLATEBALL_NOTE)
        t0, tf, n = cfg.grid
        grid = TrajectoryTable.grid(t0, tf, n)
        cols, mids = {}, {}
        for u in orig_sys.inputs:
            e = as_expr(cfg.inputs.get(u, "0"))
            if variables(e) - {TIME}:
                raise ConfigError(f"input {u} may depend on t only")
            cols[u], mids[u] = evaluate_on_table(e, grid, label=u)
        inputs = grid.with_columns(cols, mids)
        x0 = {s: float(cfg.x0.get(s, 0.0)) for s in orig_sys.states}
        rat0 = {"v1": x0["v1"], "w1": x0["w1"], "w2": x0["w2"],
                "xi": float(np.tan(x0["v2"] / 2)), "sigma": float(np.tan(x0["psi"] / 2))}
    report["classification"] = "Transform"
    with _Stage("simulate"):
        orig = integrate_ode(orig_sys, inputs, x0, cfg.substeps)
        rational = integrate_ode(rat_sys, inputs, rat0, cfg.substeps)
    with _Stage("compare"):
        errs = transform_consistency_plateball(orig, rational, cfg.tolerance)
    x, y, xt, yt = zip(*(liouvillian_outputs_plateball({**orig.row(k), **rational.row(k)})
                         for k in range(n + 1)))
    table = inputs.with_columns({**orig.columns, "xi": rational["xi"], "sigma": rational["sigma"],
                                 "x": x, "y": y, "x_tilde": xt, "y_tilde": yt})
    return errs, table


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Run the whole pipeline; failures are reported, not raised.

    The report follows the shipped JSON schema (see :func:`report_schema`);
    on failure it carries ``"failure": {"stage", "type", "message"}``.
    """
    start = time.perf_counter()
    notes: list[str] = []
    report: dict = {"scenario": cfg.name, "classification": "Unknown", "chain": [],
                    "errors": {}, "pass": False, "runtime_ms": 0, "notes": notes}
    table = None
    error = None
    try:
        if cfg.kind == "plan":
            errs, table = _run_plan(cfg, report, notes)
        else:
            errs, table = _run_transform(cfg, report, notes)
        report["errors"] = {k: {"sup": v.sup, "rms": v.rms} for k, v in errs.columns.items()}
        report["pass"] = errs.passed
        report["tolerance"] = cfg.tolerance
    except PipelineError as exc:
        error = exc
        cause = exc.cause
        report["failure"] = {"stage": exc.stage, "type": type(cause).__name__, "message": str(cause)}
        notes.append(f"{exc.stage} failed: {cause}")
    report["runtime_ms"] = int(round((time.perf_counter() - start) * 1000))
    return ScenarioResult(report, table, error)


def report_schema() -> dict:
    text = resources.files("liouplan").joinpath("report.schema.json").read_text()
    return json.loads(text)
