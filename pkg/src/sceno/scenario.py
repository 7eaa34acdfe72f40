"""Scenario formalism: parameter spaces, measure traces, fitness and safety.

A scenario is driven by a normalized parameter vector theta in [0,1]^m.
Each component maps affinely onto a physical interval [lo, hi]. Running the
scenario produces a trace of a scalar quantitative measure (e.g. bumper gap
in meters); the fitness of the run is the minimum of that trace, and the run
is safe when the fitness clears a threshold tau.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ContractViolation, EvaluationError


@dataclass(frozen=True)
class ParamDef:
    """One physical scenario parameter with its unit interval mapping."""

    name: str
    lo: float
    hi: float
    unit: str = ""

    def __post_init__(self):
        if not self.name:
            raise ContractViolation("parameter name must be non-empty")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ContractViolation(f"parameter {self.name!r}: bounds must be finite")
        if not self.lo < self.hi:
            raise ContractViolation(
                f"parameter {self.name!r}: lo={self.lo} must be < hi={self.hi}"
            )


@dataclass(frozen=True)
class ParamSpace:
    """An m-dimensional normalized parameter box with denormalization metadata."""

    params: tuple[ParamDef, ...]

    def __post_init__(self):
        if len(self.params) == 0:
            raise ContractViolation("a parameter space needs at least one parameter")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ContractViolation(f"parameter names must be unique: {names}")

    @property
    def m(self) -> int:
        return len(self.params)

    @property
    def los(self) -> np.ndarray:
        return np.array([p.lo for p in self.params])

    @property
    def his(self) -> np.ndarray:
        return np.array([p.hi for p in self.params])

    def denormalize(self, theta: np.ndarray) -> np.ndarray:
        """Map theta in [0,1]^m to physical units: lo + theta * (hi - lo)."""
        t = as_theta(theta, self.m)
        return self.los + t * (self.his - self.los)

    def normalize(self, physical: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`denormalize` for in-range physical points."""
        x = np.asarray(physical, dtype=float)
        if x.shape != (self.m,):
            raise ContractViolation(f"expected {self.m} physical values, got shape {x.shape}")
        return (x - self.los) / (self.his - self.los)


def as_theta(theta, m: int) -> np.ndarray:
    """Validate and return a normalized parameter vector as float64.

    Components must lie in [0,1] inclusive and the dimension must be m.
    """
    t = np.asarray(theta, dtype=float)
    if t.shape != (m,):
        raise ContractViolation(f"expected parameter vector of dimension {m}, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ContractViolation("parameter vector contains non-finite components")
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ContractViolation(f"parameter vector leaves the unit box: {t}")
    return t


@dataclass(frozen=True)
class MeasureTrace:
    """The measure sampled along one simulation, one value per step."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ContractViolation("a trace must be a non-empty 1-D sequence")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class SafetySpec:
    """Threshold tau on the fitness value, with the measure it applies to."""

    tau: float
    measure_id: str = "distance"

    def __post_init__(self):
        if not np.isfinite(self.tau):
            raise ContractViolation("tau must be finite")


@dataclass(frozen=True)
class BlackBox:
    """Opaque scenario fitness function theta -> rho(theta).

    ``evaluate`` must be deterministic: the same theta always yields the
    identical value. ``concurrency_safe`` declares whether callers may invoke
    it from several workers at once; pipelines that parallelize must respect
    it.
    """

    evaluate: Callable[[np.ndarray], float]
    descriptor: str = ""
    concurrency_safe: bool = True


def fitness_of_trace(trace: MeasureTrace) -> float:
    """Minimum of the measure over the trace.

    Raises :class:`EvaluationError` (carrying the first offending index) if
    any trace value is non-finite, so glitchy simulators surface loudly
    instead of polluting datasets.
    """
    v = trace.values
    finite = np.isfinite(v)
    if not finite.all():
        idx = int(np.argmin(finite))
        raise EvaluationError(f"non-finite measure value at step {idx}", index=idx)
    return float(v.min())


def is_safe(rho: float, spec: SafetySpec) -> bool:
    """True iff the fitness clears the threshold (boundary inclusive)."""
    if not np.isfinite(rho):
        raise ContractViolation("fitness must be finite")
    return rho >= spec.tau


# ---------------------------------------------------------------------------
# Scenario configuration files
# ---------------------------------------------------------------------------

_BLACKBOX_KINDS = ("builtin", "subprocess")


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed scenario configuration (see file schema in the README)."""

    name: str
    tau: float
    space: ParamSpace
    blackbox: dict = field(default_factory=dict)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ContractViolation(f"missing config field {key!r} in {where}")
    return obj[key]


def parse_scenario_config(doc: dict) -> ScenarioConfig:
    """Validate a scenario config dict against the normative schema."""
    name = _require(doc, "name", "scenario config")
    tau = float(_require(doc, "tau", "scenario config"))
    raw_params = _require(doc, "parameters", "scenario config")
    if not isinstance(raw_params, list) or not raw_params:
        raise ContractViolation("config field 'parameters' must be a non-empty list")
    defs = []
    for i, p in enumerate(raw_params):
        where = f"parameters[{i}]"
        defs.append(
            ParamDef(
                name=str(_require(p, "name", where)),
                lo=float(_require(p, "lo", where)),
                hi=float(_require(p, "hi", where)),
                unit=str(p.get("unit", "")),
            )
        )
    bb = _require(doc, "blackbox", "scenario config")
    kind = _require(bb, "kind", "blackbox")
    if kind not in _BLACKBOX_KINDS:
        raise ContractViolation(f"blackbox kind must be one of {_BLACKBOX_KINDS}, got {kind!r}")
    return ScenarioConfig(name=str(name), tau=tau, space=ParamSpace(tuple(defs)), blackbox=dict(bb))


def load_scenario_config(path: str | Path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario_config(json.load(fh))


def scenario_config_dict(cfg: ScenarioConfig) -> dict:
    """Round-trippable dict form of a scenario config."""
    return {
        "name": cfg.name,
        "tau": cfg.tau,
        "parameters": [
            {"name": p.name, "lo": p.lo, "hi": p.hi, "unit": p.unit} for p in cfg.space.params
        ],
        "blackbox": dict(cfg.blackbox),
    }
