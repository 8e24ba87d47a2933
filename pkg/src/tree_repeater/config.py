"""JSON experiment files for the command line tool.

Every key is optional; unknown keys are rejected. Grids accept either an
explicit list or ``{"start": a, "stop": b, "num": k}`` (inclusive, evenly
spaced); integer sets accept a list or ``{"start": a, "stop": b}`` (inclusive).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .bsm import AdaptiveVariant, BsmStrategy
from .tree_code import BranchingVector


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TreeSearch:
    min_qubits: int = 25
    max_qubits: int = 35
    max_depth: int = 3
    max_branch: int = 16
    search_samples: int = 20_000


@dataclass(frozen=True)
class OracleSettings:
    samples: int = 100_000
    seed: int = 0
    workers: int = 1
    exact: bool = False


@dataclass(frozen=True)
class Objective:
    kind: str = "rate"  # bsm | rate | exponent
    L: float = 1000.0


@dataclass(frozen=True)
class ExperimentSpec:
    strategies: tuple[str, ...] = ("physical", "adaptive", "static", "dynamic")
    variant: str = "as-printed"
    p_f: float = 0.5
    eta_gen: float = 1.0
    alpha_db_per_km: float = 0.2
    eps_grid: tuple[float, ...] = tuple(np.round(np.linspace(0.0, 0.5, 26), 10))
    L_grid: tuple[float, ...] = tuple(float(x) for x in range(100, 1001, 100))
    n_set: tuple[int, ...] = tuple(range(1, 17))
    m_set: tuple[int, ...] = tuple(range(1, 33))
    qubit_budget: int = 30
    budgets: dict = field(
        default_factory=lambda: {"physical": 406, "adaptive": 354, "static": 348, "dynamic": 342}
    )
    trees: dict = field(default_factory=dict)
    configs: dict = field(default_factory=dict)
    tree_search: TreeSearch = TreeSearch()
    nonuniform_adaptive: bool = False
    objective: Objective = Objective()
    validate_trees: tuple[tuple[int, ...], ...] = ((2,), (2, 2), (3, 2), (2, 2, 2))
    oracle: OracleSettings = OracleSettings()
    out: str | None = None

    # ----- typed accessors
    @property
    def strategy_list(self) -> list[BsmStrategy]:
        return [BsmStrategy.parse(s) for s in self.strategies]

    @property
    def adaptive_variant(self) -> AdaptiveVariant:
        return AdaptiveVariant.parse(self.variant)

    def tree_for(self, strategy: BsmStrategy) -> BranchingVector | None:
        value = self.trees.get(strategy.value)
        return None if value is None else BranchingVector(value)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


_NESTED = {"tree_search": TreeSearch, "oracle": OracleSettings, "objective": Objective}


def _grid(name: str, value: Any, integer: bool) -> tuple:
    if isinstance(value, dict):
        allowed = {"start", "stop"} if integer else {"start", "stop", "num"}
        extra = set(value) - allowed
        if extra or not {"start", "stop"} <= set(value):
            raise ConfigError(f"{name}: expected keys {sorted(allowed)}, got {sorted(value)}")
        if integer:
            return tuple(range(int(value["start"]), int(value["stop"]) + 1))
        num = int(value.get("num", 2))
        return tuple(float(x) for x in np.linspace(value["start"], value["stop"], num))
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{name}: expected a non-empty list or a range object")
    try:
        return tuple(int(v) for v in value) if integer else tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _nested(name: str, cls, value: Any):
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(value) - known
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    return cls(**value)


def _validate(spec: ExperimentSpec) -> ExperimentSpec:
    try:
        spec.strategy_list
        spec.adaptive_variant
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not 0.0 <= spec.p_f <= 1.0:
        raise ConfigError(f"p_f must lie in [0, 1], got {spec.p_f}")
    if not 0.0 < spec.eta_gen <= 1.0:
        raise ConfigError(f"eta_gen must lie in (0, 1], got {spec.eta_gen}")
    if spec.alpha_db_per_km <= 0:
        raise ConfigError("alpha_db_per_km must be positive")
    if any(not 0.0 <= e <= 1.0 for e in spec.eps_grid):
        raise ConfigError("eps_grid values must lie in [0, 1]")
    if any(L < 0 for L in spec.L_grid):
        raise ConfigError("L_grid values must be non-negative")
    if any(n < 1 for n in spec.n_set) or any(m < 1 for m in spec.m_set):
        raise ConfigError("n_set and m_set must hold positive integers")
    if spec.oracle.samples < 1:
        raise ConfigError("oracle.samples must be >= 1")
    if spec.objective.kind not in ("bsm", "rate", "exponent"):
        raise ConfigError(f"objective.kind must be bsm, rate or exponent, got {spec.objective.kind}")
    for key in list(spec.trees) + list(spec.budgets) + list(spec.configs):
        try:
            BsmStrategy.parse(key)
        except ValueError as exc:
            raise ConfigError(f"unknown strategy key {key!r}") from exc
    try:
        for value in spec.trees.values():
            BranchingVector(value)
        for value in spec.validate_trees:
            BranchingVector(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad branching vector: {exc}") from exc
    for key, cfg in spec.configs.items():
        if not isinstance(cfg, dict) or set(cfg) - {"m", "b_in", "b_link"}:
            raise ConfigError(f"configs.{key}: expected keys m, b_in, b_link")
    return spec


def load_spec(data: dict[str, Any] | None = None, **overrides) -> ExperimentSpec:
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentSpec)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _NESTED:
            if not isinstance(value, _NESTED[key]):
                value = _nested(key, _NESTED[key], value)
        elif key in ("eps_grid", "L_grid"):
            value = _grid(key, value, integer=False)
        elif key in ("n_set", "m_set"):
            value = _grid(key, value, integer=True)
        elif key == "strategies":
            value = tuple(str(v) for v in value)
        elif key == "validate_trees":
            value = tuple(tuple(int(b) for b in t) for t in value)
        elif key in ("budgets", "trees", "configs") and not isinstance(value, dict):
            raise ConfigError(f"{key}: expected an object")
        kwargs[key] = value
    try:
        spec = ExperimentSpec(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return _validate(spec)


def read_spec(path: str | Path | None, **overrides) -> ExperimentSpec:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    return load_spec(data, **overrides)


def with_oracle(spec: ExperimentSpec, **changes) -> ExperimentSpec:
    changes = {k: v for k, v in changes.items() if v is not None}
    return replace(spec, oracle=replace(spec.oracle, **changes)) if changes else spec
