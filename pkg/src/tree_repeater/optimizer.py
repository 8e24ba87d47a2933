"""Exhaustive search over tree shapes and multiplexing under an RGS qubit budget."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import chain, oracle
from .bsm import DEFAULT_P_FUSION, AdaptiveVariant, BsmStrategy, adaptive_bsm_prob, link_modes
from .tree_code import (
    BranchingVector,
    LossProfile,
    logical_x_prob,
    logical_z_prob,
    num_qubits,
)

TIE_TOLERANCE = 1e-12


class InfeasibleSearch(ValueError):
    pass


@dataclass(frozen=True)
class SearchBounds:
    qubit_budget: int
    max_depth: int = 3
    max_branch: int = 16
    n_set: tuple[int, ...] = (1,)
    m_set: tuple[int, ...] = (1,)
    min_qubits: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_set", tuple(sorted(set(int(n) for n in self.n_set))))
        object.__setattr__(self, "m_set", tuple(sorted(set(int(m) for m in self.m_set))))
        for name in ("qubit_budget", "max_depth", "max_branch", "min_qubits"):
            if getattr(self, name) < 1:
                raise InfeasibleSearch(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.n_set or min(self.n_set) < 1:
            raise InfeasibleSearch(f"n_set must hold positive integers, got {self.n_set}")
        if not self.m_set or min(self.m_set) < 1:
            raise InfeasibleSearch(f"m_set must hold positive integers, got {self.m_set}")


def enumerate_trees(bounds: SearchBounds, budget: int | None = None) -> list[BranchingVector]:
    """All regular trees inside the bounds, in lexicographic order of branching vectors."""
    cap = bounds.qubit_budget if budget is None else budget
    found: list[tuple[int, ...]] = []

    def grow(prefix: tuple[int, ...], level_size: int, total: int) -> None:
        if prefix and bounds.min_qubits <= total:
            found.append(prefix)
        if len(prefix) == bounds.max_depth:
            return
        for b in range(1, bounds.max_branch + 1):
            size = level_size * b
            if total + size > cap:
                break
            grow(prefix + (b,), size, total + size)

    grow((), 1, 0)
    return [BranchingVector(t) for t in sorted(found)]


def rgs_size(
    strategy: BsmStrategy, m: int, b_in: BranchingVector, b_link: BranchingVector | None = None
) -> int:
    """Photons in one repeater graph state, tree roots excluded."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if strategy is BsmStrategy.PHYSICAL:
        return 2 * m * num_qubits(b_in) + 2 * m
    if b_link is None:
        raise ValueError(f"strategy {strategy.value} needs b_link")
    return 2 * m * (num_qubits(b_in) + num_qubits(b_link))


# ---------------------------------------------------------------------------
# Objectives


@dataclass(frozen=True)
class ChainParams:
    """Everything a chain configuration needs besides its shape."""

    eta_gen: float = 1.0
    alpha_db_per_km: float = chain.DEFAULT_ALPHA_DB_PER_KM
    p_f: float = DEFAULT_P_FUSION
    variant: AdaptiveVariant = AdaptiveVariant.AS_PRINTED
    samples: int = chain.DEFAULT_ORACLE_SAMPLES
    seed: int = 0


@dataclass(frozen=True)
class BsmProb:
    """Logical-BSM success on a single tree. ``profile_fn`` maps depth to a loss profile."""

    eps: float = 0.0
    profile_fn: Callable[[int], LossProfile] | None = field(default=None, compare=False)

    def profile(self, depth: int) -> LossProfile:
        if self.profile_fn is not None:
            return self.profile_fn(depth)
        return LossProfile.uniform(self.eps, depth)


@dataclass(frozen=True)
class Rate:
    """Best rate over ``bounds.n_set`` at one distance."""

    L: float


@dataclass(frozen=True)
class EnvelopeExponent:
    """Smallest fitted decay constant of the envelope over ``L_grid`` (score is ``-s``)."""

    L_grid: tuple[float, ...]


Objective = Union[BsmProb, Rate, EnvelopeExponent]


@dataclass(frozen=True)
class Optimum:
    score: float
    qubits: int
    tree: BranchingVector | None = None
    b_in: BranchingVector | None = None
    b_link: BranchingVector | None = None
    m: int | None = None
    n: int | None = None

    def chain_config(self, strategy: BsmStrategy, params: ChainParams, L: float, n: int | None = None):
        return chain.ChainConfig(
            L=L,
            n=n if n is not None else self.n,
            m=self.m,
            b_in=self.b_in,
            b_link=self.b_link,
            eta_gen=params.eta_gen,
            alpha_db_per_km=params.alpha_db_per_km,
            p_f=params.p_f,
            strategy=strategy,
            variant=params.variant,
        )


def bsm_score(
    strategy: BsmStrategy, tree: BranchingVector, profile: LossProfile, params: ChainParams
) -> float:
    if strategy is BsmStrategy.ADAPTIVE:
        return adaptive_bsm_prob(tree, profile, params.p_f, params.variant)
    if strategy is BsmStrategy.PHYSICAL:
        raise ValueError("BsmProb objective needs an encoded strategy")
    return oracle.estimate_bsm(
        strategy, tree, profile, params.p_f, samples=params.samples, seed=params.seed
    ).mean


def _pick(candidates: list[Optimum]) -> Optimum:
    best = max(c.score for c in candidates)
    if math.isinf(best) and best < 0:
        tied = candidates
    else:
        tied = [c for c in candidates if c.score >= best - TIE_TOLERANCE * max(1.0, abs(best))]

    def key(c: Optimum):
        parts = [c.qubits]
        for b in (c.tree, c.b_in, c.b_link):
            parts.append(b.branches if b is not None else ())
        parts += [c.m or 0, c.n or 0]
        return tuple(parts)

    return min(tied, key=key)


def _optimize_bsm(objective: BsmProb, bounds: SearchBounds, strategy, params) -> Optimum:
    trees = enumerate_trees(bounds)
    if not trees:
        raise InfeasibleSearch(
            f"no tree fits qubit_budget={bounds.qubit_budget} with min_qubits={bounds.min_qubits}"
        )
    candidates = [
        Optimum(bsm_score(strategy, t, objective.profile(t.depth), params), num_qubits(t), tree=t)
        for t in trees
    ]
    return _pick(candidates)


# Rate objectives factor into an inner-tree part and a link part, so the scan is
# vectorised over (b_in, b_link) pairs for each (m, n, L).


class _RateTables:
    def __init__(self, strategy: BsmStrategy, bounds: SearchBounds, params: ChainParams):
        self.strategy = strategy
        self.bounds = bounds
        self.params = params
        encoded = strategy is not BsmStrategy.PHYSICAL
        smallest_m = min(bounds.m_set)
        cap = bounds.qubit_budget // (2 * smallest_m) - (0 if encoded else 1)
        if cap < 1:
            raise InfeasibleSearch(
                f"qubit_budget={bounds.qubit_budget} cannot hold one tree at m={smallest_m}"
            )
        tree_bounds = SearchBounds(cap, bounds.max_depth, bounds.max_branch)
        self.trees = enumerate_trees(tree_bounds)
        self.sizes = np.array([num_qubits(t) for t in self.trees])
        self.links = self.trees if encoded else [None]
        self.link_sizes = self.sizes if encoded else np.array([0])
        self.link_modes = np.array([link_modes(strategy, u) for u in self.links], dtype=float)
        self._cache = chain.OracleCache(samples=params.samples, seed=params.seed)

    def _template(self, L: float, n: int, tree: BranchingVector, link) -> chain.ChainConfig:
        return chain.ChainConfig(
            L=L, n=n, m=1, b_in=tree, b_link=link,
            eta_gen=self.params.eta_gen, alpha_db_per_km=self.params.alpha_db_per_km,
            p_f=self.params.p_f, strategy=self.strategy, variant=self.params.variant,
        )

    def inner_logs(self, L: float, n: int) -> tuple[np.ndarray, np.ndarray]:
        lx = np.empty(len(self.trees))
        lz = np.empty(len(self.trees))
        with np.errstate(divide="ignore"):
            for i, t in enumerate(self.trees):
                prof = chain.link_loss_model(self._template(L, n, t, self.links[0])).inner_profile
                lx[i] = np.log(logical_x_prob(t, prof))
                lz[i] = np.log(logical_z_prob(t, prof))
        return lx, lz

    def link_probs(self, L: float, n: int) -> np.ndarray:
        return np.array(
            [chain.link_bsm_prob(self._template(L, n, self.trees[0], u), self._cache) for u in self.links]
        )

    def capacity(self, m: int) -> int:
        if self.strategy is BsmStrategy.PHYSICAL:
            return self.bounds.qubit_budget // (2 * m) - 1
        return self.bounds.qubit_budget // (2 * m)

    def log_rates(self, m: int, n: int, lx, lz, p_link) -> np.ndarray:
        """Matrix of log rates indexed by (inner tree, link tree); infeasible pairs are NaN."""
        inner = 2 * n * lx + 2 * (m - 1) * n * lz
        with np.errstate(divide="ignore"):
            link = (n + 1) * np.log1p(-((1.0 - p_link) ** m)) - np.log(m * self.link_modes)
        out = inner[:, None] + link[None, :]
        feasible = self.sizes[:, None] + self.link_sizes[None, :] <= self.capacity(m)
        out[~feasible] = np.nan
        return out

    def optimum(self, score: float, m: int, n: int | None, i: int, j: int) -> Optimum:
        b_in, b_link = self.trees[i], self.links[j]
        return Optimum(
            score, rgs_size(self.strategy, m, b_in, b_link), b_in=b_in, b_link=b_link, m=m, n=n
        )


def _tied_indices(matrix: np.ndarray, best: float) -> list[tuple[int, int]]:
    if np.isneginf(best):
        mask = np.isneginf(matrix)
    else:
        mask = matrix >= best - TIE_TOLERANCE * max(1.0, abs(best))
    return [tuple(ix) for ix in np.argwhere(mask)]


def _optimize_rate(objective: Rate, bounds: SearchBounds, strategy, params) -> Optimum:
    tables = _RateTables(strategy, bounds, params)
    candidates: list[Optimum] = []
    for n in bounds.n_set:
        lx, lz = tables.inner_logs(objective.L, n)
        p_link = tables.link_probs(objective.L, n)
        for m in bounds.m_set:
            if tables.capacity(m) < 1:
                continue
            logs = tables.log_rates(m, n, lx, lz, p_link)
            if np.all(np.isnan(logs)):
                continue
            best = np.nanmax(logs)
            for i, j in _tied_indices(logs, best):
                candidates.append(tables.optimum(float(np.exp(best)), m, n, i, j))
    if not candidates:
        raise InfeasibleSearch(f"no configuration fits qubit_budget={bounds.qubit_budget}")
    return _pick(candidates)


def _optimize_exponent(objective: EnvelopeExponent, bounds: SearchBounds, strategy, params) -> Optimum:
    L_grid = np.array(sorted(objective.L_grid), dtype=float)
    if len(L_grid) < 2:
        raise ValueError("EnvelopeExponent needs at least two distances")
    tables = _RateTables(strategy, bounds, params)
    per_L = []
    for L in L_grid:
        per_n = []
        for n in bounds.n_set:
            per_n.append((n, *tables.inner_logs(L, n), tables.link_probs(L, n)))
        per_L.append(per_n)

    candidates: list[Optimum] = []
    centred = L_grid - L_grid.mean()
    for m in bounds.m_set:
        if tables.capacity(m) < 1:
            continue
        env = None
        for per_n in per_L:
            stack = np.stack([tables.log_rates(m, n, lx, lz, p) for n, lx, lz, p in per_n])
            best_n = np.max(stack, axis=0)
            env = best_n[None] if env is None else np.concatenate([env, best_n[None]])
        feasible = ~np.isnan(env[0])
        if not feasible.any():
            continue
        finite = np.all(np.isfinite(env), axis=0)
        slope = np.full(env.shape[1:], np.nan)
        with np.errstate(invalid="ignore"):
            slope[finite] = (np.tensordot(centred, env, axes=(0, 0))[finite]) / (centred @ centred)
        score = slope  # score = -s = slope
        score[feasible & ~finite] = -np.inf
        if np.all(np.isnan(score)):
            continue
        best = np.nanmax(score)
        for i, j in _tied_indices(score, best):
            candidates.append(tables.optimum(float(best), m, None, i, j))
    if not candidates:
        raise InfeasibleSearch(f"no configuration fits qubit_budget={bounds.qubit_budget}")
    return _pick(candidates)


def optimize(
    objective: Objective,
    bounds: SearchBounds,
    strategy: BsmStrategy,
    params: ChainParams | None = None,
) -> Optimum:
    """Exhaustive maximiser of ``objective``; ties go to fewer qubits, then lexicographic."""
    params = params or ChainParams()
    if isinstance(objective, BsmProb):
        return _optimize_bsm(objective, bounds, strategy, params)
    if isinstance(objective, Rate):
        return _optimize_rate(objective, bounds, strategy, params)
    if isinstance(objective, EnvelopeExponent):
        return _optimize_exponent(objective, bounds, strategy, params)
    raise TypeError(f"unknown objective {objective!r}")


def evaluate(
    objective: Objective,
    optimum: Optimum,
    strategy: BsmStrategy,
    bounds: SearchBounds,
    params: ChainParams | None = None,
) -> float:
    """Re-evaluate ``objective`` on one configuration through the public rate functions."""
    params = params or ChainParams()
    if isinstance(objective, BsmProb):
        return bsm_score(strategy, optimum.tree, objective.profile(optimum.tree.depth), params)
    cache = chain.OracleCache(samples=params.samples, seed=params.seed)

    def rate_fn(cfg):
        return chain.rate(cfg, cache=cache)

    template = optimum.chain_config(strategy, params, L=1.0, n=1)
    if isinstance(objective, Rate):
        return max(rate_fn(template.with_(L=objective.L, n=n)) for n in bounds.n_set)
    points = chain.envelope(template, objective.L_grid, bounds.n_set, rate_fn=rate_fn)
    if any(p.rate <= 0 for p in points):
        return -math.inf
    return -chain.fit_exponent(points).s


def best_trees_by_score(
    trees: Sequence[BranchingVector], score: Callable[[BranchingVector], float]
) -> list[tuple[BranchingVector, float]]:
    """Trees sorted best first with the same tie rules as ``optimize``."""
    scored = [(t, score(t)) for t in trees]
    return sorted(scored, key=lambda ts: (-ts[1], num_qubits(ts[0]), ts[0].branches))
