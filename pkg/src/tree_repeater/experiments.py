"""Figure-level computations shared by the command line tool and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from . import chain, oracle
from .bsm import AdaptiveVariant, BsmStrategy, adaptive_bsm_prob, physical_fusion_prob
from .optimizer import (
    ChainParams,
    EnvelopeExponent,
    Optimum,
    SearchBounds,
    best_trees_by_score,
    enumerate_trees,
    optimize,
)
from .tree_code import BranchingVector, LossProfile

ProfileFn = Callable[[int], LossProfile]


def uniform_profile(eps: float) -> ProfileFn:
    return lambda depth: LossProfile.uniform(eps, depth)


def delayed_profile(eps: float) -> ProfileFn:
    """Level 1 lost with ``eps``; deeper levels see the loss twice."""
    deeper = 1.0 - (1.0 - eps) ** 2
    return lambda depth: LossProfile([eps] + [deeper] * (depth - 1))


@dataclass(frozen=True)
class CurvePoint:
    eps: float
    strategy: BsmStrategy
    label: str
    probability: float
    std_error: float
    tree: BranchingVector | None


def tree_window(min_qubits: int, max_qubits: int, max_depth: int = 3, max_branch: int = 16):
    return enumerate_trees(SearchBounds(max_qubits, max_depth, max_branch, min_qubits=min_qubits))


def best_tree(
    strategy: BsmStrategy,
    profile_fn: ProfileFn,
    trees: Sequence[BranchingVector],
    p_f: float,
    variant: AdaptiveVariant,
    search_samples: int = 20_000,
    seed: int = 0,
) -> tuple[BranchingVector, float]:
    """Tree with the highest BSM success; ties go to fewer qubits, then lexicographic."""

    def score(t: BranchingVector) -> float:
        profile = profile_fn(t.depth)
        if strategy is BsmStrategy.ADAPTIVE:
            return adaptive_bsm_prob(t, profile, p_f, variant)
        return oracle.estimate_bsm(strategy, t, profile, p_f, samples=search_samples, seed=seed).mean

    return best_trees_by_score(trees, score)[0]


def curve_point(
    strategy: BsmStrategy,
    eps: float,
    trees: Sequence[BranchingVector],
    *,
    p_f: float = 0.5,
    variant: AdaptiveVariant = AdaptiveVariant.SYMMETRIZED,
    fixed_tree: BranchingVector | None = None,
    nonuniform: bool = False,
    samples: int = 100_000,
    search_samples: int = 20_000,
    seed: int = 0,
    workers: int = 1,
) -> CurvePoint:
    if strategy is BsmStrategy.PHYSICAL:
        return CurvePoint(eps, strategy, "physical", physical_fusion_prob(eps, p_f), 0.0, None)
    profile_fn = delayed_profile(eps) if nonuniform else uniform_profile(eps)
    label = variant.value if strategy is BsmStrategy.ADAPTIVE else "uniform"
    if nonuniform:
        label += "/nonuniform"
    if fixed_tree is not None:
        tree = fixed_tree
    else:
        tree, _ = best_tree(strategy, profile_fn, trees, p_f, variant, search_samples, seed)
    profile = profile_fn(tree.depth)
    if strategy is BsmStrategy.ADAPTIVE:
        return CurvePoint(eps, strategy, label, adaptive_bsm_prob(tree, profile, p_f, variant), 0.0, tree)
    # fresh seed stream for the reported value so it is independent of the search draws
    est = oracle.estimate_bsm(
        strategy, tree, profile, p_f, samples=samples, seed=seed + 1, workers=workers
    )
    return CurvePoint(eps, strategy, label, est.mean, est.std_error, tree)


def adaptive_crossover(
    trees: Sequence[BranchingVector],
    p_f: float = 0.5,
    variant: AdaptiveVariant = AdaptiveVariant.SYMMETRIZED,
    profile: Callable[[float], ProfileFn] = uniform_profile,
    step: float = 0.005,
    tol: float = 1e-12,
) -> float | None:
    """Smallest loss at which no tree's adaptive BSM beats fusing two bare qubits."""

    def better(eps: float) -> bool:
        fn = profile(eps)
        phys = physical_fusion_prob(eps, p_f)
        return any(adaptive_bsm_prob(t, fn(t.depth), p_f, variant) > phys + tol for t in trees)

    prev, eps = 0.0, step
    while eps <= 1.0:
        if not better(eps):
            lo, hi = prev, eps
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if better(mid) else (lo, mid)
            return 0.5 * (lo + hi)
        prev, eps = eps, eps + step
    return None


@dataclass(frozen=True)
class ProtocolEnvelope:
    strategy: BsmStrategy
    optimum: Optimum
    points: list[chain.RatePoint]
    fit: chain.ExponentFit | None
    crossover_km: float | None


def protocol_envelope(
    strategy: BsmStrategy,
    params: ChainParams,
    L_grid: Sequence[float],
    n_set: Sequence[int],
    *,
    budget: int | None = None,
    m_set: Sequence[int] = tuple(range(1, 33)),
    max_depth: int = 3,
    max_branch: int = 16,
    objective=None,
    fixed: Optimum | None = None,
) -> ProtocolEnvelope:
    """Choose a configuration (or take ``fixed``) and sweep its envelope over ``n_set``."""
    if fixed is None:
        bounds = SearchBounds(budget, max_depth, max_branch, n_set=tuple(n_set), m_set=tuple(m_set))
        objective = objective or EnvelopeExponent(tuple(L_grid))
        fixed = optimize(objective, bounds, strategy, params)
    cache = chain.OracleCache(samples=params.samples, seed=params.seed)
    template = fixed.chain_config(strategy, params, L=1.0, n=1)
    points = chain.envelope(template, L_grid, n_set, rate_fn=lambda c: chain.rate(c, cache=cache))
    try:
        fit = chain.fit_exponent(points)
    except ValueError:
        fit = None
    positive = [p for p in points if p.L > 0]
    crossing = chain.crossover_distance(positive, params.alpha_db_per_km) if positive else None
    return ProtocolEnvelope(strategy, fixed, points, fit, crossing)

