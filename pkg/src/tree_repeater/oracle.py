"""Ground truth for logical BSM success: sampling and exact enumeration.

Every strategy is written once as a scalar decision procedure that asks a
randomness source for Bernoulli draws keyed by the physical variable they
represent (a qubit's survival, a fusion's coin). Drawing through a keyed cache
means each qubit is sampled once and reused by every measurement that touches it.

* ``simulate_bsm`` runs the procedure against a seeded generator.
* ``exact_bsm_prob`` runs it against a depth-first enumerator that replays the
  procedure once per reachable leaf of its decision tree, so unreached
  variables never enlarge the state space.
* ``estimate_bsm`` is a batched numpy version of the same decision rules, used
  for the large sample counts the rate pipeline needs.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Hashable

import numpy as np

from .bsm import DEFAULT_P_FUSION, AdaptiveVariant, BsmStrategy
from .tree_code import BranchingVector, LossProfile

ENUMERATION_LIMIT = 10**7
CHUNK_SAMPLES = 1 << 14

A, B = 0, 1


class FusionOutcome(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    LOSS = "loss"


class EnumerationTooLarge(RuntimeError):
    def __init__(self, visited: int, limit: int):
        super().__init__(
            f"exact enumeration exceeded {limit} leaves (visited {visited}); "
            "use estimate_bsm for this tree"
        )
        self.visited = visited
        self.limit = limit


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    samples: int
    seed: int
    successes: int = 0

    @classmethod
    def from_counts(cls, successes: int, samples: int, seed: int) -> "Estimate":
        mean = successes / samples
        return cls(mean, math.sqrt(mean * (1.0 - mean) / samples), samples, seed, successes)


def fusion_outcome_probs(eta_a: float, eta_b: float, p_f: float) -> dict[FusionOutcome, float]:
    both = eta_a * eta_b
    return {
        FusionOutcome.SUCCESS: both * p_f,
        FusionOutcome.FAILURE: both * (1.0 - p_f),
        FusionOutcome.LOSS: 1.0 - both,
    }


# ---------------------------------------------------------------------------
# Randomness sources for the scalar procedures


class _RandomSource:
    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._cache: dict[Hashable, bool] = {}

    def bernoulli(self, key: Hashable, p: float) -> bool:
        try:
            return self._cache[key]
        except KeyError:
            value = bool(self._rng.random() < p)
            self._cache[key] = value
            return value


class _ReplaySource:
    """Follows a recorded path of choices, extending it with ``True`` first."""

    def __init__(self, path: list[list]):
        self._path = path
        self._pos = 0
        self._cache: dict[Hashable, bool] = {}

    def bernoulli(self, key: Hashable, p: float) -> bool:
        try:
            return self._cache[key]
        except KeyError:
            pass
        if self._pos < len(self._path):
            value = self._path[self._pos][0]
        else:
            value = p > 0.0
            self._path.append([value, p])
        self._pos += 1
        self._cache[key] = value
        return value


def _enumerate(procedure: Callable[[object], bool], limit: int) -> float:
    path: list[list] = []
    total = 0.0
    leaves = 0
    while True:
        if procedure(_ReplaySource(path)):
            weight = 1.0
            for value, p in path:
                weight *= p if value else 1.0 - p
            total += weight
        leaves += 1
        if leaves > limit:
            raise EnumerationTooLarge(leaves, limit)
        # backtrack to the deepest draw that can still flip True -> False
        while path:
            value, p = path[-1]
            if value and p < 1.0:
                path[-1][0] = False
                break
            path.pop()
        if not path:
            return total


# ---------------------------------------------------------------------------
# Scalar decision procedures


class _Trees:
    """Two identical trees A and B whose level-k qubits are paired by index."""

    def __init__(self, b: BranchingVector, profile: LossProfile, p_f: float, src):
        self.b = b
        self.eta = (None,) + tuple(1.0 - e for e in profile.per_level)
        self.p_f = p_f
        self.src = src

    def children(self, k: int, i: int) -> range:
        bk = self.b.branch(k)
        return range(i * bk, (i + 1) * bk)

    def survives(self, side: int, k: int, i: int) -> bool:
        return self.src.bernoulli(("q", side, k, i), self.eta[k])

    def zrec(self, side: int, k: int, i: int) -> bool:
        """Z outcome of one qubit, measured directly or recovered indirectly."""
        return self.survives(side, k, i) or self.indirect(side, k, i)

    def indirect(self, side: int, k: int, i: int) -> bool:
        """Some child survives an X measurement and all its children yield Z."""
        if k + 1 > self.b.depth:
            return False
        return any(
            self.survives(side, k + 1, c)
            and all(self.zrec(side, k + 2, g) for g in self.children(k + 1, c))
            for c in self.children(k, i)
        )

    def fuse(self, k: int, i: int) -> FusionOutcome:
        if not (self.survives(A, k, i) and self.survives(B, k, i)):
            return FusionOutcome.LOSS
        if self.src.bernoulli(("f", k, i), self.p_f):
            return FusionOutcome.SUCCESS
        return FusionOutcome.FAILURE

    # static: every pair fused, recovery only through other fusions
    def zz_static(self, k: int, i: int) -> bool:
        if self.fuse(k, i) is not FusionOutcome.LOSS:
            return True
        if k + 1 > self.b.depth:
            return False
        return any(
            self.fuse(k + 1, c) is FusionOutcome.SUCCESS
            and all(self.zz_static(k + 2, g) for g in self.children(k + 1, c))
            for c in self.children(k, i)
        )

    # dynamic: a lost pair's descendants were never fused, so both sides recover alone
    def zz_dynamic(self, k: int, i: int) -> bool:
        if self.fuse(k, i) is not FusionOutcome.LOSS:
            return True
        return self.indirect(A, k, i) and self.indirect(B, k, i)


def _joint_success(t: _Trees, zz: Callable[[int, int], bool]) -> bool:
    level1 = range(t.b.branches[0])
    for v in level1:
        if (
            t.fuse(1, v) is FusionOutcome.SUCCESS
            and all(zz(2, c) for c in t.children(1, v))
            and all(zz(1, u) for u in level1 if u != v)
        ):
            return True
    return False


def _adaptive(t: _Trees, variant: AdaptiveVariant) -> bool:
    b0 = t.b.branches[0]
    sides = (A, B) if variant is AdaptiveVariant.SYMMETRIZED else (A,)
    for i in range(b0):
        outcome = t.fuse(1, i)
        if outcome is FusionOutcome.LOSS:
            if not (t.indirect(A, 1, i) and t.indirect(B, 1, i)):
                return False
        elif outcome is FusionOutcome.SUCCESS:
            return all(
                t.zrec(s, 2, c) for s in sides for c in t.children(1, i)
            ) and all(t.zrec(s, 1, j) for s in sides for j in range(i + 1, b0))
    return False


def _procedure(
    strategy: BsmStrategy,
    b: BranchingVector,
    profile: LossProfile,
    p_f: float,
    variant: AdaptiveVariant,
) -> Callable[[object], bool]:
    if profile.depth != b.depth:
        raise ValueError(f"loss profile depth {profile.depth} != tree depth {b.depth}")
    if not 0.0 <= p_f <= 1.0:
        raise ValueError(f"fusion success probability {p_f} outside [0, 1]")

    def run(src) -> bool:
        t = _Trees(b, profile, p_f, src)
        if strategy is BsmStrategy.PHYSICAL:
            return t.fuse(1, 0) is FusionOutcome.SUCCESS
        if strategy is BsmStrategy.ADAPTIVE:
            return _adaptive(t, variant)
        if strategy is BsmStrategy.STATIC:
            return _joint_success(t, t.zz_static)
        return _joint_success(t, t.zz_dynamic)

    return run


def simulate_bsm(
    strategy: BsmStrategy,
    b: BranchingVector,
    profile: LossProfile,
    p_f: float = DEFAULT_P_FUSION,
    rng: np.random.Generator | None = None,
    variant: AdaptiveVariant = AdaptiveVariant.SYMMETRIZED,
) -> bool:
    """One logical-BSM attempt. ``PHYSICAL`` fuses a single unencoded pair with level-1 loss."""
    if rng is None:
        rng = np.random.default_rng()
    return _procedure(strategy, b, profile, p_f, variant)(_RandomSource(rng))


def exact_bsm_prob(
    strategy: BsmStrategy,
    b: BranchingVector,
    profile: LossProfile,
    p_f: float = DEFAULT_P_FUSION,
    variant: AdaptiveVariant = AdaptiveVariant.SYMMETRIZED,
    limit: int = ENUMERATION_LIMIT,
) -> float:
    """Exact success probability by weighted enumeration of the decision tree."""
    return _enumerate(_procedure(strategy, b, profile, p_f, variant), limit)


# ---------------------------------------------------------------------------
# Batched sampling


def _group(x: np.ndarray, b: int) -> np.ndarray:
    s, n = x.shape
    return x.reshape(s, n // b, b)


def _per_side_z(surv: list[np.ndarray], branches: tuple[int, ...]):
    """Bottom-up Z recoverability (``zrec``) and indirect recovery (``ind``) per level."""
    depth = len(branches)
    zrec: list[np.ndarray | None] = [None] * (depth + 2)
    ind: list[np.ndarray | None] = [None] * (depth + 1)
    ind[depth] = np.zeros_like(surv[depth])
    zrec[depth] = surv[depth]
    for k in range(depth - 1, 0, -1):
        child_ok = surv[k + 1]
        if k + 2 <= depth:
            child_ok = child_ok & _group(zrec[k + 2], branches[k + 1]).all(axis=2)
        ind[k] = _group(child_ok, branches[k]).any(axis=2)
        zrec[k] = surv[k] | ind[k]
    return zrec, ind


def _others_ok(ok: np.ndarray) -> np.ndarray:
    """``out[:, v]`` is True when every column except ``v`` of ``ok`` is True."""
    bad = ~ok
    return (bad.sum(axis=1, keepdims=True) - bad) == 0


def _batch(
    strategy: BsmStrategy,
    b: BranchingVector,
    profile: LossProfile,
    p_f: float,
    variant: AdaptiveVariant,
    rng: np.random.Generator,
    size: int,
) -> np.ndarray:
    branches = b.branches
    depth = b.depth
    sizes = [1] + b.level_sizes()
    etas = [None] + [1.0 - e for e in profile.per_level]
    surv = [[None] * (depth + 1) for _ in (A, B)]
    for side in (A, B):
        for k in range(1, depth + 1):
            surv[side][k] = rng.random((size, sizes[k])) < etas[k]
    coin = [None] + [rng.random((size, sizes[k])) < p_f for k in range(1, depth + 1)]

    if strategy is BsmStrategy.PHYSICAL:
        return surv[A][1][:, 0] & surv[B][1][:, 0] & coin[1][:, 0]

    intact = [None] + [surv[A][k] & surv[B][k] for k in range(1, depth + 1)]
    succ = [None] + [intact[k] & coin[k] for k in range(1, depth + 1)]
    no_children = np.ones((size, sizes[1]), dtype=bool)

    def children_all(x: np.ndarray | None) -> np.ndarray:
        return no_children if x is None else _group(x, branches[1]).all(axis=2)

    if strategy is BsmStrategy.STATIC:
        zz: list[np.ndarray | None] = [None] * (depth + 2)
        zz[depth] = intact[depth]
        for k in range(depth - 1, 0, -1):
            cand = succ[k + 1]
            if k + 2 <= depth:
                cand = cand & _group(zz[k + 2], branches[k + 1]).all(axis=2)
            zz[k] = intact[k] | _group(cand, branches[k]).any(axis=2)
        ok = succ[1] & children_all(zz[2] if depth >= 2 else None) & _others_ok(zz[1])
        return ok.any(axis=1)

    zrec_a, ind_a = _per_side_z(surv[A], branches)
    zrec_b, ind_b = _per_side_z(surv[B], branches)

    if strategy is BsmStrategy.DYNAMIC:
        zzd1 = intact[1] | (ind_a[1] & ind_b[1])
        zzd2 = intact[2] | (ind_a[2] & ind_b[2]) if depth >= 2 else None
        ok = succ[1] & children_all(zzd2) & _others_ok(zzd1)
        return ok.any(axis=1)

    # adaptive
    b0 = branches[0]
    sides = [(zrec_a, ind_a)]
    if variant is AdaptiveVariant.SYMMETRIZED:
        sides.append((zrec_b, ind_b))
    child_z = np.ones((size, b0), dtype=bool)
    if depth >= 2:
        for zrec, _ in sides:
            child_z &= _group(zrec[2], branches[1]).all(axis=2)
    # rest_z[:, i]: all level-1 qubits after i yield Z on the charged sides
    rest_z = np.ones((size, b0 + 1), dtype=bool)
    for i in range(b0 - 1, -1, -1):
        col = rest_z[:, i + 1].copy()
        for zrec, _ in sides:
            col &= zrec[1][:, i]
        rest_z[:, i] = col

    running = np.ones(size, dtype=bool)
    result = np.zeros(size, dtype=bool)
    for i in range(b0):
        lost = running & ~intact[1][:, i]
        running &= ~(lost & ~(ind_a[1][:, i] & ind_b[1][:, i]))
        hit = running & succ[1][:, i]
        result |= hit & child_z[:, i] & rest_z[:, i + 1]
        running &= ~hit
    return result


def _chunk_successes(args) -> int:
    strategy, b, profile, p_f, variant, seed, index, size = args
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    return int(_batch(strategy, b, profile, p_f, variant, rng, size).sum())


def estimate_bsm(
    strategy: BsmStrategy,
    b: BranchingVector,
    profile: LossProfile,
    p_f: float = DEFAULT_P_FUSION,
    samples: int = 100_000,
    seed: int = 0,
    variant: AdaptiveVariant = AdaptiveVariant.SYMMETRIZED,
    workers: int = 1,
) -> Estimate:
    """Monte Carlo success frequency.

    Samples are split into fixed chunks, each with a generator derived from
    ``(seed, chunk index)``; the result does not depend on ``workers``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if profile.depth != b.depth:
        raise ValueError(f"loss profile depth {profile.depth} != tree depth {b.depth}")
    if not 0.0 <= p_f <= 1.0:
        raise ValueError(f"fusion success probability {p_f} outside [0, 1]")
    jobs = []
    for index, start in enumerate(range(0, samples, CHUNK_SAMPLES)):
        size = min(CHUNK_SAMPLES, samples - start)
        jobs.append((strategy, b, profile, p_f, variant, seed, index, size))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            successes = sum(pool.map(_chunk_successes, jobs))
    else:
        successes = sum(map(_chunk_successes, jobs))
    return Estimate.from_counts(successes, samples, seed)


def estimate_indirect_z(
    b: BranchingVector,
    profile: LossProfile,
    k: int,
    samples: int = 100_000,
    seed: int = 0,
) -> Estimate:
    """Sampled frequency with which one level-``k`` qubit's Z outcome is recovered indirectly.

    Level 0 is the (already measured) root, whose indirect Z is the logical X.
    """
    if not 0 <= k <= b.depth:
        raise ValueError(f"level {k} outside 0..{b.depth}")
    if profile.depth != b.depth:
        raise ValueError(f"loss profile depth {profile.depth} != tree depth {b.depth}")
    sizes = [1] + b.level_sizes()
    successes = 0
    for index, start in enumerate(range(0, samples, CHUNK_SAMPLES)):
        size = min(CHUNK_SAMPLES, samples - start)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
        surv = [np.ones((size, 1), dtype=bool)]
        surv += [rng.random((size, sizes[j])) < 1.0 - profile.loss(j) for j in range(1, b.depth + 1)]
        if k == b.depth:
            continue
        if k == 0:
            child_ok = surv[1]
            if b.depth >= 2:
                zrec, _ = _per_side_z(surv, b.branches)
                child_ok = child_ok & _group(zrec[2], b.branches[1]).all(axis=2)
            hit = child_ok.any(axis=1)
        else:
            _, ind = _per_side_z(surv, b.branches)
            hit = ind[k][:, 0]
        successes += int(hit.sum())
    return Estimate.from_counts(successes, samples, seed)
