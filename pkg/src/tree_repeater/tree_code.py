"""Regular tree codes: qubit counting and loss-tolerant Pauli measurement probabilities.

Levels are counted from the root (level 0). The root is consumed when a qubit is
encoded, so loss parameters exist only for levels ``1..depth``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence


@dataclass(frozen=True)
class BranchingVector:
    """Shape of a regular tree: ``branches[k]`` children for every qubit on level k."""

    branches: tuple[int, ...]

    def __init__(self, branches: Iterable[int]):
        values = tuple(int(b) for b in branches)
        if not values:
            raise ValueError("branching vector must be non-empty")
        if any(b < 1 for b in values):
            raise ValueError(f"branching entries must be >= 1, got {list(values)}")
        object.__setattr__(self, "branches", values)

    @classmethod
    def parse(cls, text: str) -> "BranchingVector":
        """Parse ``"3,2"`` or ``"[3, 2]"``."""
        body = text.strip().strip("[]")
        return cls(int(tok) for tok in body.replace(" ", "").split(",") if tok)

    @property
    def depth(self) -> int:
        return len(self.branches)

    def branch(self, k: int) -> int:
        """Children per qubit on level ``k``; zero at and below the leaves."""
        if k < 0:
            raise ValueError(f"negative level {k}")
        return self.branches[k] if k < len(self.branches) else 0

    def level_sizes(self) -> list[int]:
        """Qubit counts on levels 1..depth."""
        sizes, count = [], 1
        for b in self.branches:
            count *= b
            sizes.append(count)
        return sizes

    def __len__(self) -> int:
        return len(self.branches)

    def __iter__(self):
        return iter(self.branches)

    def __str__(self) -> str:
        return "[" + ",".join(str(b) for b in self.branches) + "]"


@dataclass(frozen=True)
class LossProfile:
    """Loss probability of every qubit on each level 1..depth (``per_level[0]`` is level 1)."""

    per_level: tuple[float, ...]

    def __init__(self, per_level: Iterable[float]):
        values = tuple(float(e) for e in per_level)
        if not values:
            raise ValueError("loss profile must be non-empty")
        for e in values:
            if not 0.0 <= e <= 1.0:
                raise ValueError(f"loss probability {e} outside [0, 1]")
        object.__setattr__(self, "per_level", values)

    @classmethod
    def uniform(cls, eps: float, depth: int) -> "LossProfile":
        if depth < 1:
            raise ValueError("depth must be >= 1")
        return cls([eps] * depth)

    @property
    def depth(self) -> int:
        return len(self.per_level)

    def loss(self, k: int) -> float:
        """Loss probability on level ``k`` (1-based)."""
        if not 1 <= k <= len(self.per_level):
            raise ValueError(f"level {k} outside 1..{len(self.per_level)}")
        return self.per_level[k - 1]

    def survival(self, k: int) -> float:
        return 1.0 - self.loss(k)


def _check(b: BranchingVector, profile: LossProfile) -> None:
    if profile.depth != b.depth:
        raise ValueError(
            f"loss profile has {profile.depth} levels but tree {b} has depth {b.depth}"
        )


def num_qubits(b: BranchingVector) -> int:
    """Number of qubits in the tree, root excluded."""
    return sum(b.level_sizes())


@lru_cache(maxsize=4096)
def _xi_table(branches: tuple[int, ...], eps: tuple[float, ...]) -> tuple[float, ...]:
    depth = len(branches)

    def b(k: int) -> int:
        return branches[k] if k < depth else 0

    xi = [0.0] * (depth + 1)
    for k in range(depth - 1, -1, -1):
        eta_next = 1.0 - eps[k]  # level k+1
        if b(k + 1) == 0:
            grandchildren = 1.0
        else:
            e2 = eps[k + 1]
            xi2 = xi[k + 2] if k + 2 <= depth else 0.0
            grandchildren = (1.0 - e2 + e2 * xi2) ** b(k + 1)
        xi[k] = 1.0 - (1.0 - eta_next * grandchildren) ** b(k)
    return tuple(xi)


def xi_table(b: BranchingVector, profile: LossProfile) -> tuple[float, ...]:
    """Indirect-Z success probabilities for every level ``0..depth``."""
    _check(b, profile)
    return _xi_table(b.branches, profile.per_level)


def indirect_z_prob(b: BranchingVector, profile: LossProfile, k: int) -> float:
    """Probability that the Z outcome of a level-``k`` qubit is recovered indirectly."""
    if not 0 <= k <= b.depth:
        raise ValueError(f"level {k} outside 0..{b.depth}")
    return xi_table(b, profile)[k]


def z_prob(b: BranchingVector, profile: LossProfile, k: int) -> float:
    """Direct-or-indirect Z measurement success on a level-``k`` qubit (k >= 1)."""
    if not 1 <= k <= b.depth:
        raise ValueError(f"level {k} outside 1..{b.depth}")
    eps = profile.loss(k)
    return 1.0 - eps + eps * xi_table(b, profile)[k]


def logical_z_prob(b: BranchingVector, profile: LossProfile) -> float:
    return z_prob(b, profile, 1) ** b.branches[0]


def logical_x_prob(b: BranchingVector, profile: LossProfile) -> float:
    return xi_table(b, profile)[0]


def as_branching(value: BranchingVector | Sequence[int] | str) -> BranchingVector:
    if isinstance(value, BranchingVector):
        return value
    if isinstance(value, str):
        return BranchingVector.parse(value)
    return BranchingVector(value)
