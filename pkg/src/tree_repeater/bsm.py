"""Closed-form logical Bell-state measurement on two identical tree codes.

The adaptive scheme fuses level-1 pairs one at a time and stops at the first
fusion success. Two readings of its success probability are provided:

* ``AS_PRINTED`` charges the child and remaining-level-1 Z measurements once.
* ``SYMMETRIZED`` charges them on both trees, which is what the measurement
  sequence actually requires (confirmed by exact enumeration in ``oracle``).
"""
from __future__ import annotations

import enum
import math
import sys

from .tree_code import BranchingVector, LossProfile, num_qubits, xi_table, z_prob

DEFAULT_P_FUSION = 0.5


class BsmStrategy(enum.Enum):
    PHYSICAL = "physical"
    ADAPTIVE = "adaptive"
    STATIC = "static"
    DYNAMIC = "dynamic"

    @classmethod
    def parse(cls, text: str) -> "BsmStrategy":
        return cls(text.strip().lower())


class AdaptiveVariant(enum.Enum):
    AS_PRINTED = "as-printed"
    SYMMETRIZED = "symmetrized"

    @classmethod
    def parse(cls, text: str) -> "AdaptiveVariant":
        return cls(text.strip().lower().replace("_", "-"))

    @property
    def sides(self) -> int:
        return 2 if self is AdaptiveVariant.SYMMETRIZED else 1


def _check_inputs(b: BranchingVector, profile: LossProfile, p_f: float) -> None:
    if profile.depth != b.depth:
        raise ValueError(f"loss profile depth {profile.depth} != tree depth {b.depth}")
    if not 0.0 <= p_f <= 1.0:
        raise ValueError(f"fusion success probability {p_f} outside [0, 1]")


def physical_fusion_prob(eps: float, p_f: float = DEFAULT_P_FUSION) -> float:
    """Fusion success on two unencoded qubits, each lost with probability ``eps``."""
    return (1.0 - eps) ** 2 * p_f


def x_pair_prob(
    b_link: BranchingVector,
    profile: LossProfile,
    p_f: float = DEFAULT_P_FUSION,
    variant: AdaptiveVariant = AdaptiveVariant.AS_PRINTED,
) -> float:
    """Fusion success on one level-1 pair followed by Z on all the pair's children."""
    _check_inputs(b_link, profile, p_f)
    eta1 = profile.survival(1)
    b1 = b_link.branch(1)
    children = z_prob(b_link, profile, 2) ** (variant.sides * b1) if b1 else 1.0
    return eta1 * eta1 * p_f * children


def _binomial(n: int, k: int) -> float:
    c = math.comb(n, k)
    if c > sys.float_info.max:
        raise OverflowError(f"C({n},{k}) does not fit in a double")
    return float(c)


def adaptive_bsm_prob(
    b_link: BranchingVector,
    profile: LossProfile,
    p_f: float = DEFAULT_P_FUSION,
    variant: AdaptiveVariant = AdaptiveVariant.AS_PRINTED,
) -> float:
    """Success probability of the adaptive logical BSM."""
    _check_inputs(b_link, profile, p_f)
    eta1_sq = profile.survival(1) ** 2
    xi1 = xi_table(b_link, profile)[1]
    pz1 = z_prob(b_link, profile, 1)
    px_pair = x_pair_prob(b_link, profile, p_f, variant)
    b0 = b_link.branches[0]
    loss, fail = 1.0 - eta1_sq, eta1_sq * (1.0 - p_f)

    total = 0.0
    for i in range(b0):
        # first success on pair i: j of the earlier i pairs lost, the rest failed
        before = 0.0
        for j in range(i + 1):
            before += _binomial(i, j) * loss**j * fail ** (i - j) * xi1 ** (2 * j)
        total += before * px_pair * pz1 ** (variant.sides * (b0 - i - 1))
    return min(max(total, 0.0), 1.0)


def link_modes(strategy: BsmStrategy, b_link: BranchingVector | None = None) -> int:
    """Optical modes consumed by a single link BSM."""
    if strategy is BsmStrategy.PHYSICAL:
        return 2
    if b_link is None:
        raise ValueError(f"strategy {strategy.value} needs a link tree")
    if strategy is BsmStrategy.ADAPTIVE:
        return 2 * b_link.branches[0]
    return 2 * num_qubits(b_link)
