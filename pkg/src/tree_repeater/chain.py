"""Repeater-chain rates in ebits per optical mode.

``n`` equidistant repeaters split a channel of length ``L`` into ``n + 1``
segments; link photons meet at minor nodes halfway along each segment.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import oracle
from .bsm import (
    DEFAULT_P_FUSION,
    AdaptiveVariant,
    BsmStrategy,
    adaptive_bsm_prob,
    link_modes,
)
from .tree_code import BranchingVector, LossProfile, logical_x_prob, logical_z_prob

DEFAULT_ALPHA_DB_PER_KM = 0.2
DEFAULT_ORACLE_SAMPLES = 100_000


class UnboundedRate(ValueError):
    """Raised when the channel is lossless and the repeaterless rate diverges."""


@dataclass(frozen=True)
class ChainConfig:
    L: float
    n: int
    m: int
    b_in: BranchingVector
    b_link: BranchingVector | None = None
    eta_gen: float = 1.0
    alpha_db_per_km: float = DEFAULT_ALPHA_DB_PER_KM
    p_f: float = DEFAULT_P_FUSION
    strategy: BsmStrategy = BsmStrategy.PHYSICAL
    variant: AdaptiveVariant = AdaptiveVariant.AS_PRINTED

    def __post_init__(self):
        if self.L < 0:
            raise ValueError(f"distance must be >= 0, got {self.L}")
        if self.n < 1 or self.m < 1:
            raise ValueError(f"n and m must be >= 1, got n={self.n}, m={self.m}")
        if not 0.0 < self.eta_gen <= 1.0:
            raise ValueError(f"eta_gen must be in (0, 1], got {self.eta_gen}")
        if self.alpha_db_per_km <= 0:
            raise ValueError("fiber loss must be positive")
        if not 0.0 <= self.p_f <= 1.0:
            raise ValueError(f"p_f must be in [0, 1], got {self.p_f}")
        encoded = self.strategy is not BsmStrategy.PHYSICAL
        if encoded and self.b_link is None:
            raise ValueError(f"strategy {self.strategy.value} needs b_link")
        if not encoded and self.b_link is not None:
            raise ValueError("physical link qubits take no b_link")

    def with_(self, **changes) -> "ChainConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class RatePoint:
    L: float
    n: int
    rate: float
    config: ChainConfig | None = field(default=None, compare=False)


@dataclass(frozen=True)
class LinkLossModel:
    eps_repeater: float
    eta_link: float
    inner_profile: LossProfile
    link_profile: LossProfile | None


@dataclass(frozen=True)
class ExponentFit:
    s: float
    intercept: float


def transmissivity(L: float, alpha_db_per_km: float = DEFAULT_ALPHA_DB_PER_KM) -> float:
    if L < 0:
        raise ValueError(f"distance must be >= 0, got {L}")
    return 10.0 ** (-alpha_db_per_km * L / 10.0)


def repeaterless_rate(L: float, alpha_db_per_km: float = DEFAULT_ALPHA_DB_PER_KM) -> float:
    """Direct-transmission capacity ``-log2(1 - eta)`` of a pure-loss channel."""
    eta = transmissivity(L, alpha_db_per_km)
    if eta >= 1.0:
        raise UnboundedRate(f"repeaterless rate is unbounded at L={L}")
    return -math.log1p(-eta) / math.log(2.0)


def link_loss_model(cfg: ChainConfig) -> LinkLossModel:
    eta = transmissivity(cfg.L, cfg.alpha_db_per_km)
    segments = cfg.n + 1
    eps = 1.0 - cfg.eta_gen * eta ** (1.0 / segments)
    eta_link = cfg.eta_gen * eta ** (1.0 / (2 * segments))
    inner = LossProfile.uniform(eps, cfg.b_in.depth)
    if cfg.strategy is BsmStrategy.PHYSICAL:
        link = None
    elif cfg.strategy is BsmStrategy.ADAPTIVE:
        # only level 1 travels; deeper qubits wait at the repeater
        link = LossProfile([1.0 - eta_link] + [eps] * (cfg.b_link.depth - 1))
    else:
        link = LossProfile.uniform(1.0 - eta_link, cfg.b_link.depth)
    return LinkLossModel(eps, eta_link, inner, link)


def physical_link_success(cfg: ChainConfig) -> float:
    if cfg.strategy is not BsmStrategy.PHYSICAL:
        raise ValueError("physical_link_success applies to unencoded link qubits only")
    eta = transmissivity(cfg.L, cfg.alpha_db_per_km)
    return cfg.eta_gen**2 * eta ** (1.0 / (cfg.n + 1)) * cfg.p_f


class OracleCache:
    """Thread-safe memo of sampled link-BSM probabilities."""

    def __init__(self, samples: int = DEFAULT_ORACLE_SAMPLES, seed: int = 0, exact: bool = False):
        self.samples = samples
        self.seed = seed
        self.exact = exact
        self._lock = threading.Lock()
        self._values: dict[tuple, float] = {}

    def __len__(self) -> int:
        return len(self._values)

    def get(
        self,
        strategy: BsmStrategy,
        b_link: BranchingVector,
        profile: LossProfile,
        p_f: float,
    ) -> float:
        key = (strategy, b_link, profile, p_f, self.samples, self.seed, self.exact)
        with self._lock:
            if key in self._values:
                return self._values[key]
        if self.exact:
            value = oracle.exact_bsm_prob(strategy, b_link, profile, p_f)
        else:
            value = oracle.estimate_bsm(
                strategy, b_link, profile, p_f, samples=self.samples, seed=self.seed
            ).mean
        with self._lock:
            self._values[key] = value
        return value


_default_cache = OracleCache()


def link_bsm_prob(cfg: ChainConfig, cache: OracleCache | None = None) -> float:
    """Success probability of one link BSM between neighbouring repeaters."""
    if cfg.strategy is BsmStrategy.PHYSICAL:
        return physical_link_success(cfg)
    model = link_loss_model(cfg)
    if cfg.strategy is BsmStrategy.ADAPTIVE:
        return adaptive_bsm_prob(cfg.b_link, model.link_profile, cfg.p_f, cfg.variant)
    if cache is None:
        cache = _default_cache
    return cache.get(cfg.strategy, cfg.b_link, model.link_profile, cfg.p_f)


def rate_from_parts(p_x: float, p_z: float, p_link: float, n: int, m: int, modes: int) -> float:
    """``p_x^{2n} p_z^{2(m-1)n} [1-(1-p_link)^m]^{n+1} / (m * modes)``."""
    link = 1.0 - (1.0 - p_link) ** m
    return p_x ** (2 * n) * p_z ** (2 * (m - 1) * n) * link ** (n + 1) / (m * modes)


def rate(
    cfg: ChainConfig,
    *,
    link_prob: float | None = None,
    cache: OracleCache | None = None,
) -> float:
    """End-to-end entanglement rate in ebits/mode.

    ``link_prob`` overrides the link-BSM success probability.
    """
    model = link_loss_model(cfg)
    p_x = logical_x_prob(cfg.b_in, model.inner_profile)
    p_z = logical_z_prob(cfg.b_in, model.inner_profile)
    p_link = link_bsm_prob(cfg, cache) if link_prob is None else link_prob
    return rate_from_parts(p_x, p_z, p_link, cfg.n, cfg.m, link_modes(cfg.strategy, cfg.b_link))


def envelope(
    template: ChainConfig,
    L_grid: Iterable[float],
    n_set: Iterable[int],
    *,
    rate_fn: Callable[[ChainConfig], float] | None = None,
) -> list[RatePoint]:
    """Best rate over repeater counts at each distance (ties go to the smaller n)."""
    L_values = sorted(float(L) for L in L_grid)
    ns = sorted(set(int(n) for n in n_set))
    if not L_values or not ns:
        raise ValueError("envelope needs non-empty distance and repeater grids")
    rate_fn = rate_fn or rate
    points = []
    for L in L_values:
        best: RatePoint | None = None
        for n in ns:
            cfg = template.with_(L=L, n=n)
            r = rate_fn(cfg)
            if best is None or r > best.rate:
                best = RatePoint(L, n, r, cfg)
        points.append(best)
    return points


def fit_exponent(points: Sequence[RatePoint]) -> ExponentFit:
    """Least-squares fit of ``ln R = intercept - s L`` over points with positive rate."""
    usable = [(p.L, p.rate) for p in points if p.rate > 0]
    if len(usable) < 2:
        raise ValueError("need at least two points with positive rate to fit an exponent")
    L = np.array([u[0] for u in usable])
    log_r = np.log(np.array([u[1] for u in usable]))
    slope, intercept = np.polyfit(L, log_r, 1)
    return ExponentFit(float(-slope), float(intercept))


def crossover_distance(points: Sequence[RatePoint], alpha_db_per_km: float) -> float | None:
    """First grid distance from which the envelope stays above the repeaterless rate."""
    above = [p.rate > repeaterless_rate(p.L, alpha_db_per_km) for p in points]
    for i, p in enumerate(points):
        if all(above[i:]):
            return p.L
    return None
