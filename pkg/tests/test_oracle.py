import itertools
import math

import numpy as np
import pytest

from tree_repeater.bsm import AdaptiveVariant, BsmStrategy, adaptive_bsm_prob, physical_fusion_prob
from tree_repeater.oracle import (
    EnumerationTooLarge,
    Estimate,
    FusionOutcome,
    estimate_bsm,
    exact_bsm_prob,
    fusion_outcome_probs,
    simulate_bsm,
)
from tree_repeater.tree_code import BranchingVector, LossProfile

ADAPTIVE, STATIC, DYNAMIC, PHYSICAL = (
    BsmStrategy.ADAPTIVE,
    BsmStrategy.STATIC,
    BsmStrategy.DYNAMIC,
    BsmStrategy.PHYSICAL,
)
ENCODED = (ADAPTIVE, STATIC, DYNAMIC)


def uni(eps, branches):
    return BranchingVector(branches), LossProfile.uniform(eps, len(branches))


def within(est: Estimate, exact: float, k: float = 4.0) -> bool:
    sigma = math.sqrt(max(exact * (1 - exact), 0.0) / est.samples)
    return abs(est.mean - exact) <= k * sigma + 1e-12


def brute_two_level(strategy, eps, p_f):
    """Full (non-lazy) enumeration for b=[2,2]: every qubit's survival on both sides
    and every pair's fusion coin, then the strategy predicate written out by hand."""
    eta = 1 - eps
    total = 0.0
    # survival bits: side A level1 (2), A level2 (4), B level1 (2), B level2 (4); coins for 6 pairs
    for bits in itertools.product((1, 0), repeat=12):
        w_bits = math.prod(eta if x else eps for x in bits)
        if w_bits == 0.0:
            continue
        a1, a2, b1_, b2 = bits[0:2], bits[2:6], bits[6:8], bits[8:12]
        for coins in itertools.product((1, 0), repeat=6):
            w = w_bits * math.prod(p_f if c else 1 - p_f for c in coins)
            if w == 0.0:
                continue

            def outcome(level, i):
                sa, sb = (a1[i], b1_[i]) if level == 1 else (a2[i], b2[i])
                if not (sa and sb):
                    return FusionOutcome.LOSS
                coin = coins[i] if level == 1 else coins[2 + i]
                return FusionOutcome.SUCCESS if coin else FusionOutcome.FAILURE

            if strategy is STATIC:
                def zz(i):
                    if outcome(1, i) is not FusionOutcome.LOSS:
                        return True
                    return any(outcome(2, c) is FusionOutcome.SUCCESS for c in (2 * i, 2 * i + 1))

                ok = any(
                    outcome(1, v) is FusionOutcome.SUCCESS
                    and all(outcome(2, c) is not FusionOutcome.LOSS for c in (2 * v, 2 * v + 1))
                    and zz(1 - v)
                    for v in (0, 1)
                )
            else:
                def zz(i):
                    o = outcome(1, i)
                    if o is not FusionOutcome.LOSS:
                        return True
                    # children not fused: each side needs a surviving child for its indirect Z
                    return any(a2[2 * i : 2 * i + 2]) and any(b2[2 * i : 2 * i + 2])

                ok = any(
                    outcome(1, v) is FusionOutcome.SUCCESS
                    and all(outcome(2, c) is not FusionOutcome.LOSS for c in (2 * v, 2 * v + 1))
                    and zz(1 - v)
                    for v in (0, 1)
                )
            if ok:
                total += w
    return total


def test_fusion_outcome_probs():
    probs = fusion_outcome_probs(0.9, 0.8, 0.5)
    assert probs[FusionOutcome.SUCCESS] == pytest.approx(0.36)
    assert probs[FusionOutcome.FAILURE] == pytest.approx(0.36)
    assert probs[FusionOutcome.LOSS] == pytest.approx(0.28)
    assert sum(probs.values()) == pytest.approx(1.0)


def test_estimate_std_error():
    est = Estimate.from_counts(250, 1000, 3)
    assert est.mean == 0.25
    assert est.std_error == pytest.approx(math.sqrt(0.25 * 0.75 / 1000))


def test_exact_examples():
    assert exact_bsm_prob(ADAPTIVE, *uni(0, [2]), 0.5) == pytest.approx(0.75, abs=1e-15)
    assert exact_bsm_prob(STATIC, *uni(0, [2, 2]), 0.5) == pytest.approx(0.75, abs=1e-15)
    b, p = uni(0.1, [2, 2])
    exact = exact_bsm_prob(ADAPTIVE, b, p, 0.5)
    matches = [v for v in AdaptiveVariant if abs(adaptive_bsm_prob(b, p, 0.5, v) - exact) < 1e-10]
    assert matches == [AdaptiveVariant.SYMMETRIZED]


@pytest.mark.parametrize("strategy", [STATIC, DYNAMIC])
@pytest.mark.parametrize("eps", [0.0, 0.15, 0.4])
def test_static_dynamic_match_full_enumeration(strategy, eps):
    b, p = uni(eps, [2, 2])
    assert exact_bsm_prob(strategy, b, p, 0.5) == pytest.approx(brute_two_level(strategy, eps, 0.5), abs=1e-12)


@pytest.mark.parametrize("strategy", ENCODED)
def test_lossless_unit_fusion_always_succeeds(strategy):
    rng = np.random.default_rng(1)
    b, p = uni(0.0, [2, 2])
    assert all(simulate_bsm(strategy, b, p, 1.0, rng) for _ in range(200))


@pytest.mark.parametrize("strategy", list(BsmStrategy))
def test_total_loss_always_fails(strategy):
    rng = np.random.default_rng(2)
    b, p = uni(1.0, [2, 2])
    assert not any(simulate_bsm(strategy, b, p, 0.5, rng) for _ in range(200))
    assert exact_bsm_prob(strategy, b, p, 0.5) == 0.0
    assert estimate_bsm(strategy, b, p, 0.5, samples=1000).mean == 0.0


def test_scalar_sampler_matches_enumeration():
    b, p = uni(0.0, [2, 2])
    rng = np.random.default_rng(2024)
    n = 10**6
    hits = sum(simulate_bsm(STATIC, b, p, 0.5, rng) for _ in range(n))
    assert within(Estimate.from_counts(hits, n, 2024), exact_bsm_prob(STATIC, b, p, 0.5))


@pytest.mark.parametrize("strategy", list(BsmStrategy))
@pytest.mark.parametrize("branches", [(2,), (2, 2), (3, 2)])
def test_scalar_and_batch_samplers_agree(strategy, branches):
    b, p = uni(0.2, branches)
    exact = exact_bsm_prob(strategy, b, p, 0.5)
    rng = np.random.default_rng(5)
    n = 20000
    hits = sum(simulate_bsm(strategy, b, p, 0.5, rng) for _ in range(n))
    assert within(Estimate.from_counts(hits, n, 5), exact)
    assert within(estimate_bsm(strategy, b, p, 0.5, samples=200000, seed=5), exact)


def test_adaptive_lossless_estimate():
    est = estimate_bsm(ADAPTIVE, *uni(0.0, [2, 2]), 0.5, samples=10**6, seed=9)
    assert within(est, 0.75)


def test_adaptive_estimate_matches_enumeration():
    b, p = uni(0.1, [2, 2])
    for variant in AdaptiveVariant:
        est = estimate_bsm(ADAPTIVE, b, p, 0.5, samples=10**6, seed=10, variant=variant)
        assert within(est, exact_bsm_prob(ADAPTIVE, b, p, 0.5, variant))


def test_as_printed_toggle_reproduces_printed_formula():
    for branches in [(2, 2), (3, 2), (2, 2, 2)]:
        b, p = uni(0.2, branches)
        exact = exact_bsm_prob(ADAPTIVE, b, p, 0.5, AdaptiveVariant.AS_PRINTED)
        assert exact == pytest.approx(adaptive_bsm_prob(b, p, 0.5, AdaptiveVariant.AS_PRINTED), abs=1e-10)


def test_dynamic_not_worse_than_static_sampled():
    b, p = uni(0.2, [2, 2])
    s = estimate_bsm(STATIC, b, p, 0.5, samples=10**6, seed=1)
    d = estimate_bsm(DYNAMIC, b, p, 0.5, samples=10**6, seed=2)
    assert d.mean >= s.mean - 4 * math.hypot(s.std_error, d.std_error)


@pytest.mark.parametrize("branches", [(2,), (3,), (2, 2), (3, 2), (2, 3), (1, 2, 2)])
def test_static_le_dynamic_exact(branches):
    for eps in (0.0, 0.1, 0.2, 0.3, 0.5):
        b, p = uni(eps, branches)
        assert exact_bsm_prob(STATIC, b, p) <= exact_bsm_prob(DYNAMIC, b, p) + 1e-12


@pytest.mark.parametrize("strategy", ENCODED)
@pytest.mark.parametrize("branches", [(2, 2), (3, 2)])
def test_exact_monotone_in_loss(strategy, branches):
    values = [exact_bsm_prob(strategy, *uni(eps, branches)) for eps in np.linspace(0, 1, 11)]
    assert all(0.0 <= v <= 1.0 for v in values)
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_physical_baseline():
    for eps in (0.0, 0.2, 0.5):
        b, p = uni(eps, [3, 2])
        assert exact_bsm_prob(PHYSICAL, b, p, 0.5) == pytest.approx(physical_fusion_prob(eps), abs=1e-15)
        assert within(estimate_bsm(PHYSICAL, b, p, 0.5, samples=10**5, seed=4), physical_fusion_prob(eps))


def test_estimate_reproducible_and_worker_invariant():
    b, p = uni(0.2, [3, 2])
    a = estimate_bsm(DYNAMIC, b, p, samples=70000, seed=42)
    assert a == estimate_bsm(DYNAMIC, b, p, samples=70000, seed=42)
    assert a == estimate_bsm(DYNAMIC, b, p, samples=70000, seed=42, workers=4)
    assert a != estimate_bsm(DYNAMIC, b, p, samples=70000, seed=43)


def test_enumeration_limit():
    b, p = uni(0.2, [2, 2, 2])
    with pytest.raises(EnumerationTooLarge) as info:
        exact_bsm_prob(STATIC, b, p, limit=1000)
    assert info.value.limit == 1000 and info.value.visited > 1000


def test_bad_inputs():
    b = BranchingVector([2, 2])
    with pytest.raises(ValueError):
        estimate_bsm(STATIC, b, LossProfile.uniform(0.1, 2), samples=0)
    with pytest.raises(ValueError):
        exact_bsm_prob(STATIC, b, LossProfile.uniform(0.1, 3))
