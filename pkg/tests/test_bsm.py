import math

import pytest
from hypothesis import given, settings, strategies as st

from tree_repeater.bsm import (
    AdaptiveVariant,
    BsmStrategy,
    adaptive_bsm_prob,
    link_modes,
    physical_fusion_prob,
    x_pair_prob,
)
from tree_repeater.oracle import exact_bsm_prob
from tree_repeater.tree_code import BranchingVector, LossProfile, indirect_z_prob, z_prob

AS, SYM = AdaptiveVariant.AS_PRINTED, AdaptiveVariant.SYMMETRIZED


def uni(eps, branches):
    return BranchingVector(branches), LossProfile.uniform(eps, len(branches))


def markov_adaptive(b, profile, p_f, sides):
    """Walk the level-1 pairs one at a time, tracking the probability of still being
    'alive and unresolved'. Independent restatement of the adaptive rule."""
    eta1 = profile.survival(1)
    b0, b1 = b.branches[0], b.branch(1)
    xi1 = indirect_z_prob(b, profile, 1)
    pz1 = z_prob(b, profile, 1)
    pz2 = z_prob(b, profile, 2) if b1 else 1.0
    alive, total = 1.0, 0.0
    for i in range(b0):
        both = eta1 * eta1
        total += alive * both * p_f * pz2 ** (sides * b1) * pz1 ** (sides * (b0 - i - 1))
        # loss: both sides need indirect Z; failure: nothing more needed
        alive *= (1 - both) * xi1 * xi1 + both * (1 - p_f)
    return total


def test_physical_fusion():
    assert physical_fusion_prob(0.0) == 0.5
    assert physical_fusion_prob(0.1, 1.0) == pytest.approx(0.81)
    assert physical_fusion_prob(1.0) == 0.0


def test_x_pair_examples():
    b, p = uni(0.1, [2, 2])
    assert x_pair_prob(b, p, 0.5, AS) == pytest.approx(0.32805, abs=1e-12)
    assert x_pair_prob(b, p, 0.5, SYM) == pytest.approx(0.2657205, abs=1e-12)


def test_adaptive_examples():
    b, p = uni(0.1, [2, 2])
    assert adaptive_bsm_prob(b, p, 0.5, AS) == pytest.approx(0.52167134295, abs=1e-10)
    assert adaptive_bsm_prob(b, p, 0.5, SYM) == pytest.approx(0.42228833301, abs=1e-10)
    b, p = uni(0.0, [3])
    assert adaptive_bsm_prob(b, p, 0.5) == 0.875


def test_symmetrized_matches_enumeration_example():
    b, p = uni(0.1, [2, 2])
    exact = exact_bsm_prob(BsmStrategy.ADAPTIVE, b, p, 0.5)
    assert adaptive_bsm_prob(b, p, 0.5, SYM) == pytest.approx(exact, abs=1e-10)
    assert abs(adaptive_bsm_prob(b, p, 0.5, AS) - exact) > 1e-3


@pytest.mark.parametrize("branches", [(2,), (3,), (2, 2), (3, 2), (2, 3), (4, 2, 1), (2, 2, 2)])
@pytest.mark.parametrize("eps", [0.0, 0.05, 0.2, 0.6])
@pytest.mark.parametrize("variant", [AS, SYM])
def test_closed_form_matches_stepwise_recursion(branches, eps, variant):
    b, p = uni(eps, branches)
    for p_f in (0.25, 0.5, 0.9):
        assert adaptive_bsm_prob(b, p, p_f, variant) == pytest.approx(
            markov_adaptive(b, p, p_f, variant.sides), abs=1e-13
        )


@pytest.mark.parametrize("b0", range(1, 7))
@pytest.mark.parametrize("p_f", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("variant", [AS, SYM])
def test_zero_loss_closed_form(b0, p_f, variant):
    for tail in ((), (2,), (3, 1)):
        b, p = uni(0.0, (b0,) + tail)
        assert adaptive_bsm_prob(b, p, p_f, variant) == pytest.approx(1 - (1 - p_f) ** b0, abs=1e-12)


def test_variants_coincide_without_deeper_or_later_measurements():
    # lossless deeper levels and a single level-1 pair: nothing to double-charge
    b = BranchingVector([1, 3])
    p = LossProfile([0.3, 0.0])
    assert adaptive_bsm_prob(b, p, 0.5, AS) == adaptive_bsm_prob(b, p, 0.5, SYM)
    b, p = uni(0.1, [2, 2])
    assert adaptive_bsm_prob(b, p, 0.5, SYM) < adaptive_bsm_prob(b, p, 0.5, AS)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2, 0.3])
def test_beats_physical_below_crossover(eps):
    b, p = uni(eps, [2, 4, 3])
    assert adaptive_bsm_prob(b, p, 0.5, SYM) > physical_fusion_prob(eps)


def test_input_checks():
    b = BranchingVector([2, 2])
    with pytest.raises(ValueError):
        adaptive_bsm_prob(b, LossProfile.uniform(0.1, 3))
    with pytest.raises(ValueError):
        adaptive_bsm_prob(b, LossProfile.uniform(0.1, 2), p_f=1.5)


def test_binomial_overflow_is_detected():
    b, p = uni(0.5, [1100])
    with pytest.raises(OverflowError):
        adaptive_bsm_prob(b, p)


def test_link_modes():
    assert link_modes(BsmStrategy.PHYSICAL) == 2
    assert link_modes(BsmStrategy.ADAPTIVE, BranchingVector([3, 4, 2])) == 6
    assert link_modes(BsmStrategy.STATIC, BranchingVector([3, 4, 2])) == 78
    assert link_modes(BsmStrategy.DYNAMIC, BranchingVector([3, 4, 2])) == 78
    with pytest.raises(ValueError):
        link_modes(BsmStrategy.STATIC)


def test_parse_enums():
    assert BsmStrategy.parse(" Dynamic") is BsmStrategy.DYNAMIC
    assert AdaptiveVariant.parse("as_printed") is AS


trees = st.lists(st.integers(1, 4), min_size=1, max_size=3)


@settings(max_examples=150, deadline=None)
@given(trees, st.data(), st.sampled_from([AS, SYM]), st.floats(0, 1))
def test_range_and_monotone_in_loss(branches, data, variant, p_f):
    n = len(branches)
    eps = data.draw(st.lists(st.floats(0, 0.9), min_size=n, max_size=n))
    j = data.draw(st.integers(0, n - 1))
    worse = list(eps)
    worse[j] += data.draw(st.floats(0, 0.1))
    b = BranchingVector(branches)
    hi = adaptive_bsm_prob(b, LossProfile(eps), p_f, variant)
    lo = adaptive_bsm_prob(b, LossProfile(worse), p_f, variant)
    assert 0.0 <= lo <= hi + 1e-12 <= 1.0 + 1e-12
    assert not math.isnan(hi)
