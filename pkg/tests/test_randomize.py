import collections
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carat.core import CovariateSpace, sample_profiles
from carat.randomize import (
    BlockBuffer,
    Design,
    DesignState,
    HuHuWeights,
    assign_efron,
    assign_hu_hu,
    assign_permuted_block,
    assign_pocock_simon,
    assign_sequences,
    coin_probability,
    imbalance_snapshot,
    snapshot_from_assignments,
)

from oracles import ScriptedUniforms, efron_abs_stationary

SPACE = CovariateSpace((2, 2))
SPACE_B = CovariateSpace((2, 2, 3, 4))


def check_aggregation(snap):
    assert snap.d_stratum.sum() == snap.d_overall
    for margin in snap.d_margin:
        assert margin.sum() == snap.d_overall


# -- coin mechanics ---------------------------------------------------------

def test_coin_probability_ties_and_direction():
    assert coin_probability(0.0, 0.75) == 0.5
    assert coin_probability(1e-12, 0.75) == 0.5
    assert coin_probability(-4.0, 0.75) == 0.75
    assert coin_probability(4.0, 0.75) == 0.25


@pytest.mark.parametrize("p", [0.4, 1.0, 1.2])
def test_coin_range(p):
    with pytest.raises(ValueError):
        Design("ps", coin_p=p)
    with pytest.raises(ValueError):
        assign_efron(0, p, ScriptedUniforms([0.1]))


def test_efron_conditional_frequencies():
    # the lagging arm is chosen with probability exactly p, whatever the sign of d
    rng = np.random.default_rng(3)
    counts = collections.Counter()
    d = 0
    for _ in range(200_000):
        arm = assign_efron(d, 0.75, rng)
        if d != 0:
            counts[(np.sign(d), arm)] += 1
        d += 1 if arm else -1
    behind_picked = counts[(1, 0)] + counts[(-1, 1)]
    total = sum(counts.values())
    assert abs(behind_picked / total - 0.75) < 0.005
    assert abs(counts[(1, 0)] / (counts[(1, 0)] + counts[(1, 1)]) - 0.75) < 0.01


def test_efron_abs_imbalance_matches_markov_chain():
    pi = efron_abs_stationary(0.75)
    assert pi[0] == pytest.approx(1 / 3, abs=1e-12)
    assert pi[:3].sum() == pytest.approx(25 / 27, abs=1e-12)
    rng = np.random.default_rng(5)
    d, hits, n = 0, collections.Counter(), 400_000
    for _ in range(n):
        d += 1 if assign_efron(d, 0.75, rng) else -1
        hits[abs(d)] += 1
    # the chain is periodic, but its time averages still converge to pi
    assert abs((hits[0] + hits[1] + hits[2]) / n - pi[:3].sum()) < 0.01


# -- permuted blocks --------------------------------------------------------

def test_block_permutations_uniform():
    rng = np.random.default_rng(9)
    buf = BlockBuffer()
    counts = collections.Counter(
        tuple(assign_permuted_block(buf, 4, rng) for _ in range(4)) for _ in range(100_000)
    )
    assert set(counts) == set(itertools.permutations((1, 1, 0, 0)))
    for c in counts.values():
        assert abs(c / 100_000 - 1 / 6) < 0.02 / 6


@pytest.mark.parametrize("inner", ["block", "efron"])
def test_stratified_margin_bound(inner):
    rng = np.random.default_rng(4)
    design = Design("sb", inner=inner)
    levels = sample_profiles(SPACE_B, 400, rng)
    state = DesignState(SPACE_B)
    for lv in levels:
        design.assign(lv, state, rng)
        if inner == "block":
            assert np.abs(state.d_stratum).max() <= 2
    if inner == "block":
        # each margin level sums at most 48/m strata, each bounded by 2
        for k, m in enumerate(SPACE_B.levels_per_factor):
            o = SPACE_B.margin_offsets[k]
            assert np.abs(state.d_margin[o : o + m]).max() <= 2 * SPACE_B.n_strata // m


def test_single_stratum_sb_matches_bare_block():
    space = CovariateSpace((2,), ((1.0, 0.0),))
    uniforms = np.random.default_rng(1).random(40)
    t, _ = Design("sb").run(np.ones((40, 1), dtype=int), space, ScriptedUniforms(uniforms))
    buf = BlockBuffer()
    src = ScriptedUniforms(uniforms)
    assert list(t) == [assign_permuted_block(buf, 4, src) for _ in range(40)]


# -- Pocock-Simon and Hu-Hu -------------------------------------------------

def test_pocock_simon_empty_state_is_fair():
    state = DesignState(SPACE)
    assert assign_pocock_simon((1, 1), state, rng=ScriptedUniforms([0.49])) == 1
    state = DesignState(SPACE)
    assert assign_pocock_simon((1, 1), state, rng=ScriptedUniforms([0.51])) == 0


def test_pocock_simon_prefers_reducing_arm():
    # D(1;1) = 2 and D(2;1) = 1: arm 2 lowers both margins, so P(arm 1) = 0.25
    state = DesignState(SPACE)
    state.record((1, 1), 1)
    state.record((1, 2), 1)
    assert state.d_margin[0] == 2 and state.d_margin[2] == 1
    assert assign_pocock_simon((1, 1), _copy(state), rng=ScriptedUniforms([0.24])) == 1
    assert assign_pocock_simon((1, 1), _copy(state), rng=ScriptedUniforms([0.26])) == 0


def _copy(state):
    new = DesignState(state.space)
    new.n_total, new.d_overall = state.n_total, state.d_overall
    new.d_margin = state.d_margin.copy()
    new.d_stratum = state.d_stratum.copy()
    return new


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 2), st.integers(1, 2), st.floats(0, 1, exclude_max=True)), max_size=40))
def test_pocock_simon_replay_follows_criterion(steps):
    """Each decision equals the literal comparison of squared marginal sums."""
    state = DesignState(SPACE)
    for a, b, u in steps:
        d = state.d_margin[state.margin_index((a, b))].astype(float)
        diff = np.sum((d + 1) ** 2) - np.sum((d - 1) ** 2)
        expect = int(u < (0.75 if diff < 0 else 0.25 if diff > 0 else 0.5))
        assert assign_pocock_simon((a, b), state, rng=ScriptedUniforms([u])) == expect


def test_pocock_simon_overall_imbalance_bounded():
    rng = np.random.default_rng(21)
    levels = sample_profiles(SPACE, 500, rng)[None].repeat(5000, axis=0)
    t = assign_sequences(levels, SPACE, Design("ps"), rng.random((5000, 500)))
    d = np.abs(2 * t.sum(axis=1).astype(int) - 500)
    assert np.mean(d <= 4) >= 0.95


def test_hu_hu_stratum_imbalance_bounded():
    rng = np.random.default_rng(22)
    levels = np.stack([sample_profiles(SPACE, 500, rng) for _ in range(5000)])
    t = assign_sequences(levels, SPACE, Design("hh"), rng.random((5000, 500)))
    s = (levels - 1) @ SPACE.radix
    sign = 2 * t.astype(int) - 1
    worst = np.max(np.abs(np.stack([(sign * (s == j)).sum(axis=1) for j in range(4)])), axis=0)
    assert np.mean(worst <= 6) >= 0.95


def test_hu_hu_weight_validation():
    with pytest.raises(ValueError):
        HuHuWeights(0.5, (0.5,), 0.5)
    with pytest.raises(ValueError):
        HuHuWeights(-0.5, (1.0,), 0.5)
    w = HuHuWeights.equal(2)
    assert w.overall == w.stratum == 0.25 and w.margin == (0.25, 0.25)


def test_hu_hu_stratum_only_is_stratified_efron():
    w = HuHuWeights(0.0, (0.0, 0.0), 1.0)
    rng = np.random.default_rng(2)
    levels = sample_profiles(SPACE, 300, rng)
    uniforms = rng.random(300)
    t_hh, _ = Design("hh", hh_weights=w).run(levels, SPACE, ScriptedUniforms(uniforms))
    t_sb, _ = Design("sb", inner="efron").run(levels, SPACE, ScriptedUniforms(uniforms))
    np.testing.assert_array_equal(t_hh, t_sb)


def test_hu_hu_empty_state_tie():
    state = DesignState(SPACE)
    assert assign_hu_hu((2, 1), state, rng=ScriptedUniforms([0.499])) == 1


# -- counters ---------------------------------------------------------------

def test_snapshot_example():
    state = DesignState(SPACE)
    for arm in (1, 1, 0):
        state.record((1, 1), arm)
    snap = imbalance_snapshot(state)
    assert snap.d_overall == 1 and snap.d_stratum[0] == 1
    check_aggregation(snap)


@settings(max_examples=40, deadline=None)
@given(
    tag=st.sampled_from(["cr", "sb", "ps", "hh"]),
    factors=st.lists(st.integers(2, 4), min_size=1, max_size=3),
    n=st.integers(1, 60),
    seed=st.integers(0, 2**32 - 1),
)
def test_aggregation_after_every_assignment(tag, factors, n, seed):
    space = CovariateSpace(tuple(factors))
    rng = np.random.default_rng(seed)
    design = Design(tag)
    state = DesignState(space)
    levels = sample_profiles(space, n, rng)
    for lv in levels:
        design.assign(lv, state, rng)
        snap = imbalance_snapshot(state)
        check_aggregation(snap)
        if tag == "sb":
            assert np.abs(snap.d_stratum).max() <= design.block_size // 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 6]))
def test_stratified_block_bound(seed, block):
    rng = np.random.default_rng(seed)
    levels = sample_profiles(SPACE_B, 200, rng)
    t, state = Design("sb", block_size=block).run(levels, SPACE_B, rng)
    assert np.abs(state.d_stratum).max() <= block // 2
    snap = snapshot_from_assignments(levels, t, SPACE_B)
    np.testing.assert_array_equal(snap.d_stratum, state.d_stratum)


# -- scalar engine vs batched kernel ---------------------------------------

@pytest.mark.parametrize(
    "design",
    [
        Design("cr"),
        Design("sb"),
        Design("sb", block_size=6),
        Design("sb", inner="efron"),
        Design("ps"),
        Design("ps", criterion="range"),
        Design("hh"),
        Design("hh", hh_weights=HuHuWeights(0.1, (0.2, 0.3, 0.1, 0.1), 0.2)),
    ],
    ids=lambda d: f"{d.tag}-{d.inner}-{d.criterion}-{d.block_size}-{d.hh_weights is not None}",
)
@pytest.mark.parametrize("space", [SPACE, SPACE_B], ids=["2x2", "48"])
def test_batch_kernel_replays_scalar_engine(design, space):
    if design.hh_weights is not None and len(design.hh_weights.margin) != space.n_factors:
        pytest.skip("weights sized for the 48-stratum space")
    rng = np.random.default_rng(17)
    R, n = 12, 150
    levels = np.stack([sample_profiles(space, n, rng) for _ in range(R)])
    uniforms = rng.random((R, n))
    batch = assign_sequences(levels, space, design, uniforms)
    for r in range(R):
        t, _ = design.run(levels[r], space, ScriptedUniforms(uniforms[r]))
        np.testing.assert_array_equal(batch[r], t)


def test_source_mapping_reuses_covariates():
    rng = np.random.default_rng(8)
    levels = np.stack([sample_profiles(SPACE, 50, rng) for _ in range(2)])
    uniforms = rng.random((6, 50))
    source = np.array([0, 0, 0, 1, 1, 1])
    batch = assign_sequences(levels, SPACE, Design("ps"), uniforms, source)
    direct = assign_sequences(levels[source], SPACE, Design("ps"), uniforms)
    np.testing.assert_array_equal(batch, direct)
    with pytest.raises(ValueError):
        assign_sequences(levels, SPACE, Design("ps"), uniforms, np.array([0, 1, 2, 0, 0, 0]))
