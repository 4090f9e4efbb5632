"""Sequential treatment assignment for two-arm covariate-adaptive designs.

Every engine makes one biased-coin decision per patient from a single
uniform draw ``u``: arm 1 is chosen when ``u < P(arm 1)``.  The scalar
functions here (``assign_*`` and :meth:`Design.assign`) are the reference
implementation; :func:`assign_sequences` runs many independent trials at
once for the simulation harness and replays the scalar engines exactly
when fed the same uniforms.

Imbalances follow the convention "arm 1 count minus arm 2 count", with
arm 2 encoded as ``0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numba
import numpy as np

from .core import CovariateSpace, check_profile, encode_strata

DESIGN_TAGS = ("cr", "sb", "ps", "hh")

# Criterion differences smaller than this count as ties.
TIE_TOL = 1e-9


class UniformSource(Protocol):
    def random(self) -> float: ...


def _check_coin(p: float) -> float:
    if not 0.5 <= p < 1.0:
        raise ValueError(f"biased coin probability must lie in [1/2, 1), got {p}")
    return float(p)


def coin_probability(diff: float, p: float) -> float:
    """P(arm 1) given ``diff = imbalance(arm 1) - imbalance(arm 2)``."""
    if diff < -TIE_TOL:
        return p
    if diff > TIE_TOL:
        return 1.0 - p
    return 0.5


@dataclass(frozen=True)
class HuHuWeights:
    """Weights on overall, per-factor marginal and within-stratum imbalance."""

    overall: float
    margin: tuple[float, ...]
    stratum: float

    def __post_init__(self):
        margin = tuple(float(w) for w in self.margin)
        object.__setattr__(self, "margin", margin)
        ws = (self.overall, *margin, self.stratum)
        if any(w < 0 for w in ws):
            raise ValueError(f"Hu-Hu weights must be nonnegative, got {ws}")
        if abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError(f"Hu-Hu weights must sum to 1, got {sum(ws)}")

    @classmethod
    def equal(cls, n_factors: int) -> "HuHuWeights":
        w = 1.0 / (n_factors + 2)
        return cls(w, (w,) * n_factors, w)


@dataclass
class BlockBuffer:
    """Remaining slots of the current permuted block in one stratum."""

    ones_left: int = 0
    left: int = 0


class DesignState:
    """Running imbalance counters for one trial."""

    def __init__(self, space: CovariateSpace):
        self.space = space
        self.n_total = 0
        self.d_overall = 0
        self.d_margin = np.zeros(space.n_margins, dtype=np.int64)
        self.d_stratum = np.zeros(space.n_strata, dtype=np.int64)
        self.blocks: dict[int, BlockBuffer] = {}

    def margin_index(self, profile: Sequence[int]) -> np.ndarray:
        return self.space.margin_offsets + np.asarray(profile) - 1

    def stratum_index(self, profile: Sequence[int]) -> int:
        return int(encode_strata(np.asarray(profile), self.space))

    def record(self, profile: Sequence[int], arm: int) -> None:
        step = 1 if arm == 1 else -1
        self.n_total += 1
        self.d_overall += step
        self.d_margin[self.margin_index(profile)] += step
        self.d_stratum[self.stratum_index(profile)] += step


@dataclass(frozen=True)
class ImbalanceSnapshot:
    d_overall: int
    d_margin: tuple[np.ndarray, ...]
    d_stratum: np.ndarray


def imbalance_snapshot(state: DesignState) -> ImbalanceSnapshot:
    offsets = state.space.margin_offsets
    margins = tuple(
        state.d_margin[o : o + m].copy()
        for o, m in zip(offsets, state.space.levels_per_factor)
    )
    return ImbalanceSnapshot(state.d_overall, margins, state.d_stratum.copy())


def snapshot_from_assignments(levels: np.ndarray, t: np.ndarray, space: CovariateSpace) -> ImbalanceSnapshot:
    """Imbalance counters of a finished assignment sequence."""
    levels = np.asarray(levels)
    sign = 2 * np.asarray(t, dtype=np.int64) - 1
    margins = tuple(
        np.bincount(levels[:, k] - 1, weights=sign, minlength=m).astype(np.int64)
        for k, m in enumerate(space.levels_per_factor)
    )
    strata = np.bincount(encode_strata(levels, space), weights=sign, minlength=space.n_strata)
    return ImbalanceSnapshot(int(sign.sum()), margins, strata.astype(np.int64))


def assign_complete(rng: UniformSource) -> int:
    return int(rng.random() < 0.5)


def assign_efron(d: int, p: float, rng: UniformSource) -> int:
    """Efron's biased coin: favour the lagging arm with probability ``p``."""
    p = _check_coin(p)
    return int(rng.random() < coin_probability(4.0 * d, p))


def assign_permuted_block(buffer: BlockBuffer, block_size: int, rng: UniformSource) -> int:
    """Next assignment from a permuted block, starting a new block when empty.

    Slots are drawn without replacement from the block's remaining multiset,
    which yields a uniformly random permutation of each block.
    """
    if block_size < 2 or block_size % 2:
        raise ValueError(f"block size must be a positive even integer, got {block_size}")
    if buffer.left == 0:
        buffer.ones_left = block_size // 2
        buffer.left = block_size
    arm = int(rng.random() < buffer.ones_left / buffer.left)
    buffer.ones_left -= arm
    buffer.left -= 1
    return arm


def assign_stratified(
    profile: Sequence[int],
    state: DesignState,
    inner: str = "block",
    block_size: int = 4,
    p: float = 0.75,
    rng: UniformSource | None = None,
) -> int:
    """Run a permuted block (``inner="block"``) or Efron coin within the stratum."""
    profile = check_profile(profile, state.space)
    s = state.stratum_index(profile)
    if inner == "block":
        arm = assign_permuted_block(state.blocks.setdefault(s, BlockBuffer()), block_size, rng)
    elif inner == "efron":
        arm = assign_efron(int(state.d_stratum[s]), p, rng)
    else:
        raise ValueError(f"unknown stratified inner design {inner!r}")
    state.record(profile, arm)
    return arm


def _marginal_score(d: np.ndarray, criterion: str) -> float:
    if criterion == "squared":
        return float(np.sum(d.astype(float) ** 2))
    if criterion == "range":
        return float(np.sum(np.abs(d)))
    raise ValueError(f"unknown marginal criterion {criterion!r}")


def assign_pocock_simon(
    profile: Sequence[int],
    state: DesignState,
    p: float = 0.75,
    rng: UniformSource | None = None,
    criterion: str = "squared",
) -> int:
    """Pocock-Simon minimisation over the margins the incoming profile falls in.

    ``criterion="squared"`` sums squared post-assignment marginal
    imbalances; ``"range"`` sums their absolute values.
    """
    p = _check_coin(p)
    profile = check_profile(profile, state.space)
    d = state.d_margin[state.margin_index(profile)]
    diff = _marginal_score(d + 1, criterion) - _marginal_score(d - 1, criterion)
    arm = int(rng.random() < coin_probability(diff, p))
    state.record(profile, arm)
    return arm


def hu_hu_imbalance(d_overall: float, d_margin: np.ndarray, d_stratum: float, weights: HuHuWeights) -> float:
    return (
        weights.overall * d_overall**2
        + float(np.dot(weights.margin, np.asarray(d_margin, dtype=float) ** 2))
        + weights.stratum * d_stratum**2
    )


def assign_hu_hu(
    profile: Sequence[int],
    state: DesignState,
    weights: HuHuWeights | None = None,
    p: float = 0.75,
    rng: UniformSource | None = None,
) -> int:
    """Hu and Hu's design: biased coin on a weighted sum of squared
    overall, marginal and within-stratum imbalances."""
    p = _check_coin(p)
    profile = check_profile(profile, state.space)
    if weights is None:
        weights = HuHuWeights.equal(state.space.n_factors)
    if len(weights.margin) != state.space.n_factors:
        raise ValueError("Hu-Hu weights need one marginal weight per factor")
    d = state.d_margin[state.margin_index(profile)]
    ds = state.d_stratum[state.stratum_index(profile)]
    diff = hu_hu_imbalance(state.d_overall + 1, d + 1, ds + 1, weights) - hu_hu_imbalance(
        state.d_overall - 1, d - 1, ds - 1, weights
    )
    arm = int(rng.random() < coin_probability(diff, p))
    state.record(profile, arm)
    return arm


@dataclass(frozen=True)
class Design:
    """A randomization design and its parameters.

    ``tag`` is one of ``cr`` (complete), ``sb`` (stratified permuted block,
    or stratified Efron coin with ``inner="efron"``), ``ps`` (Pocock-Simon)
    or ``hh`` (Hu and Hu).
    """

    tag: str
    block_size: int = 4
    coin_p: float = 0.75
    hh_weights: HuHuWeights | None = None
    inner: str = "block"
    criterion: str = "squared"

    def __post_init__(self):
        if self.tag not in DESIGN_TAGS:
            raise ValueError(f"unknown design {self.tag!r}; expected one of {DESIGN_TAGS}")
        if self.block_size < 2 or self.block_size % 2:
            raise ValueError(f"block size must be a positive even integer, got {self.block_size}")
        _check_coin(self.coin_p)
        if self.inner not in ("block", "efron"):
            raise ValueError(f"unknown stratified inner design {self.inner!r}")
        if self.criterion not in ("squared", "range"):
            raise ValueError(f"unknown marginal criterion {self.criterion!r}")

    @property
    def within_stratum_bounded(self) -> bool:
        """Whether within-stratum imbalances stay bounded in probability."""
        return self.tag in ("sb", "hh")

    def weights_for(self, space: CovariateSpace) -> HuHuWeights:
        w = self.hh_weights or HuHuWeights.equal(space.n_factors)
        if len(w.margin) != space.n_factors:
            raise ValueError("Hu-Hu weights need one marginal weight per factor")
        return w

    def assign(self, profile: Sequence[int], state: DesignState, rng: UniformSource) -> int:
        """Assign one patient and update ``state``."""
        if self.tag == "cr":
            profile = check_profile(profile, state.space)
            arm = assign_complete(rng)
            state.record(profile, arm)
            return arm
        if self.tag == "sb":
            return assign_stratified(profile, state, self.inner, self.block_size, self.coin_p, rng)
        if self.tag == "ps":
            return assign_pocock_simon(profile, state, self.coin_p, rng, self.criterion)
        return assign_hu_hu(profile, state, self.weights_for(state.space), self.coin_p, rng)

    def run(self, levels: np.ndarray, space: CovariateSpace, rng: UniformSource) -> tuple[np.ndarray, DesignState]:
        """Assign a whole profile sequence one patient at a time."""
        state = DesignState(space)
        t = np.array([self.assign(lv, state, rng) for lv in np.asarray(levels)], dtype=np.int64)
        return t, state


_KIND = {"sb": 0, "ps": 1, "hh": 2}


@numba.njit(cache=True)
def _assign_kernel(kind, strata, margins, source, uniforms, n_strata, n_margins, block_size, efron_inner,
                   squared, coin, w_overall, w_margin, w_stratum):
    R, n = uniforms.shape
    p = margins.shape[2]
    t = np.empty((R, n), dtype=np.int8)
    d_margin = np.empty(n_margins, dtype=np.int64)
    d_stratum = np.empty(n_strata, dtype=np.int64)
    ones_left = np.empty(n_strata, dtype=np.int64)
    left = np.empty(n_strata, dtype=np.int64)
    for r in range(R):
        d_margin[:] = 0
        d_stratum[:] = 0
        ones_left[:] = 0
        left[:] = 0
        d_overall = 0
        q = source[r]
        for i in range(n):
            s = strata[q, i]
            if kind == 0 and not efron_inner:
                if left[s] == 0:
                    ones_left[s] = block_size // 2
                    left[s] = block_size
                prob = ones_left[s] / left[s]
            else:
                # diff = imbalance(arm 1) - imbalance(arm 2)
                if kind == 0:
                    diff = 4.0 * d_stratum[s]
                elif kind == 1:
                    acc = 0
                    for k in range(p):
                        d = d_margin[margins[q, i, k]]
                        if squared:
                            acc += d
                        elif d > 0:
                            acc += 1
                        elif d < 0:
                            acc -= 1
                    diff = float(acc)
                else:
                    g = w_overall * d_overall
                    for k in range(p):
                        g += w_margin[k] * d_margin[margins[q, i, k]]
                    g += w_stratum * d_stratum[s]
                    diff = 4.0 * g
                if diff < -TIE_TOL:
                    prob = coin
                elif diff > TIE_TOL:
                    prob = 1.0 - coin
                else:
                    prob = 0.5
            arm = 1 if uniforms[r, i] < prob else 0
            step = 2 * arm - 1
            if kind == 0 and not efron_inner:
                ones_left[s] -= arm
                left[s] -= 1
            d_overall += step
            d_stratum[s] += step
            for k in range(p):
                d_margin[margins[q, i, k]] += step
            t[r, i] = arm
    return t


def assign_sequences(
    levels: np.ndarray,
    space: CovariateSpace,
    design: Design,
    uniforms: np.ndarray,
    source: np.ndarray | None = None,
) -> np.ndarray:
    """Assign ``R`` independent trials, each replaying :meth:`Design.assign`.

    Parameters
    ----------
    levels : (K, n, p) int array
        1-based covariate levels of the patients, in arrival order.
    uniforms : (R, n) float array
        The coin draws; trial ``r`` consumes ``uniforms[r]`` in order.
    source : (R,) int array, optional
        Trial ``r`` assigns the covariate sequence ``levels[source[r]]``.
        Defaults to ``arange(R)``, which needs ``K == R``.

    Returns
    -------
    (R, n) int8 array of arm indicators.
    """
    levels = np.asarray(levels)
    uniforms = np.ascontiguousarray(uniforms, dtype=float)
    if source is None:
        source = np.arange(len(uniforms))
    source = np.ascontiguousarray(source, dtype=np.int64)
    if levels.ndim != 3 or levels.shape[1] != uniforms.shape[1] or len(source) != len(uniforms):
        raise ValueError("levels must be (K, n, p), uniforms (R, n) and source (R,)")
    if len(source) and (source.min() < 0 or source.max() >= len(levels)):
        raise ValueError("source indexes outside levels")
    if design.tag == "cr":
        return (uniforms < 0.5).astype(np.int8)
    # PS reduces to integer sign tests: for integer counts
    # sum (d+1)^2 - (d-1)^2 = 4 sum d and sum |d+1| - |d-1| = 2 sum sign(d).
    w = design.weights_for(space) if design.tag == "hh" else HuHuWeights.equal(space.n_factors)
    return _assign_kernel(
        _KIND[design.tag],
        np.ascontiguousarray(encode_strata(levels, space), dtype=np.int64),
        np.ascontiguousarray(space.margin_offsets + levels - 1, dtype=np.int64),
        source,
        uniforms,
        space.n_strata,
        space.n_margins,
        design.block_size,
        design.inner == "efron",
        design.criterion == "squared",
        float(design.coin_p),
        float(w.overall),
        np.asarray(w.margin, dtype=float),
        float(w.stratum),
    )
