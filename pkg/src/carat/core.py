"""Covariate spaces, stratum indexing and trial data containers.

Covariate levels are 1-based throughout the public API: a profile
``(t_1, ..., t_p)`` has ``1 <= t_k <= m_k``.  Strata are numbered by a
mixed-radix code with factor 1 varying fastest, so ``(1, 1)`` is stratum 0
and ``(2, 2)`` is stratum 3 in a 2x2 space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Iterable, Sequence

import numpy as np


class InvalidProfileError(ValueError):
    """A covariate profile does not fit its covariate space."""


@dataclass(frozen=True)
class CovariateSpace:
    """Product of ``p`` independent categorical factors.

    Parameters
    ----------
    levels_per_factor : sequence of int
        Number of levels ``m_k`` of each factor, every ``m_k >= 2``.
    factor_probs : sequence of sequence of float, optional
        Level probabilities per factor. Uniform when omitted.
    """

    levels_per_factor: tuple[int, ...]
    factor_probs: tuple[tuple[float, ...], ...] = field(default=())

    def __post_init__(self):
        levels = tuple(int(m) for m in self.levels_per_factor)
        if len(levels) < 1:
            raise ValueError("a covariate space needs at least one factor")
        if any(m < 2 for m in levels):
            raise ValueError(f"every factor needs at least 2 levels, got {levels}")
        probs = self.factor_probs
        if not probs:
            probs = tuple(tuple([1.0 / m] * m) for m in levels)
        probs = tuple(tuple(float(q) for q in pk) for pk in probs)
        if len(probs) != len(levels):
            raise ValueError("factor_probs must have one entry per factor")
        for m, pk in zip(levels, probs):
            if len(pk) != m:
                raise ValueError(f"probability vector {pk} does not have {m} entries")
            if any(q < 0 for q in pk) or abs(sum(pk) - 1.0) > 1e-12:
                raise ValueError(f"probability vector {pk} is not a distribution")
        object.__setattr__(self, "levels_per_factor", levels)
        object.__setattr__(self, "factor_probs", probs)

    @property
    def n_factors(self) -> int:
        return len(self.levels_per_factor)

    @property
    def n_strata(self) -> int:
        return prod(self.levels_per_factor)

    @property
    def n_margins(self) -> int:
        """Total number of (factor, level) margins."""
        return sum(self.levels_per_factor)

    @property
    def n_dummies(self) -> int:
        """Length of the dummy-coded covariate vector."""
        return sum(m - 1 for m in self.levels_per_factor)

    @property
    def radix(self) -> np.ndarray:
        """Place value of each factor in the stratum code."""
        return np.cumprod((1,) + self.levels_per_factor[:-1])

    @property
    def margin_offsets(self) -> np.ndarray:
        """Offset of each factor's block in a flat margin array."""
        return np.cumsum((0,) + self.levels_per_factor[:-1])

    def profiles(self) -> np.ndarray:
        """All profiles as an ``(m, p)`` array, row ``j`` being stratum ``j``."""
        return decode_strata(np.arange(self.n_strata), self)

    def stratum_probs(self) -> np.ndarray:
        """Probability of each stratum under independent factors."""
        levels = self.profiles() - 1
        out = np.ones(self.n_strata)
        for k, pk in enumerate(self.factor_probs):
            out *= np.asarray(pk)[levels[:, k]]
        return out


CovariateProfile = tuple[int, ...]


def check_profile(profile: Sequence[int], space: CovariateSpace) -> CovariateProfile:
    """Validate ``profile`` against ``space`` and return it as a tuple."""
    profile = tuple(int(t) for t in profile)
    if len(profile) != space.n_factors:
        raise InvalidProfileError(
            f"profile {profile} has {len(profile)} factors, space has {space.n_factors}"
        )
    for t, m in zip(profile, space.levels_per_factor):
        if not 1 <= t <= m:
            raise InvalidProfileError(f"level {t} outside 1..{m} in profile {profile}")
    return profile


def encode_stratum(profile: Sequence[int], space: CovariateSpace) -> int:
    """Mixed-radix stratum index of ``profile`` (factor 1 fastest)."""
    profile = check_profile(profile, space)
    return int(np.dot(np.asarray(profile) - 1, space.radix))


def decode_stratum(index: int, space: CovariateSpace) -> CovariateProfile:
    if not 0 <= index < space.n_strata:
        raise InvalidProfileError(f"stratum {index} outside 0..{space.n_strata - 1}")
    return tuple(int(t) for t in decode_strata(np.array([index]), space)[0])


def encode_strata(levels: np.ndarray, space: CovariateSpace) -> np.ndarray:
    """Vectorised :func:`encode_stratum` over the last axis of ``levels``."""
    levels = np.asarray(levels)
    return (levels - 1) @ space.radix


def decode_strata(index: np.ndarray, space: CovariateSpace) -> np.ndarray:
    index = np.asarray(index)
    m = np.asarray(space.levels_per_factor)
    return (index[..., None] // space.radix) % m + 1


def sample_profile(space: CovariateSpace, rng: np.random.Generator) -> CovariateProfile:
    """Draw one profile, each factor independently."""
    return tuple(
        int(rng.choice(m, p=pk)) + 1
        for m, pk in zip(space.levels_per_factor, space.factor_probs)
    )


def sample_profiles(space: CovariateSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. profiles as an ``(n, p)`` array of 1-based levels.

    Factors are drawn one after the other, ``n`` values each.
    """
    out = np.empty((n, space.n_factors), dtype=np.int64)
    for k, (m, pk) in enumerate(zip(space.levels_per_factor, space.factor_probs)):
        out[:, k] = rng.choice(m, size=n, p=pk) + 1
    return out


def dummy_code(levels: np.ndarray, space: CovariateSpace) -> np.ndarray:
    """Reference-level dummy coding.

    Level 1 of each factor maps to all zeros and level ``j > 1`` sets the
    ``(j-1)``-th indicator of that factor's block, e.g. a 3-level factor
    codes as (0,0), (1,0), (0,1).
    """
    levels = np.atleast_2d(np.asarray(levels))
    out = np.zeros(levels.shape[:-1] + (space.n_dummies,))
    col = 0
    for k, m in enumerate(space.levels_per_factor):
        for j in range(2, m + 1):
            out[..., col] = levels[..., k] == j
            col += 1
    return out


@dataclass(frozen=True)
class TrialRecord:
    y: float
    t: int
    profile: CovariateProfile


@dataclass(frozen=True)
class TrialData:
    """Columnar trial data: responses, arm indicators and profiles.

    ``t[i] == 1`` means patient ``i`` received treatment 1.
    """

    y: np.ndarray
    t: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        t = np.asarray(self.t, dtype=np.int64)
        levels = np.atleast_2d(np.asarray(self.levels, dtype=np.int64))
        if not (len(y) == len(t) == len(levels)):
            raise ValueError("y, t and levels must have equal length")
        if not np.all(np.isfinite(y)):
            raise ValueError("responses must be finite")
        if not np.all((t == 0) | (t == 1)):
            raise ValueError("arm indicators must be 0 or 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "levels", levels)

    @classmethod
    def from_records(cls, records: Iterable[TrialRecord]) -> "TrialData":
        records = list(records)
        return cls(
            y=[r.y for r in records],
            t=[r.t for r in records],
            levels=[r.profile for r in records],
        )

    def records(self) -> list[TrialRecord]:
        return [
            TrialRecord(float(y), int(t), tuple(int(v) for v in lv))
            for y, t, lv in zip(self.y, self.t, self.levels)
        ]

    def __len__(self) -> int:
        return len(self.y)

    def strata(self, space: CovariateSpace) -> np.ndarray:
        return encode_strata(self.levels, space)

    def swap_arms(self) -> "TrialData":
        return TrialData(self.y, 1 - self.t, self.levels)


TEST_METHODS = ("wald", "adj_stratified", "adj_general", "adj_cr")


@dataclass(frozen=True)
class TestReport:
    """Outcome of a two-sided test against the standard normal."""

    statistic: float
    p_value: float
    reject: bool
    alpha: float
    method: str

    __test__ = False

    @classmethod
    def from_statistic(cls, statistic: float, method: str, alpha: float = 0.05) -> "TestReport":
        from scipy.stats import norm

        if method not in TEST_METHODS:
            raise ValueError(f"unknown test method {method!r}")
        statistic = float(statistic)
        p_value = float(2.0 * norm.sf(abs(statistic)))
        reject = bool(abs(statistic) > norm.ppf(1.0 - alpha / 2.0))
        return cls(statistic, p_value, reject, alpha, method)
