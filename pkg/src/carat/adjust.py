"""Variance-adjusted treatment tests for covariate-adaptive designs.

All three statistics share the numerator ``h'(h^{-1}(ybar)) * delta_hat``
and differ in the variance used in the denominator:

* ``adj_stratified`` -- pooled within-stratum variance, for designs whose
  within-stratum imbalances stay bounded (stratified blocks, Hu-Hu);
* ``adj_general``    -- within-stratum variance plus ``sigma_h^2``, the
  extra variance from growing within-stratum imbalances (minimisation),
  estimated by re-running the design on the observed covariates;
* ``adj_cr``         -- overall sample variance, for complete randomization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CovariateSpace, TestReport, TrialData, encode_strata
from .glm import FitResult, GlmFamily
from .randomize import Design, assign_sequences


class DegenerateVarianceError(ValueError):
    """A variance estimate needed by an adjusted statistic is zero or undefined."""


@dataclass(frozen=True)
class VarianceComponents:
    sigma_nu_sq: float
    sigma_h_sq: float
    sigma_y_sq: float
    stratum_means: np.ndarray  # NaN for strata absent from the data


def pooled_within_stratum_variance(data: TrialData, space: CovariateSpace) -> tuple[float, np.ndarray]:
    """Pooled within-stratum variance and the per-stratum means.

    Means pool both arms.  Only nonempty strata count towards the degrees of
    freedom ``n - m``.
    """
    s = encode_strata(data.levels, space)
    counts = np.bincount(s, minlength=space.n_strata)
    sums = np.bincount(s, weights=data.y, minlength=space.n_strata)
    nonempty = counts > 0
    means = np.full(space.n_strata, np.nan)
    means[nonempty] = sums[nonempty] / counts[nonempty]
    dof = len(data) - int(nonempty.sum())
    if dof <= 0:
        raise DegenerateVarianceError("every stratum holds a single patient")
    resid = data.y - means[s]
    return float(resid @ resid / dof), means


def estimate_sigma_h_mc(
    levels: np.ndarray,
    space: CovariateSpace,
    design: Design,
    stratum_means: np.ndarray,
    B: int = 500,
    rng: np.random.Generator | None = None,
    uniforms: np.ndarray | None = None,
) -> float:
    """Monte Carlo estimate of ``sigma_h^2``.

    The design is re-run ``B`` times on the fixed covariate sequence
    ``levels``; each replay gives ``W = n^{-1/2} sum_j D_n(s_j) mean_j`` and
    the sample variance of the ``W`` values is returned.  ``uniforms`` of
    shape ``(B, n)`` may replace ``rng`` to script the coin draws.
    """
    levels = np.asarray(levels)
    n = len(levels)
    if uniforms is None:
        if B < 2:
            raise ValueError("need at least two Monte Carlo replays")
        uniforms = rng.random((B, n))
    B = len(uniforms)
    t = assign_sequences(levels[None], space, design, uniforms, np.zeros(B, dtype=np.int64))
    return float(np.var(replay_weighted_imbalance(t, levels, space, stratum_means), ddof=1))


def replay_weighted_imbalance(t: np.ndarray, levels: np.ndarray, space: CovariateSpace, stratum_means) -> np.ndarray:
    """``n^{-1/2} sum_j D_n(s_j) mean_j`` for each row of ``t``.

    The integer stratum imbalances are formed first, so a design that always
    ends in the same imbalances yields identical values, not rounding noise.
    """
    s = encode_strata(levels, space)
    onehot = np.zeros((len(s), space.n_strata), dtype=np.int64)
    onehot[np.arange(len(s)), s] = 1
    d = (2 * np.asarray(t, dtype=np.int64) - 1) @ onehot
    means = np.nan_to_num(np.asarray(stratum_means, dtype=float), nan=0.0)
    return (d @ means) / np.sqrt(t.shape[-1])


def variance_components(data: TrialData, space: CovariateSpace, sigma_h_sq: float = 0.0) -> VarianceComponents:
    nu, means = pooled_within_stratum_variance(data, space)
    return VarianceComponents(nu, float(sigma_h_sq), float(np.var(data.y, ddof=1)), means)


def _adjusted(fit: FitResult, variance: float, ybar: float, family: GlmFamily, n: int, method: str, alpha: float):
    if not variance > 0:
        raise DegenerateVarianceError(f"{method}: variance estimate is {variance}")
    scale = float(family.dmean(family.link(ybar)))
    return TestReport.from_statistic(scale * fit.delta_hat / (2.0 * np.sqrt(variance / n)), method, alpha)


def adjusted_statistic_stratified(
    fit: FitResult, components: VarianceComponents, ybar: float, family: GlmFamily, n: int, alpha: float = 0.05
) -> TestReport:
    return _adjusted(fit, components.sigma_nu_sq, ybar, family, n, "adj_stratified", alpha)


def adjusted_statistic_general(
    fit: FitResult, components: VarianceComponents, ybar: float, family: GlmFamily, n: int, alpha: float = 0.05
) -> TestReport:
    return _adjusted(
        fit, components.sigma_nu_sq + components.sigma_h_sq, ybar, family, n, "adj_general", alpha
    )


def adjusted_statistic_cr(
    fit: FitResult, sigma_y_sq: float, ybar: float, family: GlmFamily, n: int, alpha: float = 0.05
) -> TestReport:
    return _adjusted(fit, sigma_y_sq, ybar, family, n, "adj_cr", alpha)


def default_adjustment(design: Design) -> str:
    """The adjusted statistic that matches a design's imbalance behaviour."""
    if design.tag == "cr":
        return "adj_cr"
    if design.within_stratum_bounded:
        return "adj_stratified"
    return "adj_general"
