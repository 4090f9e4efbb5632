"""Large-sample behaviour of the unadjusted Wald statistic.

Under the null the Wald statistic is asymptotically normal with variance

    (E[Var(Y|X)] + sigma_h^2) / (phi * h'(h^{-1}(E[Y])) / gamma'(h^{-1}(E[Y])))

for designs that keep overall imbalance bounded, and Var(Y) / (same
denominator) under complete randomization.  With finitely many strata all
population moments are exact finite sums, computed here by enumeration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .scenario import Scenario

VALID_TOL = 1e-9


@dataclass(frozen=True)
class PopulationMoments:
    e_y: float
    var_y: float
    e_var_y_given_x: float


@dataclass(frozen=True)
class AsymptoticSummary:
    e_y: float
    var_y: float
    e_var_y_given_x: float
    denom: float
    sigma_h_sq: float
    complete_randomization: bool
    s_variance: float
    classification: str


def population_moments(scenario: Scenario) -> PopulationMoments:
    if scenario.delta != 0:
        raise ValueError("population moments are defined under the null, delta = 0")
    family = scenario.family
    eta = family.check_eta(scenario.stratum_eta())
    pi = scenario.space.stratum_probs()
    means = family.mean(eta)
    e_y = float(pi @ means)
    e_var = float(pi @ family.cond_variance(eta))
    between = float(pi @ (means - e_y) ** 2)
    return PopulationMoments(e_y, e_var + between, e_var)


def wald_denominator(scenario: Scenario, e_y: float) -> float:
    """``phi * h'(h^{-1}(E[Y])) / gamma'(h^{-1}(E[Y]))``."""
    family = scenario.family
    eta = family.link(e_y)
    return float(family.phi * family.dmean(eta) / family.dtheta(eta))


def classify(s_variance: float) -> str:
    if abs(s_variance - 1.0) <= VALID_TOL:
        return "valid"
    return "conservative" if s_variance < 1.0 else "anti-conservative"


def asymptotic_s_variance(
    scenario: Scenario, sigma_h_sq: float = 0.0, complete_randomization: bool | None = None
) -> AsymptoticSummary:
    """Asymptotic null variance of the Wald statistic and the size verdict.

    ``complete_randomization`` defaults to whether the scenario's design is
    ``cr``; in that case ``sigma_h_sq`` is ignored and Var(Y) is the numerator.
    """
    if sigma_h_sq < 0:
        raise ValueError("sigma_h^2 must be nonnegative")
    if complete_randomization is None:
        complete_randomization = scenario.design.tag == "cr"
    mom = population_moments(scenario)
    denom = wald_denominator(scenario, mom.e_y)
    if complete_randomization:
        sigma_h_sq = 0.0
        numerator = mom.var_y
    else:
        numerator = mom.e_var_y_given_x + sigma_h_sq
    s_var = numerator / denom
    return AsymptoticSummary(
        mom.e_y, mom.var_y, mom.e_var_y_given_x, denom, float(sigma_h_sq),
        bool(complete_randomization), s_var, classify(s_var),
    )


def predicted_size(summary: AsymptoticSummary | float, alpha: float = 0.05) -> float:
    """Two-sided rejection probability of the nominal-level Wald test."""
    s_var = summary if isinstance(summary, (int, float)) else summary.s_variance
    if s_var <= 0:
        raise ValueError("asymptotic variance must be positive")
    z = norm.ppf(1.0 - alpha / 2.0)
    return float(2.0 * norm.sf(z / np.sqrt(s_var)))


def format_summary(summary: AsymptoticSummary, alpha: float = 0.05) -> str:
    rows = [
        ("E[Y]", summary.e_y),
        ("Var(Y)", summary.var_y),
        ("E[Var(Y|X)]", summary.e_var_y_given_x),
        ("denominator", summary.denom),
        ("sigma_h^2", summary.sigma_h_sq),
        ("S variance", summary.s_variance),
        ("predicted size", predicted_size(summary, alpha)),
    ]
    width = max(len(k) for k, _ in rows)
    lines = [f"{k:<{width}}  {v:.6f}" for k, v in rows]
    lines.append(f"{'numerator':<{width}}  {'Var(Y)' if summary.complete_randomization else 'E[Var(Y|X)] + sigma_h^2'}")
    lines.append(f"{'verdict':<{width}}  {summary.classification}")
    return "\n".join(lines)


SUMMARY_FIELDS = (
    "e_y", "var_y", "e_var_y_given_x", "denom", "sigma_h_sq", "s_variance", "predicted_size", "classification",
)


def summary_csv(summary: AsymptoticSummary, alpha: float = 0.05) -> str:
    values = [
        repr(summary.e_y), repr(summary.var_y), repr(summary.e_var_y_given_x), repr(summary.denom),
        repr(summary.sigma_h_sq), repr(summary.s_variance), repr(predicted_size(summary, alpha)),
        summary.classification,
    ]
    return ",".join(SUMMARY_FIELDS) + "\n" + ",".join(values) + "\n"
