"""GLM families and the treatment-only working model.

The working model regresses the response on the arm indicator alone.  Its
maximum likelihood estimates have a closed form: the inverse link applied
to the two arm means.  The model-based standard error of the treatment
effect comes from the 2x2 information matrix, which reduces to

    se^2 = phi * (1 / (n1 * a1) + 1 / (n0 * a0)),   a = h'(eta) * gamma'(eta)

evaluated at the fitted arm predictors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import TestReport, TrialData

FAMILY_TAGS = (
    "bernoulli_logit",
    "poisson_log",
    "normal_identity",
    "exponential_inverse",
    "exponential_neg_inverse",
)


class DomainError(ValueError):
    """A linear predictor falls outside the family's valid range."""


class NonEstimableError(ValueError):
    """The working model has no finite MLE for this dataset."""


def _expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(eta, dtype=float)))


def _logit(m):
    m = np.asarray(m, dtype=float)
    return np.log(m) - np.log1p(-m)


@dataclass(frozen=True)
class GlmFamily:
    """Response distribution plus link.

    ``mean`` is the inverse link ``h``, ``dmean`` its derivative ``h'``,
    ``link`` is ``h^{-1}`` and ``dtheta`` is ``gamma'``, the derivative of the
    natural parameter with respect to the linear predictor (1 for canonical
    links).  ``phi`` is the known dispersion.
    """

    tag: str
    phi: float
    mean: Callable
    dmean: Callable
    link: Callable
    dtheta: Callable
    eta_ok: Callable
    mean_ok: Callable
    draw: Callable

    def __repr__(self) -> str:
        return f"GlmFamily({self.tag!r}, phi={self.phi})"

    def __eq__(self, other) -> bool:
        return isinstance(other, GlmFamily) and (self.tag, self.phi) == (other.tag, other.phi)

    def __hash__(self) -> int:
        return hash((self.tag, self.phi))

    def weight(self, eta):
        """``h'(eta) * gamma'(eta)``, the per-observation Fisher weight times phi."""
        return self.dmean(eta) * self.dtheta(eta)

    def cond_variance(self, eta):
        """Var(Y | eta) = phi * h'(eta) / gamma'(eta)."""
        return self.phi * self.dmean(eta) / self.dtheta(eta)

    def check_eta(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        if not np.all(self.eta_ok(eta)):
            bad = eta[~np.asarray(self.eta_ok(eta))]
            raise DomainError(f"{self.tag}: linear predictor outside valid domain, e.g. {bad.flat[0]}")
        return eta

    def sample(self, eta, rng: np.random.Generator) -> np.ndarray:
        """Draw responses with conditional mean ``h(eta)``."""
        return self.draw(self.check_eta(eta), rng)


def _bernoulli(eta, rng):
    return (rng.random(np.shape(eta)) < _expit(eta)).astype(float)


def _poisson(eta, rng):
    return rng.poisson(np.exp(eta)).astype(float)


def _exponential_draw(sign):
    def draw(eta, rng):
        return rng.exponential(sign / np.asarray(eta))

    return draw


def _always(x):
    return np.ones(np.shape(x), dtype=bool)


def _ones(x):
    return np.ones(np.shape(x))


def get_family(tag: str, phi: float | None = None) -> GlmFamily:
    """Family by tag.  ``phi`` is only free for ``normal_identity`` (sigma^2)."""
    if tag == "bernoulli_logit":
        return GlmFamily(
            tag, 1.0,
            mean=_expit,
            dmean=lambda e: _expit(e) * _expit(-np.asarray(e, dtype=float)),
            link=_logit,
            dtheta=_ones,
            eta_ok=_always,
            mean_ok=lambda m: (np.asarray(m) > 0) & (np.asarray(m) < 1),
            draw=_bernoulli,
        )
    if tag == "poisson_log":
        return GlmFamily(
            tag, 1.0,
            mean=np.exp, dmean=np.exp, link=np.log, dtheta=_ones,
            eta_ok=_always,
            mean_ok=lambda m: np.asarray(m) > 0,
            draw=_poisson,
        )
    if tag == "normal_identity":
        sigma2 = 1.0 if phi is None else float(phi)
        if sigma2 <= 0:
            raise ValueError("normal variance must be positive")

        def draw_normal(eta, rng):
            return rng.normal(eta, np.sqrt(sigma2))

        return GlmFamily(
            tag, sigma2,
            mean=lambda e: np.asarray(e, dtype=float),
            dmean=_ones,
            link=lambda m: np.asarray(m, dtype=float),
            dtheta=_ones,
            eta_ok=lambda e: np.isfinite(e),
            mean_ok=lambda m: np.isfinite(m),
            draw=draw_normal,
        )
    if tag == "exponential_inverse":
        # mean 1/eta; natural parameter -1/mean = -eta, so gamma' = -1
        return GlmFamily(
            tag, 1.0,
            mean=lambda e: 1.0 / np.asarray(e, dtype=float),
            dmean=lambda e: -1.0 / np.asarray(e, dtype=float) ** 2,
            link=lambda m: 1.0 / np.asarray(m, dtype=float),
            dtheta=lambda e: -np.ones(np.shape(e)),
            eta_ok=lambda e: np.asarray(e) > 0,
            mean_ok=lambda m: np.asarray(m) > 0,
            draw=_exponential_draw(1.0),
        )
    if tag == "exponential_neg_inverse":
        return GlmFamily(
            tag, 1.0,
            mean=lambda e: -1.0 / np.asarray(e, dtype=float),
            dmean=lambda e: 1.0 / np.asarray(e, dtype=float) ** 2,
            link=lambda m: -1.0 / np.asarray(m, dtype=float),
            dtheta=_ones,
            eta_ok=lambda e: np.asarray(e) < 0,
            mean_ok=lambda m: np.asarray(m) > 0,
            draw=_exponential_draw(-1.0),
        )
    raise ValueError(f"unknown family {tag!r}; expected one of {FAMILY_TAGS}")


def sample_response(family: GlmFamily, eta, rng: np.random.Generator) -> np.ndarray:
    return family.sample(eta, rng)


@dataclass(frozen=True)
class FitResult:
    mu_hat: float
    delta_hat: float
    se_delta: float
    n1: int
    n0: int

    @property
    def wald(self) -> float:
        return self.delta_hat / self.se_delta


def fit_working_model(data: TrialData, family: GlmFamily) -> FitResult:
    """Closed-form MLE of the treatment-only GLM and its model-based SE.

    Raises
    ------
    NonEstimableError
        If an arm is empty or its mean sits on the boundary of the mean
        domain (e.g. all-zero Bernoulli or Poisson responses).
    """
    y, t = data.y, data.t
    n1 = int(t.sum())
    n0 = len(t) - n1
    if n1 == 0 or n0 == 0:
        raise NonEstimableError("both arms must be nonempty")
    ybar1 = float(y[t == 1].mean())
    ybar0 = float(y[t == 0].mean())
    for label, m in (("treatment", ybar1), ("control", ybar0)):
        if not family.mean_ok(m):
            raise NonEstimableError(f"{label} arm mean {m} is on the boundary for {family.tag}")
    eta0 = float(family.link(ybar0))
    eta1 = float(family.link(ybar1))
    a1 = float(family.weight(eta1))
    a0 = float(family.weight(eta0))
    se2 = family.phi * (1.0 / (n1 * a1) + 1.0 / (n0 * a0))
    return FitResult(eta0, eta1 - eta0, float(np.sqrt(se2)), n1, n0)


def wald_statistic(fit: FitResult, alpha: float = 0.05) -> TestReport:
    return TestReport.from_statistic(fit.delta_hat / fit.se_delta, "wald", alpha)
