"""Trial scenarios, experiment plans and their TOML config files.

A scenario file is flat key-value TOML::

    family = "bernoulli_logit"
    mu = -1.0
    delta = 0.0
    beta = [2.0, 4.0]
    factors = [2, 2]
    probs = [[0.5, 0.5], [0.5, 0.5]]
    n = 500
    design = "sb"
    block_size = 4
    seed = 1

A plan file uses the same keys, except that ``family``, ``design``, ``n``
and ``delta`` may be lists, and adds ``replications``, ``alpha``,
``methods`` and ``mc_b``.  Optional ``[panels.<name>]`` tables override the
top-level keys, one grid per panel.
"""
from __future__ import annotations

import hashlib
import itertools
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .core import CovariateSpace, dummy_code
from .glm import FAMILY_TAGS, GlmFamily, get_family
from .randomize import Design, HuHuWeights

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PLANS_DIR = Path(__file__).parent / "plans"

_LINKS = {
    ("bernoulli", "logit"): "bernoulli_logit",
    ("poisson", "log"): "poisson_log",
    ("normal", "identity"): "normal_identity",
    ("exponential", "inverse"): "exponential_inverse",
    ("exponential", "neg_inverse"): "exponential_neg_inverse",
}

METHOD_CHOICES = ("wald", "adjusted", "adj_stratified", "adj_general", "adj_cr")


class ConfigError(ValueError):
    """A scenario or plan file is malformed."""


@dataclass(frozen=True)
class Scenario:
    """One fully specified trial: covariates, true model, size and design."""

    space: CovariateSpace
    family: GlmFamily
    mu: float
    delta: float
    beta: tuple[float, ...]
    n: int
    design: Design
    seed: int = 0

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        if len(beta) != self.space.n_dummies:
            raise ConfigError(
                f"beta has {len(beta)} entries, the covariate space needs {self.space.n_dummies}"
            )
        if self.n < 2:
            raise ConfigError(f"sample size must be at least 2, got {self.n}")

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def stratum_eta(self, arm: int = 0) -> np.ndarray:
        """Linear predictor of every stratum, in stratum order."""
        return linear_predictor(self, self.space.profiles(), arm)

    def cell_key(self) -> str:
        """Canonical text identifying the scenario, used to derive seeds."""
        d = self.design
        return "|".join(
            map(
                repr,
                (
                    self.family.tag, self.family.phi, self.mu, self.delta, self.beta, self.n,
                    self.space.levels_per_factor, self.space.factor_probs,
                    d.tag, d.block_size, d.coin_p, d.hh_weights, d.inner, d.criterion,
                ),
            )
        )


def linear_predictor(scenario: Scenario, levels, arm) -> np.ndarray | float:
    """``mu + delta * arm + beta . dummy(profile)``; vectorised over profiles."""
    levels = np.asarray(levels)
    eta = scenario.mu + scenario.delta * np.asarray(arm) + dummy_code(levels, scenario.space) @ np.asarray(
        scenario.beta
    )
    if levels.ndim == 1:
        return float(np.asarray(eta).reshape(-1)[0])
    return eta


def _family(cfg: dict) -> GlmFamily:
    tag = cfg.get("family")
    if tag is None:
        raise ConfigError("missing key 'family'")
    link = cfg.get("link")
    if tag not in FAMILY_TAGS:
        if link is None or (tag, link) not in _LINKS:
            raise ConfigError(f"unknown family/link {tag!r}/{link!r}")
        tag = _LINKS[(tag, link)]
    elif link is not None and not tag.endswith("_" + link):
        raise ConfigError(f"link {link!r} contradicts family {tag!r}")
    return get_family(tag, cfg.get("phi"))


def _design(cfg: dict, tag: str) -> Design:
    weights = cfg.get("hh_weights")
    if weights is not None:
        weights = list(map(float, weights))
        weights = HuHuWeights(weights[0], tuple(weights[1:-1]), weights[-1])
    return Design(
        tag,
        block_size=int(cfg.get("block_size", 4)),
        coin_p=float(cfg.get("coin_p", 0.75)),
        hh_weights=weights,
        inner=cfg.get("inner", "block"),
        criterion=cfg.get("criterion", "squared"),
    )


def _space(cfg: dict) -> CovariateSpace:
    if "factors" not in cfg:
        raise ConfigError("missing key 'factors'")
    probs = cfg.get("probs")
    return CovariateSpace(tuple(cfg["factors"]), tuple(map(tuple, probs)) if probs else ())


def scenario_from_config(cfg: dict[str, Any]) -> Scenario:
    try:
        return Scenario(
            space=_space(cfg),
            family=_family(cfg),
            mu=float(cfg["mu"]),
            delta=float(cfg.get("delta", 0.0)),
            beta=tuple(cfg["beta"]),
            n=int(cfg["n"]),
            design=_design(cfg, cfg.get("design", "cr")),
            seed=int(cfg.get("seed", 0)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_scenario(path) -> Scenario:
    return scenario_from_config(_read_toml(path))


def _toml_value(v) -> str:
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def scenario_to_config(s: Scenario) -> dict[str, Any]:
    cfg: dict[str, Any] = {
        "family": s.family.tag,
        "mu": s.mu,
        "delta": s.delta,
        "beta": list(s.beta),
        "factors": list(s.space.levels_per_factor),
        "probs": [list(p) for p in s.space.factor_probs],
        "n": s.n,
        "design": s.design.tag,
        "block_size": s.design.block_size,
        "coin_p": s.design.coin_p,
        "inner": s.design.inner,
        "criterion": s.design.criterion,
        "seed": s.seed,
    }
    if s.family.tag == "normal_identity":
        cfg["phi"] = s.family.phi
    if s.design.hh_weights is not None:
        w = s.design.hh_weights
        cfg["hh_weights"] = [w.overall, *w.margin, w.stratum]
    return cfg


def dumps_config(cfg: dict[str, Any]) -> str:
    return "".join(f"{k} = {_toml_value(v)}\n" for k, v in cfg.items())


@dataclass(frozen=True)
class ExperimentPlan:
    """A grid of scenarios plus the replication settings shared by all cells."""

    cells: tuple[Scenario, ...]
    replications: int = 5000
    alpha: float = 0.05
    methods: tuple[str, ...] = ("wald", "adjusted")
    seed: int = 0
    mc_b: int = 500
    name: str = "plan"
    panels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.mc_b < 2:
            raise ConfigError("mc_b must be at least 2")
        for m in self.methods:
            if m not in METHOD_CHOICES:
                raise ConfigError(f"unknown method {m!r}; expected one of {METHOD_CHOICES}")


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def plan_from_config(cfg: dict[str, Any], name: str = "plan") -> ExperimentPlan:
    panels = cfg.get("panels") or {"": {}}
    base = {k: v for k, v in cfg.items() if k != "panels"}
    cells, panel_names = [], []
    for pname, override in panels.items():
        merged = {**base, **override}
        for family, n, design, delta in itertools.product(
            _as_list(merged.get("family")),
            _as_list(merged.get("n")),
            _as_list(merged.get("design", "cr")),
            _as_list(merged.get("delta", 0.0)),
        ):
            cells.append(
                scenario_from_config({**merged, "family": family, "n": n, "design": design, "delta": delta})
            )
            panel_names.append(pname)
    return ExperimentPlan(
        cells=tuple(cells),
        replications=int(cfg.get("replications", 5000)),
        alpha=float(cfg.get("alpha", 0.05)),
        methods=tuple(cfg.get("methods", ("wald", "adjusted"))),
        seed=int(cfg.get("seed", 0)),
        mc_b=int(cfg.get("mc_b", 500)),
        name=name,
        panels=tuple(panel_names),
    )


def resolve_plan_path(path_or_name) -> Path:
    """A path, or the name of a bundled plan such as ``table1``."""
    p = Path(path_or_name)
    if p.exists():
        return p
    for candidate in (PLANS_DIR / p.name, PLANS_DIR / f"{p.name}.cfg"):
        if candidate.exists():
            return candidate
    raise ConfigError(f"no plan file {path_or_name!r}")


def load_plan(path_or_name) -> ExperimentPlan:
    path = resolve_plan_path(path_or_name)
    return plan_from_config(_read_toml(path), name=path.stem)


def derive_seed(*parts) -> int:
    """Stable 64-bit integer from arbitrary printable parts."""
    digest = hashlib.sha256("\x1f".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "little")
