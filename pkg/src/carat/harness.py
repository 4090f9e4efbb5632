"""Replicated size and power experiments.

Every replication draws from its own random streams, derived from the
plan's master seed, the cell's parameters and the replication index, so a
cell's results do not depend on how replications are batched or spread
over worker threads.  Within a replication the trial stream is consumed in
a fixed order: covariates, then one coin draw per patient, then responses.
A second, independent stream drives the Monte Carlo replays behind
``sigma_h^2``.

A replication whose working model cannot be fitted (an arm mean on the
boundary of its domain) or whose adjusted variance is zero is redrawn from
a fresh stream and counted in ``non_estimable``.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .adjust import (
    DegenerateVarianceError,
    adjusted_statistic_cr,
    adjusted_statistic_general,
    adjusted_statistic_stratified,
    default_adjustment,
    replay_weighted_imbalance,
    variance_components,
)
from .core import TrialData, sample_profiles
from .glm import NonEstimableError, fit_working_model, wald_statistic
from .randomize import ImbalanceSnapshot, assign_sequences, imbalance_snapshot
from .scenario import ExperimentPlan, Scenario, derive_seed, linear_predictor
from .theory import asymptotic_s_variance, predicted_size

CSV_COLUMNS = (
    "family", "design", "n", "delta", "method", "rate", "mc_se",
    "stat_mean", "stat_var", "predicted_size", "non_estimable",
)

CHUNK = 250
MC_CHUNK = 16
MAX_REDRAWS = 1000


def replication_streams(master_seed: int, cell_key: str, rep: int, attempt: int = 0):
    """Independent (trial, Monte Carlo) generators for one replication."""
    ss = np.random.SeedSequence([master_seed, derive_seed(cell_key), rep, attempt])
    trial, mc = ss.spawn(2)
    return np.random.default_rng(trial), np.random.default_rng(mc)


def run_trial(scenario: Scenario, rng: np.random.Generator) -> tuple[TrialData, ImbalanceSnapshot]:
    """Simulate one trial with the sequential (one patient at a time) engine."""
    levels = sample_profiles(scenario.space, scenario.n, rng)
    t, state = scenario.design.run(levels, scenario.space, rng)
    y = scenario.family.sample(linear_predictor(scenario, levels, t), rng)
    return TrialData(y, t, levels), imbalance_snapshot(state)


def simulate_trials(scenario: Scenario, rngs: Sequence[np.random.Generator]) -> list[TrialData]:
    """Batched equivalent of :func:`run_trial` over several generators.

    Consumes each generator exactly as :func:`run_trial` does, so trial ``r``
    is identical to ``run_trial(scenario, rngs[r])``.
    """
    n, space = scenario.n, scenario.space
    levels = np.stack([sample_profiles(space, n, rng) for rng in rngs])
    uniforms = np.stack([rng.random(n) for rng in rngs])
    t = assign_sequences(levels, space, scenario.design, uniforms).astype(np.int64)
    eta = linear_predictor(scenario, levels, t)
    return [
        TrialData(scenario.family.sample(eta[r], rng), t[r], levels[r])
        for r, rng in enumerate(rngs)
    ]


def resolve_methods(methods: Iterable[str], scenario: Scenario, adjust: str | None = None) -> tuple[str, ...]:
    """Expand ``adjusted`` into the design's adjusted statistic.

    ``adjust`` overrides the choice: ``none`` drops adjusted statistics,
    ``stratified``/``general``/``cr`` force one for every design.
    """
    out: list[str] = []
    for m in methods:
        if m == "adjusted":
            if adjust == "none":
                continue
            m = f"adj_{adjust}" if adjust else default_adjustment(scenario.design)
        if m not in out:
            out.append(m)
    return tuple(out)


def _statistics(data, scenario, methods, alpha, sigma_h_sq=None) -> dict[str, float]:
    family, n = scenario.family, scenario.n
    fit = fit_working_model(data, family)
    out = {}
    ybar = float(data.y.mean())
    comps = None
    for m in methods:
        if m == "wald":
            out[m] = wald_statistic(fit, alpha).statistic
            continue
        if m == "adj_cr":
            out[m] = adjusted_statistic_cr(fit, float(np.var(data.y, ddof=1)), ybar, family, n, alpha).statistic
            continue
        if comps is None:
            comps = variance_components(data, scenario.space, sigma_h_sq or 0.0)
        if m == "adj_stratified":
            out[m] = adjusted_statistic_stratified(fit, comps, ybar, family, n, alpha).statistic
        else:
            out[m] = adjusted_statistic_general(fit, comps, ybar, family, n, alpha).statistic
    return out


def _sigma_h_batch(scenario, datas, mc_rngs, B) -> list[float]:
    """Monte Carlo sigma_h^2 for several trials in one batched replay."""
    space, n = scenario.space, scenario.n
    means = []
    for data in datas:
        comps = variance_components(data, space)
        means.append(comps.stratum_means)
    levels = np.stack([d.levels for d in datas])
    uniforms = np.concatenate([rng.random((B, n)) for rng in mc_rngs])
    t = assign_sequences(levels, space, scenario.design, uniforms, np.repeat(np.arange(len(datas)), B))
    out = []
    for k, data in enumerate(datas):
        w = replay_weighted_imbalance(t[k * B : (k + 1) * B], data.levels, space, means[k])
        out.append(float(np.var(w, ddof=1)))
    return out


def _evaluate(scenario, datas, mc_rngs, methods, alpha, mc_b):
    """Statistics per trial, ``None`` for non-estimable trials."""
    results: list[dict | None] = [None] * len(datas)
    ok = []
    for k, data in enumerate(datas):
        try:
            fit_working_model(data, scenario.family)
            if any(m.startswith("adj_") and m != "adj_cr" for m in methods):
                variance_components(data, scenario.space)
            ok.append(k)
        except (NonEstimableError, DegenerateVarianceError):
            pass
    sigma_h = {}
    if "adj_general" in methods and ok:
        vals = _sigma_h_batch(scenario, [datas[k] for k in ok], [mc_rngs[k] for k in ok], mc_b)
        sigma_h = dict(zip(ok, vals))
    for k in ok:
        try:
            results[k] = _statistics(datas[k], scenario, methods, alpha, sigma_h.get(k))
        except (NonEstimableError, DegenerateVarianceError):
            results[k] = None
    return results


def _run_chunk(args):
    scenario, cell_key, reps, plan_seed, methods, alpha, mc_b = args
    streams = [replication_streams(plan_seed, cell_key, r) for r in reps]
    datas = simulate_trials(scenario, [s[0] for s in streams])
    results = _evaluate(scenario, datas, [s[1] for s in streams], methods, alpha, mc_b)
    redraws = 0
    for k, rep in enumerate(reps):
        attempt = 0
        while results[k] is None:
            attempt += 1
            redraws += 1
            if attempt > MAX_REDRAWS:
                raise RuntimeError(f"replication {rep} of {cell_key} is never estimable")
            trial_rng, mc_rng = replication_streams(plan_seed, cell_key, rep, attempt)
            data = simulate_trials(scenario, [trial_rng])
            results[k] = _evaluate(scenario, data, [mc_rng], methods, alpha, mc_b)[0]
    return results, redraws


@dataclass(frozen=True)
class MethodSummary:
    method: str
    rate: float
    mc_se: float
    stat_mean: float
    stat_var: float
    predicted_size: float | None


@dataclass
class CellResult:
    scenario: Scenario
    replications: int
    non_estimable: int
    methods: dict[str, MethodSummary]
    statistics: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    panel: str = ""

    def rate(self, method: str) -> float:
        return self.methods[method].rate

    def rows(self) -> list[dict]:
        s = self.scenario
        return [
            {
                "family": s.family.tag,
                "design": s.design.tag,
                "n": s.n,
                "delta": s.delta,
                "method": m.method,
                "rate": m.rate,
                "mc_se": m.mc_se,
                "stat_mean": m.stat_mean,
                "stat_var": m.stat_var,
                "predicted_size": m.predicted_size,
                "non_estimable": self.non_estimable,
            }
            for m in self.methods.values()
        ]


def theory_prediction(scenario: Scenario, method: str, alpha: float) -> float | None:
    """Asymptotic size where theory supplies it without a σ_h² estimate."""
    if scenario.delta != 0:
        return None
    if method == "wald":
        if scenario.design.tag == "ps":
            return None
        return predicted_size(asymptotic_s_variance(scenario), alpha)
    if method == default_adjustment(scenario.design):
        return alpha
    return None


def run_cell(
    scenario: Scenario,
    plan: ExperimentPlan,
    methods: Sequence[str] | None = None,
    threads: int = 1,
    panel: str = "",
) -> CellResult:
    """Rejection rates of each method over ``plan.replications`` trials."""
    methods = tuple(methods) if methods is not None else resolve_methods(plan.methods, scenario)
    R = plan.replications
    cell_key = panel + "|" + scenario.cell_key()
    size = MC_CHUNK if "adj_general" in methods else CHUNK
    chunks = [
        (scenario, cell_key, list(range(a, min(a + size, R))), plan.seed, methods, plan.alpha, plan.mc_b)
        for a in range(0, R, size)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(_run_chunk, chunks))
    else:
        outputs = [_run_chunk(c) for c in chunks]
    per_rep = [r for res, _ in outputs for r in res]
    non_estimable = sum(k for _, k in outputs)

    crit = norm.ppf(1.0 - plan.alpha / 2.0)
    summaries, stats = {}, {}
    for m in methods:
        x = np.array([r[m] for r in per_rep])
        rate = float(np.mean(np.abs(x) > crit))
        summaries[m] = MethodSummary(
            m,
            rate,
            float(np.sqrt(rate * (1.0 - rate) / R)),
            float(np.mean(x)),
            float(np.var(x, ddof=1)) if R > 1 else 0.0,
            theory_prediction(scenario, m, plan.alpha),
        )
        stats[m] = x
    return CellResult(scenario, R, non_estimable, summaries, stats, panel)


def run_size_cell(scenario: Scenario, plan: ExperimentPlan, **kwargs) -> CellResult:
    if scenario.delta != 0:
        raise ValueError("a size cell needs delta = 0")
    return run_cell(scenario, plan, **kwargs)


def run_power_curve(
    scenario: Scenario, deltas: Sequence[float], plan: ExperimentPlan, **kwargs
) -> list[CellResult]:
    if len(deltas) == 0:
        raise ValueError("the delta grid is empty")
    return [run_cell(scenario.with_(delta=float(d)), plan, **kwargs) for d in deltas]


def run_plan(
    plan: ExperimentPlan, threads: int = 1, adjust: str | None = None, progress=None
) -> list[CellResult]:
    results = []
    panels = plan.panels or ("",) * len(plan.cells)
    for scenario, panel in zip(plan.cells, panels):
        methods = resolve_methods(plan.methods, scenario, adjust)
        results.append(run_cell(scenario, plan, methods, threads=threads, panel=panel))
        if progress is not None:
            progress(results[-1])
    return results


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(results: Iterable[CellResult], path=None) -> str:
    """CSV text with one row per (cell, method); also written to ``path``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for res in results:
        for row in res.rows():
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def read_report(text: str) -> list[dict]:
    """Parse :func:`emit_report` output back into typed rows."""
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        rows.append(
            {
                "family": raw["family"],
                "design": raw["design"],
                "n": int(raw["n"]),
                "delta": float(raw["delta"]),
                "method": raw["method"],
                "rate": float(raw["rate"]),
                "mc_se": float(raw["mc_se"]),
                "stat_mean": float(raw["stat_mean"]),
                "stat_var": float(raw["stat_var"]),
                "predicted_size": float(raw["predicted_size"]) if raw["predicted_size"] else None,
                "non_estimable": int(raw["non_estimable"]),
            }
        )
    return rows


def format_table(results: Iterable[CellResult]) -> str:
    """Aligned text table of rejection rates in percent."""
    header = f"{'family':<24}{'design':>7}{'n':>6}{'delta':>8}  {'method':<15}{'rate%':>8}{'se%':>7}{'pred%':>8}{'var':>8}"
    lines = [header, "-" * len(header)]
    for res in results:
        for row in res.rows():
            pred = "" if row["predicted_size"] is None else f"{100 * row['predicted_size']:.2f}"
            lines.append(
                f"{row['family']:<24}{row['design']:>7}{row['n']:>6}{row['delta']:>8.3g}  {row['method']:<15}"
                f"{100 * row['rate']:>8.2f}{100 * row['mc_se']:>7.2f}{pred:>8}{row['stat_var']:>8.3f}"
            )
    return "\n".join(lines)
