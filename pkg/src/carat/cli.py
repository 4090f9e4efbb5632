"""Command line entry point: ``carat {size,power,theory,assign}``."""
from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .core import CovariateSpace, InvalidProfileError
from .glm import DomainError
from .harness import emit_report, format_table, run_plan
from .randomize import DESIGN_TAGS, Design, DesignState
from .scenario import ConfigError, load_plan, load_scenario
from .theory import asymptotic_s_variance, format_summary, summary_csv


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--plan", required=True, help="plan file, or a bundled plan name such as table1")
    p.add_argument("--out", help="write the CSV report here (default: stdout)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--adjust", choices=("none", "stratified", "general", "cr"),
                   help="adjusted statistic for every design (default: the one matching each design)")
    p.add_argument("--mc-b", type=int, help="Monte Carlo replays for sigma_h^2")
    p.add_argument("--replications", type=int, help="override the plan's replication count")
    p.add_argument("--seed", type=int, help="override the plan's master seed")
    p.add_argument("--quiet", action="store_true", help="no progress lines on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    size = sub.add_parser("size", help="simulated size of each test under the null")
    _add_run_options(size)
    power = sub.add_parser("power", help="simulated power over a grid of treatment effects")
    _add_run_options(power)

    theory = sub.add_parser("theory", help="large-sample variance of the Wald statistic")
    theory.add_argument("--scenario", required=True)
    theory.add_argument("--sigma-h-sq", type=float, default=0.0)
    theory.add_argument("--alpha", type=float, default=0.05)

    assign = sub.add_parser("assign", help="assign a stream of covariate profiles, one per line")
    assign.add_argument("--design", required=True, choices=DESIGN_TAGS)
    assign.add_argument("--stream", action="store_true", help="read profiles from stdin until EOF")
    assign.add_argument("--factors", default="2,2", help="levels per factor, e.g. 2,2,3,4")
    assign.add_argument("--block-size", type=int, default=4)
    assign.add_argument("--coin-p", type=float, default=0.75)
    assign.add_argument("--inner", choices=("block", "efron"), default="block")
    assign.add_argument("--seed", type=int, default=0)
    return parser


def _run(args, need_null: bool) -> int:
    plan = load_plan(args.plan)
    changes = {}
    if args.mc_b is not None:
        changes["mc_b"] = args.mc_b
    if args.replications is not None:
        changes["replications"] = args.replications
    if args.seed is not None:
        changes["seed"] = args.seed
    if changes:
        plan = dataclasses.replace(plan, **changes)
    if need_null and any(s.delta != 0 for s in plan.cells):
        raise ConfigError("size plans need delta = 0 in every cell; use `carat power`")

    def progress(res):
        if not args.quiet:
            s = res.scenario
            print(f"done {s.family.tag} {s.design.tag} n={s.n} delta={s.delta}", file=sys.stderr)

    results = run_plan(plan, threads=args.threads, adjust=args.adjust, progress=progress)
    text = emit_report(results, args.out)
    if args.out:
        print(format_table(results))
    else:
        sys.stdout.write(text)
    return 0


def _theory(args) -> int:
    scenario = load_scenario(args.scenario)
    summary = asymptotic_s_variance(scenario, args.sigma_h_sq)
    print(format_summary(summary, args.alpha))
    print()
    sys.stdout.write(summary_csv(summary, args.alpha))
    return 0


def _parse_profile(line: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in line.replace(",", " ").split())


def _assign(args, stdin) -> int:
    space = CovariateSpace(tuple(int(m) for m in args.factors.split(",")))
    design = Design(args.design, block_size=args.block_size, coin_p=args.coin_p, inner=args.inner)
    state = DesignState(space)
    rng = np.random.default_rng(args.seed)
    for line in stdin:
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        arm = design.assign(_parse_profile(line), state, rng)
        print(arm, flush=True)
    return 0


def main(argv=None, stdin=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "size":
            return _run(args, need_null=True)
        if args.command == "power":
            return _run(args, need_null=False)
        if args.command == "theory":
            return _theory(args)
        return _assign(args, stdin if stdin is not None else sys.stdin)
    except (ConfigError, DomainError, InvalidProfileError, ValueError, OSError) as exc:
        print(f"carat: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
