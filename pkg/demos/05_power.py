"""Power of the adjusted tests as the treatment effect grows.

Designs that balance within strata should dominate: their adjusted
statistic divides by the smallest variance.
"""
from carat import ExperimentPlan, Design, load_plan, run_power_curve

base = load_plan("table1").cells[0]  # logistic, n = 200
deltas = [0.0, 0.4, 0.8, 1.2]
print("delta " + "".join(f"{d:>8}" for d in ("cr", "ps", "sb", "hh")))
curves = {}
for tag in ("cr", "ps", "sb", "hh"):
    scenario = base.with_(design=Design(tag))
    plan = ExperimentPlan((scenario,), replications=300, methods=("adjusted",), mc_b=100, seed=3)
    curves[tag] = [next(iter(c.methods.values())).rate for c in run_power_curve(scenario, deltas, plan)]
for k, d in enumerate(deltas):
    print(f"{d:5.1f} " + "".join(f"{100 * curves[t][k]:7.1f}%" for t in curves))
