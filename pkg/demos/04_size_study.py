"""A small size study, the same machinery that builds the tables.

The bundled ``table1`` plan is shrunk to 300 replications so it finishes
in seconds.  Rates will be noisy, but the pattern is already visible:
the Wald test rarely rejects under covariate-adaptive designs, and the
adjusted tests sit near 5%.
"""
import dataclasses

from carat import load_plan, run_plan
from carat.harness import format_table

plan = dataclasses.replace(load_plan("table1"), replications=300, mc_b=100)
plan = dataclasses.replace(plan, cells=plan.cells[4:], panels=plan.panels[4:])  # n = 500 only
print(format_table(run_plan(plan)))
