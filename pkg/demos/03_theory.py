"""What large-sample theory says about the unadjusted Wald test.

For each response model we compute the limiting variance of the Wald
statistic under the null, both for stratified designs and for complete
randomization, and turn it into a predicted rejection rate at 5%.
"""
from carat import asymptotic_s_variance, load_plan, predicted_size

for name, label in (("table1", "logistic"), ("table2", "poisson"), ("table3", "exponential")):
    plan = load_plan(name)
    for tag in ("sb", "cr"):
        cell = next(s for s in plan.cells if s.design.tag == tag)
        s = asymptotic_s_variance(cell)
        print(
            f"{label:<12}{tag:<4}var(S)={s.s_variance:6.3f}  "
            f"size={100 * predicted_size(s):5.2f}%  {s.classification}"
        )

# Poisson under stratified blocks lands exactly on 1: the log link makes
# the model-based variance match the average conditional variance.
