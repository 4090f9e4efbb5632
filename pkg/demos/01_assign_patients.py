"""How the four designs balance a stream of patients.

We draw 200 patients with two binary covariates and hand the same
arrival sequence and the same coin draws to each design.  Then we look at
the three kinds of imbalance each design leaves behind: overall, per
covariate level (margins), and per covariate combination (strata).
"""
import numpy as np

from carat import CovariateSpace, Design, sample_profiles
from carat.randomize import imbalance_snapshot

space = CovariateSpace((2, 2))
rng = np.random.default_rng(2024)
levels = sample_profiles(space, 200, rng)
coins = rng.random(200)


class Replay:
    """Feed a design the same uniforms every time."""

    def __init__(self, values):
        self.it = iter(values)

    def random(self):
        return next(self.it)


print(f"{'design':<8}{'overall':>9}{'margins':>22}{'strata':>20}")
for tag in ("cr", "sb", "ps", "hh"):
    t, state = Design(tag).run(levels, space, Replay(coins))
    snap = imbalance_snapshot(state)
    margins = " ".join(f"{int(d):+d}" for m in snap.d_margin for d in m)
    strata = " ".join(f"{int(d):+d}" for d in snap.d_stratum)
    print(f"{tag:<8}{snap.d_overall:>+9d}{margins:>22}{strata:>20}")

# Stratified blocks keep every stratum within +-2.  Minimisation (ps) only
# looks at margins, so its strata can drift; Hu-Hu weighs all three levels.
