"""
Forecast evaluation and the subtypes-by-states grid
===================================================

Hold out each test patient's final 30% of timepoints, pick their subtype
from the first 70%, and score the predicted bin probabilities against
what was actually observed.  Sweeping the model sizes reproduces the
kind of table used to choose the subtype and state counts.
"""

import math

from cthmm_subtyping import (
    BinningScheme,
    EmConfig,
    FeatureBinning,
    ObservationTimeConfig,
    grid_evaluate,
    sample_cohort,
)
from cthmm_subtyping.synthesis import random_mixture

scheme = BinningScheme(
    (
        FeatureBinning(name="heart_rate", lower=40.0, upper=150.0, bins=5),
        FeatureBinning(name="systolic_bp", lower=40.0, upper=200.0, bins=5),
    )
)

truth = random_mixture(2, 3, scheme, seed=19, structure="left-to-right")
cohort = sample_cohort(
    truth,
    140,
    ObservationTimeConfig(min_observations=10, max_observations=20),
    missing_rate=0.15,
    seed=3,
)

config = EmConfig(
    seed=4,
    restarts=2,
    structure="left-to-right",
    max_iterations=50,
    delta_quantization=0.05,
)

print("evaluating subtype counts {1, 2} x state counts {1, 3} on one 80:20 split")
grid = grid_evaluate(
    cohort.trajectories,
    [1, 2],
    [1, 3],
    config,
    train_fraction=0.8,
    prefix_fraction=0.7,
    split_seed=11,
    scheme=scheme,
)
print(f"({grid.n_train} training patients, {grid.n_test} test patients)\n")
print(grid.render_text())

best = min(grid.cells.items(), key=lambda item: item[1].mean)
print(f"\nbest cell: {best[0][0]} subtypes, {best[0][1]} states "
      f"at {best[1].mean:.4f} nats per observation")
print(f"a blind uniform guess over 5 bins scores ln 5 = {math.log(5):.4f}")

flat = grid.cells[(2, 1)]
structured = grid.cells[(2, 3)]
reduction = (flat.mean - structured.mean) / flat.mean
print(f"\nmodelling state progression cuts the error by {reduction:.1%} "
      f"({flat.mean:.4f} -> {structured.mean:.4f})")
