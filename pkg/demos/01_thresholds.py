"""Single-band power control: where does each power level win?

With one band the energy-efficiency utility is exp(-c sigma2 / (p g)) / p.
Higher powers pay off on weak channels, lower powers on strong ones, so the
gain axis splits into intervals, one per power level.
"""

import numpy as np

from doq.model import DecisionSet, MultiBandEE, MultiBandEEConfig, PowerVector
from doq.quantizer import ExhaustiveArgmax, pairwise_threshold, scalar_effective_thresholds

powers = [1.0, 2.0, 3.0]
c, sigma2 = 1.0, 10.0

# Pairwise crossing points. Only the consecutive pairs end up as boundaries.
for i in range(len(powers)):
    for j in range(i + 1, len(powers)):
        t = pairwise_threshold(powers[i], powers[j], c, sigma2)
        print(f"g0*({powers[i]:g}, {powers[j]:g}) = {t:.6f}")

q = scalar_effective_thresholds(powers, c, sigma2)
print("effective thresholds:", np.round(q.thresholds, 6))

# Compare with brute force on a grid of gains.
model = MultiBandEE(MultiBandEEConfig(1, c, sigma2))
decisions = DecisionSet(tuple(PowerVector((p,)) for p in powers))
g = np.linspace(0.5, 12, 24)
chosen_t = q.indices(g)
chosen_x = ExhaustiveArgmax(model, decisions).indices(g[:, None])
for gi, a, b in zip(g, chosen_t, chosen_x):
    print(f"g={gi:6.3f}  threshold rule -> P={powers[a]:g}   exhaustive -> P={powers[b]:g}")
