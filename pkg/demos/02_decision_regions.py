"""Decision regions of a two-band energy-efficiency problem.

Each band picks a power from {2, 3} mW. The gain plane [0, 5]^2 splits into
four regions; the stronger band gets the higher power, and the map is
symmetric under swapping the bands.
"""

import numpy as np

from doq.experiments import decision_regions
from doq.model import MultiBandEE, MultiBandEEConfig

model = MultiBandEE(MultiBandEEConfig(n_bands=2, c=1.0, sigma2=10.0))
rows, decisions = decision_regions(model, [2.0, 3.0], resolution=40)

labels = np.array([r[2] for r in rows]).reshape(40, 40)
symbols = "abcd"
print("legend:", ", ".join(f"{symbols[k]}={d.powers}" for k, d in enumerate(decisions)))
print("rows: g1 from 5 (top) down to 0; columns: g2 from 0 to 5")
for i in range(39, -1, -1):
    print("".join(symbols[k] for k in labels[i]))

counts = np.bincount(labels.ravel(), minlength=4)
print("cells per region:", dict(zip(symbols, counts.tolist())))
