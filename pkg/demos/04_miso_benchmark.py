"""Antenna-selection energy efficiency with a limited set of decisions.

A 4x1 link picks one of the 15 equal-gain antenna subsets. For each budget of
k decisions this compares the full-set optimum, the exhaustive quantizer on
the k-subset, a trained classifier and a k-means channel quantizer. The full
benchmark uses 100k channels; this demo uses 20k and trains classifiers for
k in {2, 4} only.
"""

import logging

from doq.experiments import mimo_benchmark
from doq.model import ComplexGaussianMatrix, MimoEEConfig, ParameterSampler, find_pstar, sample_params

logging.basicConfig(level=logging.INFO, format="%(message)s")

cfg = MimoEEConfig(n_tx=4, n_rx=1, r0=1e6, sigma2=5.0, p0=10.0, p_max=12.0)
samples = sample_params(ParameterSampler(ComplexGaussianMatrix(cfg.n_rx, cfg.n_tx), seed=7), 20_000)

# The transmit budget that maximizes average efficiency over the full set.
pstar = find_pstar(cfg, range(1, 21), samples.subset(range(5000)))
print(f"P* over 1..20 mW: {pstar} mW\n")

rows = mimo_benchmark(cfg, samples, k_max=8, seed=0, nn_ks=(2, 4))
print(" k   optimal    exhaustive  classifier   k-means   loss exh.%  loss k-means%")
for r in rows:
    nn = f"{r.eu_nn:10.0f}" if r.eu_nn is not None else " " * 10
    print(f"{r.k:2d}  {r.eu_optimal:9.0f}  {r.eu_doq_exhaustive:10.0f}  {nn}  {r.eu_kmeans:9.0f}"
          f"  {r.loss_doq_pct:9.2f}  {r.loss_kmeans_pct:12.2f}")
