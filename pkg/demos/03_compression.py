"""How many decisions does a loss target need?

Designs M-decision quantizers with the alternating algorithm for the
two-band energy-efficiency and sum-rate utilities and prints the relative
optimality loss against each oracle, then the compression rate M(1%)/M(sigma)
for the sum-rate case. Uses 3000 samples to keep the run short.
"""

from doq.evaluation import DoqDesigner, FineGrid, WaterFilling, compression_curve, fine_grid_candidates, loss_by_m
from doq.model import ExponentialGains, MultiBandEE, MultiBandEEConfig, ParameterSampler, SumRate, SumRateConfig, sample_params

samples = sample_params(ParameterSampler(ExponentialGains(2), seed=3), 3000)
ms = [1, 2, 4, 8, 16]

ee = MultiBandEE(MultiBandEEConfig(2, 1.0, 10.0))
grid = FineGrid(resolution=64)
ee_loss = loss_by_m(ee, samples, DoqDesigner(fine_grid_candidates(ee, grid)), ms, grid)

sr = SumRate(SumRateConfig(2, sigma2=10.0, p_total=10.0))
sr_designer = DoqDesigner(fine_grid_candidates(sr, FineGrid(resolution=200)))
sr_loss = loss_by_m(sr, samples, sr_designer, ms, WaterFilling())

print(" M   EE loss %   sum-rate loss %")
for m in ms:
    print(f"{m:2d}   {ee_loss[m]:9.3f}   {sr_loss[m]:15.4f}")

curve = compression_curve(sr, samples, [0.1, 0.5, 1.0, 2.0, 5.0, 10.0], sr_designer, 8, WaterFilling())
print(f"\nsum-rate, M(1%) = {curve.reference_m}")
for p in curve.points:
    print(f"sigma={p.sigma_pct:5.1f}%  M={p.m_required}  gamma={p.gamma}")
