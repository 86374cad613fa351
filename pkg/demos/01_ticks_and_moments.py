"""
=================================
Tick data and windowed moments
=================================

Builds a small synthetic market, checks it, and computes per-company
moments over fixed windows.  The price moments are weighted by trade
volume, so the first one is the window's VWAP; the frequency moments
weight every tick equally.
"""

# %%
# A synthetic market
# ------------------
# Prices follow a geometric random walk and volumes are log-normal.  The
# generator also draws a random risk vector per company, used later.
import numpy as np

from marketmoments.moments import WindowConfig, compute_moments, derived_central_stats
from marketmoments.trade_data import SynthSpec, generate_synthetic, to_dense, validate_series

spec = SynthSpec(n_companies=3, n_steps=600, price0=50.0, volatility=0.01, volume_mean=200.0)
series, risks = generate_synthetic(spec, seed=42)
report = validate_series(series)
print(f"{len(series)} ticks, companies {series.companies}, valid: {report.ok}")

# %%
# Moments over windows of 100 ticks
# ---------------------------------
# ``xi_steps`` is the shift used for returns: the return compares the
# value traded now with the same volume at the price ``xi`` ticks ago.
# The first window of each company has no past prices, so it carries no
# return moments.
cfg = WindowConfig(N=100, xi_steps=20, n_max=4)
sets = compute_moments(series, cfg)
first = sets[1]
print(f"{first.company} window {first.window}, center step {first.center_step}")
print("  price moments p(m):     ", np.array2string(first.p, precision=6))
print("  frequency moments pi(m):", np.array2string(first.pi, precision=6))
print("  return moments r(m):    ", np.array2string(first.r, precision=6))

# %%
# The first price moment is the VWAP
# ----------------------------------
# Recomputing it straight from the window's ticks gives the same number.
dense = to_dense(series)
q = dense.companies.index(first.company)
sl = slice(first.start, first.start + cfg.N)
vwap = np.sum(dense.value[q, sl]) / np.sum(dense.volume[q, sl])
print(f"p(1) = {first.p[0]:.10f}, direct VWAP = {vwap:.10f}")

# %%
# Central statistics
# ------------------
# Variance and skewness follow from the raw moments.  For the
# volume-weighted moments ``p(2)`` weights each squared price by the
# squared volume while ``p(1)`` uses the plain volume, so ``p(2) - p(1)**2``
# is not a variance of any probability law and can come out negative when
# big trades sit at low prices.  Skewness is then undefined.  The
# equally-weighted moments always give a non-negative variance.
for label, raw in (("volume weighted", first.p), ("equal weights", first.pi)):
    cs = derived_central_stats(raw)
    print(f"{label:>15}: mean {cs.mean:.4f}, variance {cs.variance:+.4f}, skew {cs.skewness:+.3f}")
