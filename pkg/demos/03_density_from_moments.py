"""
=========================
Densities from n moments
=========================

A finite list of raw moments does not fix a distribution, but it does fix
the first ``n`` Taylor terms of the log characteristic function.  Adding
a small ``-b x**2k`` term makes the function decay, and a numerical
Fourier inversion then gives a density whose first ``n`` moments match
the input.  With two moments the result is the normal law.
"""

# %%
# Moments of three ticks
# ----------------------
# Prices 2, 3, 4 traded with volumes 1, 2, 1.
import math

import numpy as np

from marketmoments.moments import WindowConfig, compute_moments
from marketmoments.prob_approx import (GridSpec, build_charfn, charfn_to_density,
                                       default_regularizer, density_from_moments, density_moments,
                                       gaussian_density, moments_to_cumulants)
from marketmoments.trade_data import TickSeries

ticks = TickSeries.from_arrays([0, 1, 2], ["ACME"] * 3, [2.0, 3.0, 4.0], [1.0, 2.0, 1.0])
(ms,) = compute_moments(ticks, WindowConfig(3, 0, 3))
a = moments_to_cumulants(ms.p)
print("price moments:", ms.p, " cumulants:", np.round(a, 12))

# %%
# Two moments: the normal law
# ---------------------------
# The cumulant series stops at the variance and decays by itself, so no
# regularizer is needed and the inversion reproduces the closed form.
grid = GridSpec(4097, 8)
two = charfn_to_density(build_charfn(a[:2]), grid)
gap = np.max(np.abs(two.eta - gaussian_density(a[0], a[1], grid).eta))
print(f"n=2: peak {two.eta.max():.6f} at p={two.p[two.eta.argmax()]}, "
      f"max gap to the normal density {gap:.1e}")

# %%
# Three moments need a regularizer
# --------------------------------
# An odd cubic term never decays on its own.  The regularizer only touches
# orders above ``n``, so the moments up to three survive exactly; the
# price is that the density can dip below zero where the skew is strong.
# A wide grid keeps the aliased copies of the tails apart.
wide = GridSpec(8193, 64)
three = density_from_moments(ms.p, b=0.01, two_k=4, grid=wide, negativity_budget=math.inf)
print("n=3, b=0.01, 2k=4: recovered moment errors",
      [f"{e:.1e}" for e in three.info["moment_errors"]],
      f"normalization {three.normalization:.12f}, negative mass {three.negative_mass:.3f}")

# %%
# Choosing the regularizer weight
# -------------------------------
# The default weight scales with the width of the distribution.  Its
# scale factor trades decay speed against negative lobes: for a mildly
# skewed input, smaller factors keep the density close to non-negative.
mu = [1.0, 1.25, 1.8]  # mean 1, variance 0.25, third cumulant 0.05
for scale in (0.05, 1e-2, 1e-3):
    b, two_k = default_regularizer(moments_to_cumulants(mu), scale=scale)
    dg = density_from_moments(mu, b_scale=scale, grid=wide, negativity_budget=math.inf)
    print(f"scale {scale:<6}: b={b:.3g}, 2k={two_k}, negative mass {dg.negative_mass:.1e}, "
          f"m3 recovered {density_moments(dg, 3):.8f}")
