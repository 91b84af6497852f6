"""Defect exponent against the decay exponent alpha for power-law hopping.

With kernel decay <r>^-p in 1D, the weighted norm is finite for alpha < p - 1
and the defect is expected to scale like b^(eps/2), eps = min(alpha, 1).  What happens as alpha
approaches 0 is an open question; this demo only reports the measured slopes.
Run with ``python3 demos/04_alpha_exponent.py`` (about a minute).
"""

# %%
from magspec.analysis import fit_holder, harper_operator, log_grid, sweep_defect
from magspec.models import ModelSpec
from magspec.operators import Grid
from magspec.spectral import eigvalsh

b = log_grid(10**-3.2, 10**-1.2, 6)
print("   p    alpha   eps/2   measured")
for p in (1.26, 1.51, 1.76, 2.01, 3.01):
    spec = ModelSpec("longrange", Grid(1, 512), decay_type="power", decay_rate=p)
    H, _ = harper_operator(spec)
    z = eigvalsh(H).min - 4
    fit = fit_holder(sweep_defect(spec, None, z, b, workers=4), spec.epsilon / 2)
    print(f"{p:5.2f}  {spec.alpha:6.2f}  {spec.epsilon / 2:6.3f}  {fit.slope:8.3f}")

# %%
# Slopes are reported as measured; finite boxes carry boundary corrections.
