"""Magnetic Schrödinger operators: twisted resolvent vs perturbed resolvent.

For a field B0 + b*frak_b the resolvent is Lipschitz close to the twisted
resolvent of B0, while the spectrum only moves Hölder-1/2.
Run with ``python3 demos/03_resolvent_comparison.py``.
"""

# %%
import numpy as np

from magspec.analysis import fit_holder, log_grid, theorem2_compare
from magspec.models import ModelSpec, constant_field
from magspec.operators import Grid

spec = ModelSpec("mag_schrodinger", Grid(2, 16), a_shift=3.0)
b = np.r_[0.0, log_grid(1e-3, 1e-1, 7)]
gap, rb = theorem2_compare(spec, constant_field(0.5), constant_field(1.0), None, b)

# %%
print("      b     ||R'-R_b||   d_H(R,R')")
for bi, r, g in zip(b, rb.values, gap.values):
    print(f"{bi:9.2e}  {r:10.3e}  {g:10.3e}")

rfit = fit_holder(rb, 1.0)
gfit = fit_holder(gap, 0.5)
print(f"||R'-R_b|| slope {rfit.slope:.3f} (Lipschitz means 1)")
print(f"spectral gap slope {gfit.slope:.3f}, sup ratio to b^1/2 {gfit.sup_ratio:.3f}")
