"""Weak decay: bounding spectral motion through truncation.

When only ||H||_{1,0} is finite, truncate at range M.  Twisting keeps kernel
moduli, so the truncation error u(M) bounds both sides and
d_H(H_b, H) <= 2 u(M) + d_H((H_b)_M, H_M).
Run with ``python3 demos/05_truncation_chain.py``.
"""

# %%
from magspec.analysis import alpha0_pipeline
from magspec.models import FieldSpec, ModelSpec
from magspec.operators import Grid

spec = ModelSpec("longrange", Grid(1, 256), decay_type="power", decay_rate=1.05)
rep = alpha0_pipeline(spec, FieldSpec("signed_square", db=1.0), [0.001, 0.01, 0.1, 1.0], [4, 16, 64, 256])

for M in sorted(rep.u):
    print(f"u({M:>5g}) = {rep.u[M]:.4f}")

# %%
print("\n     b      M    d_full     bound   holds")
for r in rep.rows:
    print(f"{r.b:6g} {r.M:6g} {r.d_full:9.4f} {r.bound:9.4f}   {r.holds}")
print(f"\nchain holds everywhere: {rep.all_hold}; u nonincreasing: {rep.u_monotone}")
