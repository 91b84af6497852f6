"""Inside the certificate: partition of unity and the S1/S2 split.

Run with ``python3 demos/02_partition_and_split.py``.
"""

# %%
import numpy as np

from magspec.certificate import (
    admissible_window,
    build_partition,
    certify_resolvent_point,
    defect,
    defect_operator,
    defect_split,
)
from magspec.models import ModelSpec, build_harper, constant_field
from magspec.operators import Grid, twist
from magspec.spectral import eigvalsh, op_norm

grid = Grid(2, 24)
H, phi = build_harper(ModelSpec("harper", grid), constant_field(1.0))
lo, hi = admissible_window(grid)
print(f"admissible b for L={grid.L:g}: [{lo:.4f}, {hi:g}]")

# %%
# Squared bumps sum to one; each bump touches at most 25 others in 2D.
for b in np.geomspace(lo, hi, 4):
    P = build_partition(grid, b)
    err = np.max(np.abs(P.square_sum() - 1))
    print(f"b={b:.3f}: {len(P):4d} bumps, neighbors {P.max_neighbors:2d}, "
          f"radius {P.support_radius():.2f} <= {2 / np.sqrt(b):.2f}, |sum g^2 - 1| = {err:.1e}")

# %%
sigma = eigvalsh(H)
z = sigma.min - 1
b = 0.15
P = build_partition(grid, b)
S = defect_operator(H, phi, b, z, P, spectrum=sigma)
S1, S2 = defect_split(H, phi, b, z, P, spectrum=sigma)
print(f"||S|| = {op_norm(S.matrix):.4f}, ||S1|| = {op_norm(S1.matrix):.4f}, ||S2|| = {op_norm(S2.matrix):.4f}")
print(f"||S - S1 - S2|| = {op_norm(S.matrix - S1.matrix - S2.matrix):.1e}")

# %%
# Shrinking b shrinks both pieces roughly like b^1/2.
for b in (0.8, 0.4, 0.2, 0.12):
    r = defect(H, phi, b, z, build_partition(grid, b), spectrum=sigma)
    print(f"b={b:<6} ||S1||/b^1/2 = {r.norm_S1 / np.sqrt(b):.3f}  ||S2||/b^1/2 = {r.norm_S2 / np.sqrt(b):.3f}")

# %%
# A certified z is a resolvent point of H_b: check against the true spectrum.
b = 0.15
sigma_b = eigvalsh(twist(H, phi, b))
for z in (sigma.min - 1, sigma.min - 0.2, 0.5 * (sigma.min + sigma.max)):
    cert = certify_resolvent_point(H, phi, b, z, P, spectrum=sigma)
    print(f"z={z:+.3f}: certified={cert.in_resolvent}, ||S||={cert.report.norm_S:.3f}, "
          f"dist(z, sigma(H_b)) = {np.min(np.abs(sigma_b.values - z)):.3f}")
