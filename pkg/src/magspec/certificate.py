"""Partition-of-unity approximate resolvents and their defect operators.

For a Harper-like family ``H_b = exp(i b phi) H`` the approximate resolvent
glues the exact resolvent ``R(z)`` of ``H`` over cells of size ``b^{-1/2}``,
with each cell's piece conjugated by the phase seen from the cell center::

    T_c(z) = exp(i b phi(., c)) g_c R(z) g_c exp(-i b phi(., c))
    Gamma  = sum_c T_c(z)
    S(z)   = (H_b - z) Gamma - Id

``||S(z)|| < 1`` certifies that ``z`` lies in the resolvent set of ``H_b``.
``S`` splits into a phase part ``S1`` (the factor ``exp(i b fl) - 1``) and a
commutator part ``S2`` (the factor ``g_c(x') - g_c(x)``).
"""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, SpectrumProximityError
from .models import resolvent
from .operators import Grid, KernelOperator, PhaseFunction, sh_norm
from .spectral import Spectrum, eigvalsh, op_norm, spectral_distance

__all__ = [
    "PROFILE_PLATEAU",
    "PROFILE_CUTOFF",
    "PartitionOfUnity",
    "DefectReport",
    "Certificate",
    "admissible_window",
    "profile",
    "build_partition",
    "gamma",
    "gamma_tilde",
    "gamma_hat",
    "defect",
    "defect_split",
    "defect_operator",
    "certify_resolvent_point",
    "DEFECT_COLUMNS",
    "write_defect_csv",
]

PROFILE_PLATEAU = 0.5
PROFILE_CUTOFF = 1.5


def profile(r):
    """Radial cutoff: 1 on ``[0, 1/2]``, 0 on ``[3/2, inf)``, quintic smoothstep between."""
    t = np.clip((np.asarray(r, dtype=float) - PROFILE_PLATEAU) / (PROFILE_CUTOFF - PROFILE_PLATEAU), 0, 1)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def admissible_window(grid: Grid):
    """Range of ``b`` for which at least ``4^dim`` cells fit in the box."""
    return (8.0 / grid.L) ** 2, 1.0


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Quadratic partition of unity ``sum_c g_c^2 = 1`` on a grid.

    Row ``k`` of ``g_values`` holds the normalized profile centered at
    ``center_points[k] = b^{-1/2} centers[k]``.
    """

    grid: Grid
    b: float
    centers: np.ndarray
    center_points: np.ndarray
    g_values: np.ndarray
    supports: tuple
    neighbors: tuple

    def __len__(self):
        return len(self.centers)

    def square_sum(self) -> np.ndarray:
        return np.einsum("kn,kn->n", self.g_values, self.g_values)

    def multiplicity(self) -> np.ndarray:
        """Number of supports containing each grid point."""
        return (self.g_values > 0).sum(axis=0)

    @property
    def max_neighbors(self) -> int:
        return max(len(v) for v in self.neighbors)

    def support_radius(self) -> float:
        pts = self.grid.points
        return max(
            float(np.max(np.linalg.norm(pts[s] - c, axis=-1)))
            for s, c in zip(self.supports, self.center_points)
        )


def build_partition(grid: Grid, b: float) -> PartitionOfUnity:
    """Normalized translates ``g(b^{1/2} x - gamma)`` over the integer lattice.

    ``b`` must lie in :func:`admissible_window`.  Centers within ``2 b^{-1/2}``
    of the box are considered and those whose support misses the grid are
    dropped.  Two centers are neighbors when their supports share a grid
    point; with the cutoff at ``3/2`` there are at most ``5^dim`` of them.
    """
    lo, hi = admissible_window(grid)
    if not (lo * (1 - 1e-12) <= b <= hi):
        raise ConfigError(
            f"b={b:g} outside the admissible window [{lo:.6g}, {hi:g}] = [(8/L)^2, 1] "
            f"for L={grid.L:g}"
        )
    rb = np.sqrt(b)
    first = int(np.floor(-rb * grid.L / 2 - 2))
    last = int(np.ceil(rb * grid.L / 2 + 2))
    ticks = np.arange(first, last + 1)
    mesh = np.meshgrid(*([ticks] * grid.dim), indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=-1)
    pts = grid.points
    raw = np.empty((len(centers), grid.n))
    for k, c in enumerate(centers):
        raw[k] = profile(np.linalg.norm(rb * pts - c, axis=-1))
    keep = raw.max(axis=1) > 0
    centers, raw = centers[keep], raw[keep]
    g = raw / np.sqrt(np.einsum("kn,kn->n", raw, raw))
    g.flags.writeable = False
    mask = g > 0
    supports = tuple(np.flatnonzero(row) for row in mask)
    overlap = (mask.astype(float) @ mask.T.astype(float)) > 0
    neighbors = tuple(np.flatnonzero(row) for row in overlap)
    return PartitionOfUnity(grid, float(b), centers, centers / rb, g, supports, neighbors)


def _as_matrix(T):
    return T.matrix if isinstance(T, KernelOperator) else np.asarray(T)


def gamma(T_family: Sequence, P: PartitionOfUnity) -> KernelOperator:
    """``sum_c X_c T_c X_c`` with ``X_c`` the indicator of the support of ``g_c``."""
    if len(T_family) != len(P):
        raise ValueError("need one operator per partition center")
    n = P.grid.n
    out = np.zeros((n, n), dtype=complex)
    for T, s in zip(T_family, P.supports):
        out[np.ix_(s, s)] += _as_matrix(T)[np.ix_(s, s)]
    return KernelOperator.from_matrix(P.grid, out)


def gamma_tilde(T_family: Sequence, P: PartitionOfUnity, psi) -> np.ndarray:
    """``sum_c X_c |T_c X_c psi|`` (absolute value taken pointwise)."""
    psi = np.asarray(psi)
    out = np.zeros(P.grid.n)
    for T, s in zip(T_family, P.supports):
        out[s] += np.abs(_as_matrix(T)[np.ix_(s, s)] @ psi[s])
    return out


def gamma_hat(A: KernelOperator, T_family: Sequence, P: PartitionOfUnity, psi) -> np.ndarray:
    """``sum_c X_c A |T_c X_c psi|`` for an entrywise nonnegative ``A``."""
    entries = A.entries
    if np.any(entries.imag != 0) or np.any(entries.real < 0):
        raise ValueError("gamma_hat needs an operator with nonnegative real entries")
    Am = A.matrix.real
    psi = np.asarray(psi)
    out = np.zeros(P.grid.n)
    for T, s in zip(T_family, P.supports):
        v = np.abs(_as_matrix(T)[:, s] @ psi[s])
        out[s] += Am[s] @ v
    return out


@dataclass(frozen=True)
class DefectReport:
    b: float
    z: complex
    norm_S: float
    norm_S1: float
    norm_S2: float
    bound_value: float
    certified: bool

    def row(self) -> dict:
        return {
            "b": self.b,
            "re_z": self.z.real,
            "im_z": self.z.imag,
            "norm_S": self.norm_S,
            "norm_S1": self.norm_S1,
            "norm_S2": self.norm_S2,
            "bound_value": self.bound_value,
            "certified": self.certified,
        }


@dataclass(frozen=True)
class Certificate:
    in_resolvent: bool
    margin: float
    report: DefectReport


def _prepare(H, phi, b, z, P, spectrum):
    if P is not None and (P.grid != H.grid or not np.isclose(P.b, abs(b))):
        raise ConfigError(f"partition was built for b={P.b:g} on another grid, not |b|={abs(b):g}")
    spectrum = eigvalsh(H) if spectrum is None else spectrum
    dist = spectral_distance(z, spectrum)
    if not dist > 1e-6 * max(spectrum.source_norm, 1.0):
        raise SpectrumProximityError(
            f"z={complex(z)} is within {dist:.3e} of sigma(H); no certificate", dist
        )
    return spectrum, dist


def _assemble(H, phi, b, z, P, spectrum, phase_matrix, want_total=True, want_split=True):
    """Operator matrices ``(S, S1, S2)``; entries not requested are ``None``."""
    n = H.n
    if b == 0:
        zero = np.zeros((n, n), dtype=complex)
        return zero, zero.copy(), zero.copy()
    z = complex(z)
    pts = H.grid.points
    Hm = H.matrix
    Rm = resolvent(H, z, spectrum).matrix
    Phi = phi.matrix(pts) if phase_matrix is None else phase_matrix
    W = Hm @ Rm if want_split else None
    Gam = np.zeros((n, n), dtype=complex) if want_total else None
    S1 = np.zeros((n, n), dtype=complex) if want_split else None
    S2 = np.zeros((n, n), dtype=complex) if want_split else None
    for c, gv, s in zip(P.center_points, P.g_values, P.supports):
        pc = phi(pts, c[None, :])  # phi(x, c) for every grid point
        u = np.exp(1j * b * pc)
        gs = gv[s]
        # g_c R g_c exp(-i b phi(., c)), restricted to the support block
        M = (gs[:, None] * Rm[np.ix_(s, s)] * gs[None, :]) * u[s].conj()[None, :]
        if want_total:
            Gam[np.ix_(s, s)] += u[s][:, None] * M
        if want_split:
            fl = Phi[:, s] + pc[s][None, :] - pc[:, None]
            S1[:, s] += u[:, None] * ((Hm[:, s] * np.expm1(1j * b * fl)) @ M)
            S2[:, s] += u[:, None] * (Hm[:, s] @ M)
            S2[np.ix_(s, s)] -= (u[s] * gs)[:, None] * W[np.ix_(s, s)] * (gs * u[s].conj())[None, :]
    S = None
    if want_total:
        Hb = Hm * np.exp(1j * b * Phi)
        S = (Hb - z * np.eye(n)) @ Gam - np.eye(n)
    return S, S1, S2


def _compress(A, grid, inner_fraction):
    if inner_fraction is None:
        return A
    inside = np.all(np.abs(grid.points) <= inner_fraction * grid.L / 2, axis=-1)
    idx = np.flatnonzero(inside)
    return A[np.ix_(idx, idx)]


def defect(
    H: KernelOperator,
    phi: PhaseFunction,
    b: float,
    z,
    P: Optional[PartitionOfUnity],
    *,
    eps: float = 1.0,
    spectrum: Optional[Spectrum] = None,
    phase_matrix: Optional[np.ndarray] = None,
    inner_fraction: Optional[float] = None,
) -> DefectReport:
    """Norms of the defect ``S(z)`` of the glued resolvent and of its split.

    ``P`` must be built for ``|b|`` (it may be ``None`` when ``b = 0``).
    ``bound_value`` is the envelope ``|b|^{eps/2} ||H||_{1,eps} / dist(z, sigma(H))``
    without its unknown constant.  With ``inner_fraction`` the norms are
    taken on the compression to the central part of the box.
    """
    spectrum, dist = _prepare(H, phi, b, z, P, spectrum)
    S, S1, S2 = _assemble(H, phi, b, z, P, spectrum, phase_matrix)
    norms = [op_norm(_compress(A, H.grid, inner_fraction)) for A in (S, S1, S2)]
    bound = abs(b) ** (eps / 2) * sh_norm(H, eps).value / dist
    return DefectReport(float(b), complex(z), *norms, float(bound), bool(norms[0] < 1))


def defect_split(H, phi, b, z, P, *, spectrum=None, phase_matrix=None):
    """``(S1, S2)`` as kernel operators; ``S1 + S2`` equals the defect ``S``."""
    spectrum, _ = _prepare(H, phi, b, z, P, spectrum)
    _, S1, S2 = _assemble(H, phi, b, z, P, spectrum, phase_matrix, want_total=False)
    return KernelOperator.from_matrix(H.grid, S1), KernelOperator.from_matrix(H.grid, S2)


def defect_operator(H, phi, b, z, P, *, spectrum=None, phase_matrix=None) -> KernelOperator:
    """The defect ``S(z) = (H_b - z) Gamma(T(z)) - Id`` assembled directly."""
    spectrum, _ = _prepare(H, phi, b, z, P, spectrum)
    S, _, _ = _assemble(H, phi, b, z, P, spectrum, phase_matrix, want_split=False)
    return KernelOperator.from_matrix(H.grid, S)


def certify_resolvent_point(H, phi, b, z, P, **kwargs) -> Certificate:
    """Certify ``z`` in the resolvent set of ``H_b`` when ``||S(z)|| <= 1 - 1e-6``."""
    report = defect(H, phi, b, z, P, **kwargs)
    return Certificate(bool(report.norm_S <= 1 - 1e-6), 1.0 - report.norm_S, report)


DEFECT_COLUMNS = ["b", "re_z", "im_z", "norm_S", "norm_S1", "norm_S2", "bound_value", "certified", "status"]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    return format(float(v), ".17g")


def write_defect_csv(path, rows, header_lines=(), append=False):
    """Write defect rows (``DefectReport`` or ``(b, z, status)`` error tuples) to CSV.

    Lines in ``header_lines`` are emitted first as ``# key=value`` comments.
    """
    path = Path(path)
    fresh = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        if fresh:
            for line in header_lines:
                fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(DEFECT_COLUMNS)
        for row in rows:
            if isinstance(row, DefectReport):
                r = row.row()
                writer.writerow([_fmt(r[c]) for c in DEFECT_COLUMNS[:-1]] + ["ok"])
            else:
                b, z, status = row
                z = complex(z)
                writer.writerow([_fmt(b), _fmt(z.real), _fmt(z.imag)] + [""] * 5 + [status])
    return path
