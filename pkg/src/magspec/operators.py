"""Kernel operators on finite grids.

A :class:`KernelOperator` stores the values ``K(x_i, x_j)`` of an integral
kernel on the points of a :class:`Grid`.  The operator acts on grid
functions by the weighted sum ``(K psi)(x_i) = sum_j K(x_i, x_j) psi(x_j) w``
with ``w = h**dim``, so that refining ``h`` approximates the continuum
integral while ``h = 1`` recovers counting measure on a lattice.
"""

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Union

import numpy as np

__all__ = [
    "Grid",
    "KernelOperator",
    "PhaseFunction",
    "SHNormResult",
    "PhaseReport",
    "japanese_bracket",
    "sh_norm",
    "truncate",
    "uniformity_defect",
    "twist",
    "flux_defect",
    "validate_phase",
    "kernel_to_dict",
    "kernel_from_dict",
    "save_kernel",
    "load_kernel",
]

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform lattice discretizing the box ``[-L/2, L/2)**dim``.

    Points are ``-L/2 + k h`` along each axis, ``k = 0, ..., round(L/h) - 1``,
    enumerated in lexicographic order (last coordinate fastest).
    """

    dim: int
    L: float
    h: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.h > 0:
            raise ValueError(f"spacing h must be positive, got {self.h}")
        if not self.L >= 2 * self.h:
            raise ValueError(f"extent L={self.L} must be at least 2h={2 * self.h}")

    @property
    def side(self) -> int:
        return int(round(self.L / self.h))

    @property
    def n(self) -> int:
        return self.side**self.dim

    @property
    def weight(self) -> float:
        return self.h**self.dim

    @property
    def shape(self):
        return (self.side,) * self.dim

    @property
    def diameter(self) -> float:
        return self.h * (self.side - 1) * np.sqrt(self.dim)

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L / 2 + self.h * np.arange(self.side)

    @cached_property
    def points(self) -> np.ndarray:
        """``(n, dim)`` array of grid coordinates."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts.flags.writeable = False
        return pts

    @cached_property
    def distances(self) -> np.ndarray:
        """``(n, n)`` matrix of Euclidean distances ``|x_i - x_j|``."""
        diff = self.points[:, None, :] - self.points[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        dist.flags.writeable = False
        return dist


@dataclass(frozen=True, eq=False)
class KernelOperator:
    """Complex kernel ``K[i, j] = K(x_i, x_j)`` on a grid.

    ``entries`` are kernel values; :attr:`matrix` is the matrix of the
    operator acting on grid functions (kernel times the grid weight).
    """

    grid: Grid
    entries: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        n = self.grid.n
        if entries.shape != (n, n):
            raise ValueError(f"entries must have shape {(n, n)}, got {entries.shape}")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)
        if self.hermitian:
            asym = self.max_asymmetry()
            scale = np.max(np.abs(entries)) if entries.size else 0.0
            if asym > HERMITIAN_RTOL * scale:
                raise ValueError(
                    f"kernel flagged hermitian but max|K - K^*| = {asym:.3e} "
                    f"exceeds {HERMITIAN_RTOL:g} * max|K| = {HERMITIAN_RTOL * scale:.3e}"
                )

    @classmethod
    def from_matrix(cls, grid, matrix, hermitian=False):
        """Wrap an operator matrix, dividing out the grid weight."""
        return cls(grid, np.asarray(matrix) / grid.weight, hermitian)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def matrix(self) -> np.ndarray:
        return self.entries * self.grid.weight

    def max_asymmetry(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def adjoint(self):
        return KernelOperator(self.grid, self.entries.conj().T, self.hermitian)

    def _check_grid(self, other):
        if other.grid != self.grid:
            raise ValueError("operators live on different grids")

    def __add__(self, other):
        self._check_grid(other)
        return KernelOperator(
            self.grid, self.entries + other.entries, self.hermitian and other.hermitian
        )

    def __sub__(self, other):
        self._check_grid(other)
        return KernelOperator(
            self.grid, self.entries - other.entries, self.hermitian and other.hermitian
        )

    def __matmul__(self, other):
        # composition of integral operators: sum over the middle point with the measure
        self._check_grid(other)
        return KernelOperator(self.grid, self.entries @ other.entries * self.grid.weight)

    def __repr__(self):
        return (
            f"KernelOperator(dim={self.grid.dim}, L={self.grid.L}, h={self.grid.h}, "
            f"n={self.n}, hermitian={self.hermitian})"
        )


@dataclass(frozen=True)
class PhaseFunction:
    """Two-point phase ``phi(x, x')`` with flux constant ``c_phi``.

    ``evaluator`` must broadcast over leading axes: given arrays of shape
    ``(..., dim)`` it returns an array of the broadcast leading shape.  The
    flux constant is the smallest ``c`` claimed to satisfy
    ``|phi(x,y) + phi(y,x') - phi(x,x')| <= c |x - y| |y - x'|``.
    """

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    flux_constant: float
    name: str = "phi"

    def __post_init__(self):
        if self.flux_constant < 0:
            raise ValueError("flux_constant must be nonnegative")

    def __call__(self, x, xp):
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        return np.asarray(self.evaluator(x, xp), dtype=float)

    def fl(self, x, y, xp):
        """Three-point flux defect ``phi(x,y) + phi(y,x') - phi(x,x')``."""
        return self(x, y) + self(y, xp) - self(x, xp)

    def matrix(self, points, other=None, max_pairs=1 << 16):
        """Phase matrix ``phi(points[i], other[j])``, evaluated in row blocks."""
        points = np.asarray(points, dtype=float)
        other = points if other is None else np.asarray(other, dtype=float)
        out = np.empty((len(points), len(other)))
        rows = max(1, max_pairs // max(1, len(other)))
        for start in range(0, len(points), rows):
            block = points[start : start + rows]
            out[start : start + rows] = self(block[:, None, :], other[None, :, :])
        return out


@dataclass(frozen=True)
class SHNormResult:
    value: float
    alpha: float
    achieved_at: int
    axis: str  # "row" or "column"


@dataclass(frozen=True)
class PhaseReport:
    max_antisymmetry_violation: float
    max_flux_ratio: float
    flux_constant: float
    n_triples: int
    passed: bool


def japanese_bracket(r):
    """``<r> = sqrt(1 + |r|^2)`` for a distance array ``r``."""
    r = np.asarray(r, dtype=float)
    return np.sqrt(1.0 + r * r)


def sh_norm(T: KernelOperator, alpha: float = 0.0) -> SHNormResult:
    """Weighted Schur-Holmgren norm ``||T||_{1,alpha}``.

    Maximum over rows and columns of ``sum |K(x_i, x_j)| <x_i - x_j>^alpha w``.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    absk = np.abs(T.entries)
    if alpha != 0:
        absk = absk * japanese_bracket(T.grid.distances) ** alpha
    absk *= T.grid.weight
    col = absk.sum(axis=0)
    row = absk.sum(axis=1)
    jc, ir = int(np.argmax(col)), int(np.argmax(row))
    if col[jc] >= row[ir]:
        return SHNormResult(float(col[jc]), float(alpha), jc, "column")
    return SHNormResult(float(row[ir]), float(alpha), ir, "row")


def truncate(T: KernelOperator, M: float) -> KernelOperator:
    """Keep kernel entries with ``|x - x'| <= M``, zero the rest."""
    if not M > 0:
        raise ValueError(f"truncation radius M must be positive, got {M}")
    mask = T.grid.distances <= M
    return KernelOperator(T.grid, np.where(mask, T.entries, 0), T.hermitian)


def uniformity_defect(T: KernelOperator, M: float) -> float:
    """``||T - T_M||_{1,0}``, the mass of the kernel beyond distance ``M``."""
    if not M > 0:
        raise ValueError(f"truncation radius M must be positive, got {M}")
    tail = np.where(T.grid.distances > M, T.entries, 0)
    return sh_norm(KernelOperator(T.grid, tail), 0.0).value


def _phase_matrix(phi, grid):
    if isinstance(phi, PhaseFunction):
        return phi.matrix(grid.points)
    phase = np.asarray(phi, dtype=float)
    if phase.shape != (grid.n, grid.n):
        raise ValueError(f"phase matrix must have shape {(grid.n, grid.n)}")
    return phase


def twist(T: KernelOperator, phi: Union[PhaseFunction, np.ndarray], b: float) -> KernelOperator:
    """Multiply the kernel by the unimodular factor ``exp(i b phi(x, x'))``.

    ``phi`` is a :class:`PhaseFunction` or a precomputed phase matrix on
    ``T.grid`` (useful when the same phase is applied for many ``b``).
    """
    if b == 0:
        return T
    phase = _phase_matrix(phi, T.grid)
    hermitian = T.hermitian
    if hermitian:
        scale = 1.0 + np.max(np.abs(phase))
        hermitian = np.max(np.abs(phase + phase.T)) <= 1e-13 * scale
    return KernelOperator(T.grid, T.entries * np.exp(1j * b * phase), bool(hermitian))


def flux_defect(phi: PhaseFunction, x, y, xp) -> float:
    return float(phi.fl(x, y, xp))


def validate_phase(
    phi: PhaseFunction, grid: Grid, n_triples: int = 10_000, seed: int = 0
) -> PhaseReport:
    """Check antisymmetry and the flux bound of ``phi`` on grid triples.

    Grids with at most 20 points are checked exhaustively; larger grids use
    ``n_triples`` triples drawn from a seeded generator.  Triples with
    ``|x - y| |y - x'| = 0`` do not enter the flux ratio.
    """
    if n_triples < 1:
        raise ValueError("n_triples must be at least 1")
    pts = grid.points
    if grid.n <= 20:
        idx = np.array(np.meshgrid(*([np.arange(grid.n)] * 3), indexing="ij")).reshape(3, -1)
    else:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, grid.n, size=(3, n_triples))
    x, y, xp = pts[idx[0]], pts[idx[1]], pts[idx[2]]
    anti = max(
        np.max(np.abs(phi(x, y) + phi(y, x))),
        np.max(np.abs(phi(y, xp) + phi(xp, y))),
        np.max(np.abs(phi(x, xp) + phi(xp, x))),
    )
    denom = np.linalg.norm(x - y, axis=-1) * np.linalg.norm(y - xp, axis=-1)
    keep = denom > 0
    if np.any(keep):
        ratio = float(np.max(np.abs(phi.fl(x[keep], y[keep], xp[keep])) / denom[keep]))
    else:
        ratio = 0.0
    passed = anti <= 1e-12 and ratio <= phi.flux_constant + 1e-10
    return PhaseReport(float(anti), ratio, phi.flux_constant, idx.shape[1], bool(passed))


def kernel_to_dict(T: KernelOperator) -> dict:
    flat = T.entries.ravel()
    return {
        "dim": T.grid.dim,
        "L": T.grid.L,
        "h": T.grid.h,
        "hermitian": bool(T.hermitian),
        "entries": np.stack([flat.real, flat.imag], axis=-1).tolist(),
    }


def kernel_from_dict(data: dict) -> KernelOperator:
    grid = Grid(int(data["dim"]), float(data["L"]), float(data["h"]))
    pairs = np.asarray(data["entries"], dtype=float).reshape(-1, 2)
    entries = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(grid.n, grid.n)
    return KernelOperator(grid, entries, bool(data["hermitian"]))


def save_kernel(path, T: KernelOperator):
    """Write ``T`` as JSON (``.json``) or a NumPy archive (``.npz``)."""
    path = Path(path)
    if path.suffix == ".npz":
        flat = T.entries.ravel()
        np.savez(
            path,
            dim=T.grid.dim,
            L=T.grid.L,
            h=T.grid.h,
            hermitian=T.hermitian,
            entries=np.stack([flat.real, flat.imag], axis=-1),
        )
    else:
        path.write_text(json.dumps(kernel_to_dict(T)))
    return path


def load_kernel(path) -> KernelOperator:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as data:
            return kernel_from_dict({k: data[k] for k in data.files})
    return kernel_from_dict(json.loads(path.read_text()))
