"""Spectra of Hermitian kernel operators and distances between them."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonHermitianError
from .operators import HERMITIAN_RTOL, KernelOperator

__all__ = [
    "Spectrum",
    "eigvalsh",
    "hausdorff",
    "hausdorff_bruteforce",
    "spectral_distance",
    "op_norm",
    "save_spectrum",
    "load_spectrum",
]


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Sorted eigenvalues (with multiplicity) and the norm of their source."""

    values: np.ndarray
    source_norm: float = field(default=float("nan"))

    def __post_init__(self):
        vals = np.sort(np.asarray(self.values, dtype=float).ravel())
        if not np.all(np.isfinite(vals)):
            raise ValueError("spectrum values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if np.isnan(self.source_norm):
            norm = float(np.max(np.abs(vals))) if vals.size else 0.0
            object.__setattr__(self, "source_norm", norm)

    def __len__(self):
        return len(self.values)

    @property
    def min(self) -> float:
        return float(self.values[0])

    @property
    def max(self) -> float:
        return float(self.values[-1])


def eigvalsh(H: KernelOperator) -> Spectrum:
    """Eigenvalues of a Hermitian kernel operator, sorted ascending.

    Raises :class:`NonHermitianError` when ``max|K - K^*|`` exceeds
    ``1e-12 max|K|``.
    """
    asym = H.max_asymmetry()
    scale = float(np.max(np.abs(H.entries))) if H.n else 0.0
    if asym > HERMITIAN_RTOL * scale:
        raise NonHermitianError(
            f"operator is not Hermitian: max|K - K^*| = {asym:.3e} (scale {scale:.3e})",
            asym,
        )
    vals = np.linalg.eigvalsh(H.matrix)
    return Spectrum(vals, float(np.max(np.abs(vals))) if vals.size else 0.0)


def _values(S):
    return S.values if isinstance(S, Spectrum) else np.sort(np.asarray(S, dtype=float).ravel())


def _directed(a, b):
    # sup_{x in a} inf_{y in b} |x - y| for sorted a, b; the pointer into b only moves forward
    worst = 0.0
    j = 0
    nb = len(b)
    for x in a:
        while j + 1 < nb and b[j + 1] <= x:
            j += 1
        d = abs(x - b[j])
        if j + 1 < nb:
            d = min(d, abs(b[j + 1] - x))
        if d > worst:
            worst = d
    return worst


def hausdorff(A, B) -> float:
    """Hausdorff distance between two finite sets of reals.

    Both inputs are sorted, so each directed distance is one forward sweep
    with a pointer into the other list.
    """
    a, b = _values(A), _values(B)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("Hausdorff distance is undefined for an empty spectrum")
    a = a.tolist()
    b = b.tolist()
    return float(max(_directed(a, b), _directed(b, a)))


def hausdorff_bruteforce(A, B) -> float:
    a, b = _values(A), _values(B)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("Hausdorff distance is undefined for an empty spectrum")
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def spectral_distance(z, S) -> float:
    """``min |z - lambda|`` over the spectrum; ``z`` may be complex."""
    vals = _values(S)
    if len(vals) == 0:
        raise ValueError("spectral distance to an empty spectrum")
    return float(np.min(np.abs(complex(z) - vals)))


def op_norm(T) -> float:
    """L2 operator norm: square root of the top eigenvalue of ``T^* T``.

    Accepts a :class:`KernelOperator` (grid weight included) or a plain
    operator matrix.
    """
    A = T.matrix if isinstance(T, KernelOperator) else np.asarray(T)
    gram = A.conj().T @ A
    gram = 0.5 * (gram + gram.conj().T)
    top = np.linalg.eigvalsh(gram)[-1]
    return float(np.sqrt(max(top, 0.0)))


def save_spectrum(path, S: Spectrum, **metadata):
    """Write ``{"values": [...], **metadata}`` as JSON."""
    path = Path(path)
    payload = {"values": [float(v) for v in S.values]}
    payload.update(metadata)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return path


def load_spectrum(path) -> Spectrum:
    data = json.loads(Path(path).read_text())
    return Spectrum(np.asarray(data["values"], dtype=float))
