"""Model builders: magnetic fields, gauges, Harper-like and magnetic Schrödinger operators."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from .errors import ConfigError, NumericalError, PositivityError, SpectrumProximityError
from .operators import Grid, KernelOperator, PhaseFunction, twist
from .spectral import eigvalsh, spectral_distance

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "SIMPSON_PANELS",
    "INVERSE_GOLDEN_MEAN",
    "MagneticField",
    "constant_field",
    "cosine_field",
    "zero_field",
    "transverse_gauge",
    "gauge_potential",
    "line_phase",
    "field_phase",
    "signed_square_phase",
    "ModelSpec",
    "FieldSpec",
    "model_from_dict",
    "load_model_spec",
    "build_harper",
    "harper_family",
    "build_mag_schrodinger",
    "resolvent",
]

SIMPSON_PANELS = 64
INVERSE_GOLDEN_MEAN = (np.sqrt(5.0) - 1.0) / 2.0

_NODES = np.linspace(0.0, 1.0, SIMPSON_PANELS + 1)
_DX = 1.0 / SIMPSON_PANELS
# composite Simpson weights on the nodes, so each rule is a single contraction
_WEIGHTS = simpson(np.eye(SIMPSON_PANELS + 1), dx=_DX, axis=-1)


@dataclass(frozen=True, eq=False)
class MagneticField:
    """Antisymmetric field ``B_jk(x)`` with a known bound ``sup_norm``.

    ``func`` maps points of shape ``(..., dim)`` to ``(..., dim, dim)``.
    For constant fields ``constant`` holds the ``(dim, dim)`` matrix, which
    lets the transverse gauge skip quadrature.
    """

    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    sup_norm: float
    constant: Optional[np.ndarray] = None
    name: str = "B"

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def component(self, j, k, x):
        return self(x)[..., j, k]

    def plus(self, other, b=1.0):
        """The field ``self + b * other`` (e.g. ``B_0 + b frak_b``)."""
        if other.dim != self.dim:
            raise ValueError("fields of different dimension")
        const = None
        if self.constant is not None and other.constant is not None:
            const = self.constant + b * other.constant
        return MagneticField(
            self.dim,
            lambda x, f=self.func, g=other.func: f(x) + b * g(x),
            self.sup_norm + abs(b) * other.sup_norm,
            const,
            f"{self.name}+{b:g}*{other.name}",
        )

    def check(self, points):
        """Max antisymmetry violation and max ``|B_jk|`` at the given points."""
        vals = self(points)
        anti = float(np.max(np.abs(vals + np.swapaxes(vals, -1, -2)))) if vals.size else 0.0
        return anti, float(np.max(np.abs(vals))) if vals.size else 0.0


def _planar(b12):
    out = np.zeros(np.shape(b12) + (2, 2))
    out[..., 0, 1] = b12
    out[..., 1, 0] = -np.asarray(b12)
    return out


def constant_field(strength: float, dim: int = 2) -> MagneticField:
    """Uniform field with ``B_12 = strength`` (2D)."""
    if dim != 2:
        raise ValueError("constant magnetic fields are defined here for dim = 2")
    const = _planar(float(strength))
    return MagneticField(
        2,
        lambda x: np.broadcast_to(const, np.shape(x)[:-1] + (2, 2)),
        abs(float(strength)),
        const,
        f"const({strength:g})",
    )


def cosine_field(b0: float, modulation: float = 0.5, wavelength: float = 8.0) -> MagneticField:
    """``B_12(x) = b0 (1 + modulation cos(2 pi x1 / wl) cos(2 pi x2 / wl))``."""
    k = 2 * np.pi / wavelength

    def func(x):
        return _planar(b0 * (1.0 + modulation * np.cos(k * x[..., 0]) * np.cos(k * x[..., 1])))

    return MagneticField(2, func, abs(b0) * (1 + abs(modulation)), None, f"cos({b0:g})")


def zero_field(dim: int = 2) -> MagneticField:
    const = np.zeros((dim, dim))
    return MagneticField(
        dim, lambda x: np.zeros(np.shape(x)[:-1] + (dim, dim)), 0.0, const, "zero"
    )


def transverse_gauge(B: MagneticField, x) -> np.ndarray:
    """Vector potential ``A_j(x) = -sum_k int_0^1 B_jk(s x) s x_k ds``.

    The s-integral uses 64-panel composite Simpson quadrature; constant
    fields use the closed form ``A = -B x / 2``, which Simpson reproduces.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != B.dim:
        raise ValueError(f"point dimension {x.shape[-1]} does not match field dimension {B.dim}")
    if B.constant is not None:
        return -0.5 * np.einsum("jk,...k->...j", B.constant, x)
    y = _NODES[:, None] * x[..., None, :]  # (..., s, d)
    vals = B(y)  # (..., s, d, d)
    return -np.einsum("...sjk,...k,s->...j", vals, x, _NODES * _WEIGHTS, optimize=True)


def gauge_potential(B: MagneticField) -> Callable[[np.ndarray], np.ndarray]:
    """Transverse-gauge vector potential of ``B`` as a callable."""

    def A(x):
        return transverse_gauge(B, x)

    A.field = B
    return A


def line_phase(A, x, xp) -> np.ndarray:
    """``-int_x^{x'} A``, the line integral along the straight segment.

    Evaluated with 64-panel composite Simpson quadrature in the segment
    parameter; broadcasts over leading axes of ``x`` and ``xp``.
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    delta = xp - x
    y = x[..., None, :] + _NODES[:, None] * delta[..., None, :]
    vals = np.asarray(A(y))
    return -np.einsum("...tj,...j,t->...", vals, delta, _WEIGHTS, optimize=True)


def _chunked_pairs(fn, x, xp, chunk):
    x, xp = np.broadcast_arrays(np.asarray(x, float), np.asarray(xp, float))
    lead = x.shape[:-1]
    xf = x.reshape(-1, x.shape[-1])
    xpf = xp.reshape(-1, xp.shape[-1])
    out = np.empty(len(xf))
    for s in range(0, len(xf), chunk):
        out[s : s + chunk] = fn(xf[s : s + chunk], xpf[s : s + chunk])
    return out.reshape(lead)


def field_phase(B: MagneticField) -> PhaseFunction:
    """Line phase of the transverse gauge of ``B``, with ``c_phi = ||B||_inf``.

    The flux defect is the field flux through the triangle spanned by the
    three points, bounded by ``||B||_inf |x - y| |y - x'|``.
    """
    A = gauge_potential(B)
    # non-constant fields nest two quadratures, so evaluate fewer pairs at a time
    chunk = 1 << 16 if B.constant is not None else 256

    def phi(x, xp):
        return _chunked_pairs(lambda a, c: line_phase(A, a, c), x, xp, chunk)

    return PhaseFunction(phi, float(B.sup_norm), f"line_phase[{B.name}]")


def signed_square_phase(strength: float = 1.0) -> PhaseFunction:
    """1D phase ``phi(x, x') = strength (x - x') |x - x'| / 2``.

    A line carries no magnetic two-form, so every 1D line phase is a pure
    gauge.  This phase is antisymmetric and not a gauge: for monotone triples
    ``|fl| = |strength| |x - y| |y - x'|`` and otherwise it is smaller, so the
    flux bound holds with constant ``|strength|``.
    """
    s = float(strength)

    def phi(x, xp):
        d = x[..., 0] - xp[..., 0]
        return 0.5 * s * d * np.abs(d)

    return PhaseFunction(phi, abs(s), f"signed_square({s:g})")


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of a Harper-like, long-range or magnetic Schrödinger model.

    ``decay_type`` is ``"exponential"`` (``decay_rate`` is the rate ``mu``)
    or ``"power"`` (``decay_rate`` is the exponent ``p`` of ``<r>^-p``).
    The potential is ``V(x) = 2 lambda cos(2 pi sigma x_1)``.
    """

    kind: str
    grid: Grid
    J: float = 1.0
    decay_type: str = "exponential"
    decay_rate: float = 1.0
    potential_lambda: float = 1.0
    potential_sigma: float = INVERSE_GOLDEN_MEAN
    a_shift: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("harper", "longrange", "mag_schrodinger"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.decay_type not in ("exponential", "power"):
            raise ConfigError(f"unknown decay type {self.decay_type!r}")
        if self.decay_type == "exponential" and not self.decay_rate > 0:
            raise ConfigError(f"exponential decay rate must be positive, got {self.decay_rate}")
        if self.decay_type == "power" and not self.decay_rate > self.grid.dim:
            raise ConfigError(
                f"power-law exponent p={self.decay_rate} must exceed dim={self.grid.dim}"
            )
        if self.kind == "harper" and self.decay_type != "exponential":
            raise ConfigError("kind 'harper' uses exponential decay; use 'longrange' for power laws")
        if self.kind == "longrange" and self.decay_type != "power":
            raise ConfigError("kind 'longrange' uses power-law decay")
        if self.kind == "mag_schrodinger":
            if self.grid.dim != 2:
                raise ConfigError("magnetic Schrödinger models are two-dimensional")
            if self.a_shift is None or not self.a_shift > 0:
                raise ConfigError("magnetic Schrödinger models need a positive a_shift")

    @property
    def alpha(self) -> float:
        """Decay exponent alpha with ``||H||_{1,alpha} < inf`` in the continuum.

        Exponential decay allows every alpha; the value is capped at 1, the
        largest exponent the Hölder bound uses.
        """
        if self.decay_type == "exponential":
            return 1.0
        return self.decay_rate - self.grid.dim - 0.01

    @property
    def epsilon(self) -> float:
        return min(self.alpha, 1.0)

    def decay(self, r):
        r = np.asarray(r, dtype=float)
        if self.decay_type == "exponential":
            return np.exp(-self.decay_rate * r)
        return (1.0 + r * r) ** (-self.decay_rate / 2)

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return 2 * self.potential_lambda * np.cos(2 * np.pi * self.potential_sigma * x[..., 0])


@dataclass(frozen=True)
class FieldSpec:
    """Field block of a model config.

    ``type`` is one of ``"constant"``, ``"cosine"`` (2D) or
    ``"signed_square"`` (1D).  ``b0`` is the base intensity and ``db`` the
    strength of the perturbation profile that ``b`` multiplies.
    """

    type: str = "constant"
    b0: float = 0.0
    db: float = 1.0
    modulation: float = 0.5
    wavelength: float = 8.0

    def __post_init__(self):
        if self.type not in ("constant", "cosine", "signed_square", "none"):
            raise ConfigError(f"unknown field type {self.type!r}")

    def base_field(self, dim: int) -> Optional[MagneticField]:
        if dim == 1:
            return None
        if self.type == "cosine":
            return cosine_field(self.b0, self.modulation, self.wavelength)
        if self.type == "none":
            return zero_field(dim)
        if self.type == "signed_square":
            raise ConfigError("field type 'signed_square' is one-dimensional")
        return constant_field(self.b0)

    def perturbation(self, dim: int) -> Optional[MagneticField]:
        if dim == 1:
            return None
        if self.type == "none":
            return zero_field(dim)
        return constant_field(self.db)

    def base_phase(self, dim: int) -> PhaseFunction:
        if dim == 1:
            return signed_square_phase(self.b0 if self.type == "signed_square" else 0.0)
        return field_phase(self.base_field(dim))

    def phase(self, dim: int) -> PhaseFunction:
        """Phase multiplied by ``b`` in the Harper-like family."""
        if dim == 1:
            if self.type not in ("signed_square", "none"):
                raise ConfigError(
                    f"field type {self.type!r} needs dim = 2; one-dimensional models "
                    "use 'signed_square'"
                )
            return signed_square_phase(self.db if self.type == "signed_square" else 0.0)
        return field_phase(self.perturbation(dim))


def model_from_dict(data: dict):
    """Build ``(ModelSpec, FieldSpec)`` from a nested config mapping."""
    try:
        decay = data.get("decay", {})
        potential = data.get("potential", {})
        fld = data.get("field", {})
        grid = Grid(int(data["dim"]), float(data["L"]), float(data.get("h", 1.0)))
        a_shift = data.get("a_shift")
        spec = ModelSpec(
            kind=str(data["kind"]),
            grid=grid,
            J=float(data.get("J", 1.0)),
            decay_type=str(decay.get("type", "exponential")),
            decay_rate=float(decay.get("rate", 1.0)),
            potential_lambda=float(potential.get("lambda", 1.0)),
            potential_sigma=float(potential.get("sigma", INVERSE_GOLDEN_MEAN)),
            a_shift=None if a_shift is None else float(a_shift),
        )
        fspec = FieldSpec(
            type=str(fld.get("type", "signed_square" if grid.dim == 1 else "constant")),
            b0=float(fld.get("b0", 0.0)),
            db=float(fld.get("db", 1.0)),
            modulation=float(fld.get("modulation", 0.5)),
            wavelength=float(fld.get("wavelength", 8.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing model key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid model config: {exc}") from None
    return spec, fspec


def load_model_spec(path):
    """Read ``(ModelSpec, FieldSpec)`` from a TOML or JSON file.

    Model keys may sit at top level or under a ``[model]`` table; the field
    block is ``[field]`` at either level.
    """
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    model = dict(data.get("model", data))
    if "field" in data and "field" not in model:
        model["field"] = data["field"]
    return model_from_dict(model)


def _harper_entries(spec: ModelSpec):
    grid = spec.grid
    entries = spec.J * spec.decay(grid.distances)
    # V acts by multiplication, so its kernel diagonal carries 1/weight
    np.fill_diagonal(entries, spec.potential(grid.points) / grid.weight)
    return entries.astype(complex)


def build_harper(spec: ModelSpec, B: Optional[MagneticField] = None, *, phase=None, b=0.0):
    """Long-range hopping Hamiltonian and the phase of its Harper-like family.

    Returns ``(H, phi)`` with ``H[i, j] = J decay(|x_i - x_j|)`` off the
    diagonal and ``V(x_i)`` on the diagonal of the operator matrix; ``phi`` is the line phase of the
    transverse gauge of ``B`` (or ``phase`` when given; the 1D default is
    :func:`signed_square_phase`).  With ``b != 0`` the Peierls factors
    ``exp(i b phi)`` are built into ``H`` directly.
    """
    if spec.kind not in ("harper", "longrange"):
        raise ConfigError(f"build_harper needs kind 'harper' or 'longrange', got {spec.kind!r}")
    if spec.decay_type == "power" and spec.decay_rate <= spec.grid.dim:
        raise ConfigError("power-law exponent must exceed the dimension")
    if phase is None:
        if B is not None:
            phase = field_phase(B)
        elif spec.grid.dim == 1:
            phase = signed_square_phase(1.0)
        else:
            raise ConfigError("a two-dimensional Harper model needs a magnetic field")
    entries = _harper_entries(spec)
    if b != 0:
        entries = entries * np.exp(1j * b * phase.matrix(spec.grid.points))
    return KernelOperator(spec.grid, entries, hermitian=True), phase


def harper_family(spec: ModelSpec, fspec: FieldSpec):
    """``(H_{b0}, phi)``: the envelope twisted to base intensity ``b0`` and the perturbation phase."""
    dim = spec.grid.dim
    phase = fspec.phase(dim)
    H, _ = build_harper(spec, phase=phase)
    if fspec.b0 != 0 and fspec.type != "none":
        H = twist(H, fspec.base_phase(dim), 1.0)
    return H, phase


def _bonds(grid: Grid):
    side = grid.side
    idx = np.arange(grid.n).reshape(side, side)
    right = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=-1)
    up = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=-1)
    return np.concatenate([right, up])


def build_mag_schrodinger(
    spec: ModelSpec,
    B: MagneticField,
    a_shift: Optional[float] = None,
    *,
    vector_potential=None,
) -> KernelOperator:
    """Five-point magnetic Laplacian with Peierls bond phases, plus ``V + a_shift``.

    Bond ``x -> x'`` carries ``-exp(-i int_x^{x'} A) / h^2`` with ``A`` the
    transverse gauge of ``B`` unless ``vector_potential`` is given.
    Dirichlet truncation at the box.  Raises :class:`PositivityError` when
    the result is not positive definite.
    """
    grid = spec.grid
    if grid.dim != 2:
        raise ConfigError("magnetic Schrödinger models are two-dimensional")
    a_shift = spec.a_shift if a_shift is None else a_shift
    if a_shift is None:
        raise ConfigError("a_shift is required")
    A = gauge_potential(B) if vector_potential is None else vector_potential
    pts = grid.points
    bonds = _bonds(grid)
    phases = line_phase(A, pts[bonds[:, 0]], pts[bonds[:, 1]])
    h2 = grid.h**2
    M = np.zeros((grid.n, grid.n), dtype=complex)
    hop = -np.exp(1j * phases) / h2
    M[bonds[:, 0], bonds[:, 1]] = hop
    M[bonds[:, 1], bonds[:, 0]] = hop.conj()
    M[np.diag_indices(grid.n)] = 4.0 / h2 + spec.potential(pts) + a_shift
    lo = float(np.linalg.eigvalsh(M)[0])
    if lo <= 0:
        raise PositivityError(
            f"shifted Hamiltonian is not positive: smallest eigenvalue {lo:.6g} "
            f"(a_shift={a_shift:g} too small)",
            lo,
        )
    return KernelOperator.from_matrix(grid, M, hermitian=True)


def resolvent(H: KernelOperator, z, spectrum=None) -> KernelOperator:
    """Dense resolvent ``(H - z)^{-1}`` as a kernel operator.

    Requires ``dist(z, sigma(H)) > 1e-8 ||H||`` for Hermitian ``H`` and
    verifies ``max|(H - z) R - Id| <= 1e-9`` before returning.
    """
    z = complex(z)
    A = H.matrix
    if H.hermitian:
        spec = eigvalsh(H) if spectrum is None else spectrum
        dist = spectral_distance(z, spec)
        if not dist > 1e-8 * max(spec.source_norm, 1.0):
            raise SpectrumProximityError(
                f"z={z} lies within {dist:.3e} of the spectrum", dist
            )
    shifted = A - z * np.eye(H.n)
    R = np.linalg.solve(shifted, np.eye(H.n))
    hermitian = H.hermitian and z.imag == 0
    if hermitian:
        R = 0.5 * (R + R.conj().T)
    residual = float(np.max(np.abs(shifted @ R - np.eye(H.n))))
    if residual > 1e-9:
        raise NumericalError(f"resolvent solve is near-singular: residual {residual:.3e}")
    return KernelOperator.from_matrix(H.grid, R, hermitian=hermitian)
